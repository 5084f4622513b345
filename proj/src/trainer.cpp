#include "nncert/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "nncert/error.hpp"
#include "nncert/io.hpp"
#include "nncert/kernels.hpp"

namespace nncert {

void Dataset::validate() const {
  const std::size_t s = size();
  if (targets.rows() != s) throw Error(ErrorKind::DimensionMismatch, "dataset: inputs and targets differ in row count");
  if (input_dim() == 0 || output_dim() == 0) throw Error(ErrorKind::InvalidValue, "dataset: empty dimension");
  for (double v : inputs.storage())
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidValue, "dataset: input outside [0,1]");
  for (double v : targets.storage())
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidValue, "dataset: non-finite target");
  std::vector<char> seen(s, 0);
  for (const auto* part : {&train, &test})
    for (std::size_t i : *part) {
      if (i >= s) throw Error(ErrorKind::Index, "dataset: split index out of range");
      if (seen[i]++) throw Error(ErrorKind::InvalidValue, "dataset: row in both splits or repeated");
    }
  if (train.size() + test.size() != s) throw Error(ErrorKind::InvalidValue, "dataset: splits do not cover every row");
}

void TrainConfig::validate() const {
  if (widths.empty()) throw Error(ErrorKind::InvalidArg, "train: need at least one hidden layer");
  for (auto w : widths)
    if (w == 0) throw Error(ErrorKind::InvalidArg, "train: zero layer width");
  if (batch_size < 2) throw Error(ErrorKind::InvalidArg, "train: batch size must be >= 2");
  if (!(eta >= 0.0 && eta < 1.0)) throw Error(ErrorKind::InvalidArg, "train: eta must lie in [0,1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorKind::InvalidArg, "train: learning rate must be positive");
  if (!(bn_eps > 0.0)) throw Error(ErrorKind::InvalidArg, "train: bn_eps must be positive");
  if (!(data_noise >= 0.0)) throw Error(ErrorKind::InvalidArg, "train: negative noise");
}

// ---------------------------------------------------------------------------

Dataset gen_synthetic(std::size_t n0, std::size_t m, std::size_t s, double noise,
                      std::uint64_t seed) {
  if (s < 10 || n0 < 1 || m < 1 || !(noise >= 0.0) || !std::isfinite(noise))
    throw Error(ErrorKind::InvalidArg, "gen_synthetic: need s >= 10, n0 >= 1, m >= 1, noise >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto sym = [&](double r) { return r * (2.0 * u(rng) - 1.0); };

  constexpr std::size_t width = 8;
  FoldedNetwork g;
  g.input_dim = n0;
  g.layers.resize(2);
  g.layers[0].a = Matrix(width, n0);
  g.layers[0].c.resize(width);
  for (std::size_t r = 0; r < width; ++r) {
    for (std::size_t j = 0; j < n0; ++j) g.layers[0].a(r, j) = sym(1.0);
    g.layers[0].c[r] = sym(0.5);
  }
  g.layers[1].a = Matrix(m, width);
  g.layers[1].c.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < width; ++j) g.layers[1].a(r, j) = sym(1.0 / std::sqrt(double(width)));
    g.layers[1].c[r] = sym(0.1);
  }
  for (std::size_t i = 0; i < m; ++i) g.output_names.push_back("x_" + std::to_string(i + 1));

  Dataset ds;
  Matrix clean(s, n0);
  for (double& v : std::span(clean.data(), s * n0)) v = u(rng);
  ds.inputs = Matrix(s, n0);
  for (std::size_t i = 0; i < s * n0; ++i) {
    // Drawn even when noise is 0 so the stream does not depend on it.
    double e = noise * (2.0 * u(rng) - 1.0);
    ds.inputs.data()[i] = std::clamp(clean.data()[i] + e, 0.0, 1.0);
  }
  ds.targets = Matrix(s, m);
  for (std::size_t i = 0; i < s; ++i) {
    Vector x = forward(g, clean.row(i));
    std::copy(x.begin(), x.end(), ds.targets.row(i).begin());
  }

  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t ntrain = (4 * s) / 5;
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ntrain));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(ntrain), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  ds.clean_inputs = std::move(clean);
  ds.truth = std::move(g);
  return ds;
}

BnLayerStats update_bn_stats(const BnLayerStats& stats, const Matrix& batch, double eta) {
  const std::size_t b = batch.rows(), n = batch.cols();
  if (b < 2) throw Error(ErrorKind::InvalidArg, "update_bn_stats: batch needs at least 2 rows");
  if (stats.mu.size() != n || stats.var.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "update_bn_stats: width mismatch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(ErrorKind::InvalidArg, "update_bn_stats: eta outside [0,1]");
  BnLayerStats out = stats;
  for (std::size_t c = 0; c < n; ++c) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      s1 += batch(r, c);
      s2 += batch(r, c) * batch(r, c);
    }
    const double mean = s1 / double(b);
    const double var = std::max(s2 / double(b) - mean * mean, 0.0);
    out.mu[c] = eta * stats.mu[c] + (1.0 - eta) * mean;
    out.var[c] = eta * stats.var[c] + (1.0 - eta) * var;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Layer {
  Matrix w;
  Vector b;
  Vector gamma, beta;
  BnLayerStats run;
  // per-batch cache
  Matrix pre, post, xhat, out;
  Vector mean, inv_std;
};

double mean_loss(const Matrix& out, const Matrix& tgt) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.storage().size(); ++i) {
    double d = out.data()[i] - tgt.data()[i];
    s += d * d;
  }
  return s / double(out.storage().size());
}

}  // namespace

NetworkSpec train(const Dataset& ds, const TrainConfig& cfg, TrainDiagnostics* diag) {
  ds.validate();
  cfg.validate();
  if (ds.train.size() < 2) throw Error(ErrorKind::InvalidArg, "train: need at least 2 training rows");
  const std::size_t n0 = ds.input_dim(), m = ds.output_dim();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<Layer> layers(cfg.widths.size());
  std::size_t fan_in = n0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& L = layers[k];
    const std::size_t w = cfg.widths[k];
    const double r = 1.0 / std::sqrt(double(fan_in));
    L.w = Matrix(w, fan_in);
    for (double& v : std::span(L.w.data(), w * fan_in)) v = r * (2.0 * u(rng) - 1.0);
    L.b.resize(w);
    for (double& v : L.b) v = r * (2.0 * u(rng) - 1.0);
    L.gamma.assign(w, 1.0);
    L.beta.assign(w, 0.0);
    L.run.mu.assign(w, 0.0);
    L.run.var.assign(w, 1.0);
    fan_in = w;
  }
  Matrix wo(m, fan_in);
  Vector bo(m);
  {
    const double r = 1.0 / std::sqrt(double(fan_in));
    for (double& v : std::span(wo.data(), m * fan_in)) v = r * (2.0 * u(rng) - 1.0);
    for (double& v : bo) v = r * (2.0 * u(rng) - 1.0);
  }

  std::vector<std::size_t> order = ds.train;
  const double lr = cfg.learning_rate;
  TrainDiagnostics local;
  TrainDiagnostics& dg = diag ? *diag : local;
  dg = {};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
      if (bsz < 2) continue;  // variance undefined
      Matrix in(bsz, n0), tgt(bsz, m);
      for (std::size_t r = 0; r < bsz; ++r) {
        auto src = ds.inputs.row(order[start + r]);
        std::copy(src.begin(), src.end(), in.row(r).begin());
        auto t = ds.targets.row(order[start + r]);
        std::copy(t.begin(), t.end(), tgt.row(r).begin());
      }

      // Forward in training mode.
      const Matrix* h = &in;
      for (auto& L : layers) {
        const std::size_t w = L.b.size();
        L.pre = Matrix(bsz, w);
        for (std::size_t r = 0; r < bsz; ++r)
          kernels::affine(L.w, h->row(r), L.b, L.pre.row(r));
        L.post = L.pre;
        kernels::relu(std::span(L.post.data(), bsz * w));
        L.run = update_bn_stats(L.run, L.post, cfg.eta);
        L.mean.assign(w, 0.0);
        L.inv_std.assign(w, 0.0);
        L.xhat = Matrix(bsz, w);
        L.out = Matrix(bsz, w);
        for (std::size_t c = 0; c < w; ++c) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t r = 0; r < bsz; ++r) {
            s1 += L.post(r, c);
            s2 += L.post(r, c) * L.post(r, c);
          }
          const double mean = s1 / double(bsz);
          const double var = std::max(s2 / double(bsz) - mean * mean, 0.0);
          L.mean[c] = mean;
          L.inv_std[c] = 1.0 / std::sqrt(var + cfg.bn_eps);
          for (std::size_t r = 0; r < bsz; ++r) {
            L.xhat(r, c) = (L.post(r, c) - mean) * L.inv_std[c];
            L.out(r, c) = L.gamma[c] * L.xhat(r, c) + L.beta[c];
          }
        }
        h = &L.out;
      }
      Matrix out(bsz, m);
      for (std::size_t r = 0; r < bsz; ++r) kernels::affine(wo, h->row(r), bo, out.row(r));

      const double loss = mean_loss(out, tgt);
      if (!std::isfinite(loss))
        throw Error(ErrorKind::Divergence, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                                ", batch starting at " + std::to_string(start) +
                                                "; lower the learning rate");
      loss_sum += loss;
      ++batches;
      ++dg.steps;

      // Backward.
      Matrix dout(bsz, m);
      const double k2 = 2.0 / double(bsz * m);
      for (std::size_t i = 0; i < bsz * m; ++i) dout.data()[i] = k2 * (out.data()[i] - tgt.data()[i]);

      Matrix dh(bsz, h->cols());
      for (std::size_t r = 0; r < bsz; ++r)
        for (std::size_t o = 0; o < m; ++o) kernels::axpy(dout(r, o), wo.row(o), dh.row(r));
      for (std::size_t o = 0; o < m; ++o) {
        double gb = 0.0;
        for (std::size_t r = 0; r < bsz; ++r) {
          kernels::axpy(-lr * dout(r, o), h->row(r), wo.row(o));
          gb += dout(r, o);
        }
        bo[o] -= lr * gb;
      }

      for (std::size_t k = layers.size(); k-- > 0;) {
        auto& L = layers[k];
        const std::size_t w = L.b.size();
        const Matrix& hin = k == 0 ? in : layers[k - 1].out;
        Matrix da(bsz, w);
        for (std::size_t c = 0; c < w; ++c) {
          double dgam = 0.0, dbet = 0.0, sum_dx = 0.0, sum_dx_x = 0.0;
          for (std::size_t r = 0; r < bsz; ++r) {
            const double dy = dh(r, c);
            dgam += dy * L.xhat(r, c);
            dbet += dy;
            const double dx = dy * L.gamma[c];
            sum_dx += dx;
            sum_dx_x += dx * L.xhat(r, c);
          }
          for (std::size_t r = 0; r < bsz; ++r) {
            const double dx = dh(r, c) * L.gamma[c];
            const double dr = L.inv_std[c] / double(bsz) *
                              (double(bsz) * dx - sum_dx - L.xhat(r, c) * sum_dx_x);
            da(r, c) = L.pre(r, c) > 0.0 ? dr : 0.0;
          }
          L.gamma[c] -= lr * dgam;
          L.beta[c] -= lr * dbet;
        }
        Matrix dprev(bsz, hin.cols());
        if (k > 0)
          for (std::size_t r = 0; r < bsz; ++r)
            for (std::size_t c = 0; c < w; ++c) kernels::axpy(da(r, c), L.w.row(c), dprev.row(r));
        for (std::size_t c = 0; c < w; ++c) {
          double gb = 0.0;
          for (std::size_t r = 0; r < bsz; ++r) {
            kernels::axpy(-lr * da(r, c), hin.row(r), L.w.row(c));
            gb += da(r, c);
          }
          L.b[c] -= lr * gb;
        }
        dh = std::move(dprev);
      }

      dg.last_batch_activations.clear();
      for (const auto& L : layers) dg.last_batch_activations.push_back(L.post);
    }
    dg.epoch_loss.push_back(batches ? loss_sum / double(batches) : 0.0);
  }

  std::vector<HiddenLayer> hidden;
  for (auto& L : layers) {
    HiddenLayer hl;
    hl.w = L.w;
    hl.b = L.b;
    hl.bn.gamma = L.gamma;
    hl.bn.beta = L.beta;
    hl.bn.mu = L.run.mu;
    hl.bn.var = L.run.var;
    hl.bn.eps = cfg.bn_eps;
    hidden.push_back(std::move(hl));
  }
  NetworkSpec spec = make_spec(n0, std::move(hidden), OutputLayer{wo, bo});
  for (double v : wo.storage())
    if (!std::isfinite(v)) throw Error(ErrorKind::Divergence, "train: non-finite weights");
  dg.final_train_mse = mse(fold_bn(spec), ds, Split::Train);
  if (!std::isfinite(dg.final_train_mse)) throw Error(ErrorKind::Divergence, "train: non-finite final loss");
  return spec;
}

Vector evaluate(const FoldedNetwork& net, const Dataset& ds, Split split) {
  if (net.input_dim != ds.input_dim() || net.output_dim() != ds.output_dim())
    throw Error(ErrorKind::DimensionMismatch, "evaluate: network and dataset dimensions differ");
  Vector t(ds.output_dim(), 0.0);
  for (std::size_t i : ds.rows(split)) {
    Vector x = forward(net, ds.inputs.row(i));
    for (std::size_t o = 0; o < t.size(); ++o) t[o] = std::max(t[o], std::abs(x[o] - ds.targets(i, o)));
  }
  return t;
}

double mse(const FoldedNetwork& net, const Dataset& ds, Split split) {
  if (net.input_dim != ds.input_dim() || net.output_dim() != ds.output_dim())
    throw Error(ErrorKind::DimensionMismatch, "mse: network and dataset dimensions differ");
  const auto& rows = ds.rows(split);
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i : rows) {
    Vector x = forward(net, ds.inputs.row(i));
    for (std::size_t o = 0; o < x.size(); ++o) s += (x[o] - ds.targets(i, o)) * (x[o] - ds.targets(i, o));
  }
  return s / double(rows.size() * ds.output_dim());
}

// ---------------------------------------------------------------------------
// CSV

std::string save_dataset_csv(const Dataset& ds) {
  ds.validate();
  std::vector<char> is_test(ds.size(), 0);
  for (std::size_t i : ds.test) is_test[i] = 1;
  std::ostringstream out;
  for (std::size_t j = 0; j < ds.input_dim(); ++j) out << "z_" << j + 1 << ',';
  for (std::size_t o = 0; o < ds.output_dim(); ++o) out << "x_" << o + 1 << ',';
  out << "split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.inputs.row(i)) out << format_double(v) << ',';
    for (double v : ds.targets.row(i)) out << format_double(v) << ',';
    out << (is_test[i] ? "test" : "train") << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw Error(ErrorKind::Parse, "dataset line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

Dataset load_dataset_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "dataset: empty file");
  auto header = split_csv(line);
  std::size_t n0 = 0, m = 0;
  while (n0 < header.size() && header[n0] == "z_" + std::to_string(n0 + 1)) ++n0;
  while (n0 + m < header.size() && header[n0 + m] == "x_" + std::to_string(m + 1)) ++m;
  if (n0 == 0 || m == 0 || n0 + m + 1 != header.size() || header.back() != "split")
    throw Error(ErrorKind::Parse, "dataset: header must be z_1..z_N,x_1..x_M,split");

  std::vector<double> zin, xin;
  Dataset ds;
  std::size_t row = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::Parse, "dataset line " + std::to_string(lineno) + ": wrong column count");
    for (std::size_t j = 0; j < n0; ++j) zin.push_back(parse_number(cells[j], lineno));
    for (std::size_t o = 0; o < m; ++o) xin.push_back(parse_number(cells[n0 + o], lineno));
    if (cells.back() == "train") ds.train.push_back(row);
    else if (cells.back() == "test") ds.test.push_back(row);
    else throw Error(ErrorKind::Parse, "dataset line " + std::to_string(lineno) + ": split must be train or test");
    ++row;
  }
  ds.inputs = Matrix(row, n0);
  ds.targets = Matrix(row, m);
  std::copy(zin.begin(), zin.end(), ds.inputs.data());
  std::copy(xin.begin(), xin.end(), ds.targets.data());
  ds.validate();
  return ds;
}

void save_dataset_file(const Dataset& ds, const std::string& path) { write_file(path, save_dataset_csv(ds)); }

Dataset load_dataset_file(const std::string& path) { return load_dataset_csv(read_file(path)); }

TrainConfig parse_train_config(std::string_view json_text, TrainConfig cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Parse, "train config must be a JSON object");
  try {
    if (j.contains("widths")) cfg.widths = j["widths"].get<std::vector<std::size_t>>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("eta")) cfg.eta = j["eta"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("bn_eps")) cfg.bn_eps = j["bn_eps"].get<double>();
    if (j.contains("data_noise")) cfg.data_noise = j["data_noise"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace nncert
