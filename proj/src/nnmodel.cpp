#include "nncert/nnmodel.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "nncert/error.hpp"
#include "nncert/io.hpp"
#include "nncert/kernels.hpp"

namespace nncert {

using nlohmann::json;

namespace {

void require(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) throw Error(kind, msg);
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_bn(const BatchNormParams& bn, std::size_t width, std::size_t k) {
  const std::string where = "hidden[" + std::to_string(k) + "].bn";
  require(bn.gamma.size() == width && bn.beta.size() == width && bn.mu.size() == width &&
              bn.var.size() == width,
          ErrorKind::DimensionMismatch, where + " vectors must have the layer width");
  require(all_finite(bn.gamma) && all_finite(bn.beta) && all_finite(bn.mu) && all_finite(bn.var),
          ErrorKind::InvalidValue, where + " has a non-finite entry");
  for (double v : bn.var) require(v >= 0.0, ErrorKind::InvalidValue, where + ".var must be >= 0");
  require(std::isfinite(bn.eps) && bn.eps > 0.0, ErrorKind::InvalidValue,
          where + ".eps must be > 0");
}

}  // namespace

void validate(const NetworkSpec& spec) {
  require(spec.input_dim > 0, ErrorKind::DimensionMismatch, "input_dim must be positive");
  std::size_t prev = spec.input_dim;
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
    const auto& layer = spec.hidden[k];
    const std::string where = "hidden[" + std::to_string(k) + "]";
    require(layer.w.rows() > 0, ErrorKind::DimensionMismatch, where + " has zero width");
    require(layer.w.cols() == prev, ErrorKind::DimensionMismatch,
            where + ".W has " + std::to_string(layer.w.cols()) + " columns, expected " +
                std::to_string(prev));
    require(layer.b.size() == layer.w.rows(), ErrorKind::DimensionMismatch,
            where + ".b length differs from the row count of W");
    require(all_finite(layer.w.storage()) && all_finite(layer.b), ErrorKind::InvalidValue,
            where + " has a non-finite weight");
    check_bn(layer.bn, layer.w.rows(), k);
    prev = layer.w.rows();
  }
  require(spec.output.w.rows() > 0, ErrorKind::DimensionMismatch, "output layer has no rows");
  require(spec.output.w.cols() == prev, ErrorKind::DimensionMismatch,
          "output.W has " + std::to_string(spec.output.w.cols()) + " columns, expected " +
              std::to_string(prev));
  require(spec.output.b.size() == spec.output.w.rows(), ErrorKind::DimensionMismatch,
          "output.b length differs from the row count of W");
  require(all_finite(spec.output.w.storage()) && all_finite(spec.output.b),
          ErrorKind::InvalidValue, "output layer has a non-finite weight");
  require(spec.input_norm.size() == spec.input_dim, ErrorKind::DimensionMismatch,
          "input_norm needs one range per input");
  for (const auto& r : spec.input_norm) {
    require(std::isfinite(r.lo) && std::isfinite(r.hi), ErrorKind::InvalidValue,
            "input_norm has a non-finite bound");
    require(r.hi > r.lo, ErrorKind::InvalidValue, "input_norm requires hi > lo");
  }
  require(spec.output_names.size() == spec.output.w.rows(), ErrorKind::DimensionMismatch,
          "output_names needs one label per output");
}

void validate(const FoldedNetwork& net) {
  require(net.input_dim > 0 && !net.layers.empty(), ErrorKind::DimensionMismatch,
          "folded network is empty");
  std::size_t prev = net.input_dim;
  for (const auto& layer : net.layers) {
    require(layer.a.cols() == prev && layer.a.rows() == layer.c.size() && layer.a.rows() > 0,
            ErrorKind::DimensionMismatch, "folded layer dimensions do not chain");
    prev = layer.a.rows();
  }
  require(net.output_names.empty() || net.output_names.size() == prev,
          ErrorKind::DimensionMismatch, "output_names needs one label per output");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Vector read_vector(const json& j, const std::string& where) {
  require(j.is_array(), ErrorKind::Parse, where + " must be an array");
  Vector v;
  v.reserve(j.size());
  for (const auto& e : j) {
    require(e.is_number(), ErrorKind::Parse, where + " must hold numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

Matrix read_matrix(const json& j, const std::string& where) {
  require(j.is_array(), ErrorKind::Parse, where + " must be an array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  if (rows > 0) {
    require(j[0].is_array(), ErrorKind::Parse, where + " rows must be arrays");
    cols = j[0].size();
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    Vector row = read_vector(j[r], where + "[" + std::to_string(r) + "]");
    require(row.size() == cols, ErrorKind::DimensionMismatch, where + " is ragged");
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  require(it != obj.end(), ErrorKind::Parse, where + " is missing \"" + key + "\"");
  return *it;
}

std::string num(double v) { return format_double(v); }

void write_vector(std::ostringstream& out, std::span<const double> v) {
  out << '[';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << num(v[i]);
  out << ']';
}

void write_matrix(std::ostringstream& out, const Matrix& m, const char* indent) {
  out << '[';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << (r ? ",\n" : "\n") << indent;
    write_vector(out, m.row(r));
  }
  out << ']';
}

}  // namespace

NetworkSpec load_network(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
  require(doc.is_object(), ErrorKind::Parse, "network document must be an object");

  NetworkSpec spec;
  try {
    const json& dim = field(doc, "input_dim", "network");
    require(dim.is_number_integer() && dim.get<long long>() > 0, ErrorKind::Parse,
            "input_dim must be a positive integer");
    spec.input_dim = dim.get<std::size_t>();

    const json& hidden = field(doc, "hidden", "network");
    require(hidden.is_array(), ErrorKind::Parse, "hidden must be an array");
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      const std::string where = "hidden[" + std::to_string(k) + "]";
      const json& h = hidden[k];
      require(h.is_object(), ErrorKind::Parse, where + " must be an object");
      HiddenLayer layer;
      layer.w = read_matrix(field(h, "W", where), where + ".W");
      layer.b = read_vector(field(h, "b", where), where + ".b");
      const json& bn = field(h, "bn", where);
      require(bn.is_object(), ErrorKind::Parse, where + ".bn must be an object");
      layer.bn.gamma = read_vector(field(bn, "gamma", where + ".bn"), where + ".bn.gamma");
      layer.bn.beta = read_vector(field(bn, "beta", where + ".bn"), where + ".bn.beta");
      layer.bn.mu = read_vector(field(bn, "mu", where + ".bn"), where + ".bn.mu");
      layer.bn.var = read_vector(field(bn, "var", where + ".bn"), where + ".bn.var");
      const json& eps = field(bn, "eps", where + ".bn");
      require(eps.is_number(), ErrorKind::Parse, where + ".bn.eps must be a number");
      layer.bn.eps = eps.get<double>();
      spec.hidden.push_back(std::move(layer));
    }

    const json& out = field(doc, "output", "network");
    require(out.is_object(), ErrorKind::Parse, "output must be an object");
    spec.output.w = read_matrix(field(out, "W", "output"), "output.W");
    spec.output.b = read_vector(field(out, "b", "output"), "output.b");

    if (auto it = doc.find("input_norm"); it != doc.end()) {
      require(it->is_array(), ErrorKind::Parse, "input_norm must be an array");
      for (const auto& r : *it) {
        require(r.is_object(), ErrorKind::Parse, "input_norm entries must be objects");
        const json& lo = field(r, "lo", "input_norm");
        const json& hi = field(r, "hi", "input_norm");
        require(lo.is_number() && hi.is_number(), ErrorKind::Parse,
                "input_norm bounds must be numbers");
        spec.input_norm.push_back({lo.get<double>(), hi.get<double>()});
      }
    } else {
      spec.input_norm.assign(spec.input_dim, InputRange{});
    }

    if (auto it = doc.find("output_names"); it != doc.end()) {
      require(it->is_array(), ErrorKind::Parse, "output_names must be an array");
      for (const auto& n : *it) {
        require(n.is_string(), ErrorKind::Parse, "output_names must hold strings");
        spec.output_names.push_back(n.get<std::string>());
      }
    } else {
      for (std::size_t i = 0; i < spec.output.w.rows(); ++i)
        spec.output_names.push_back("x_" + std::to_string(i + 1));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }

  validate(spec);
  return spec;
}

NetworkSpec load_network_file(const std::string& path) { return load_network(read_file(path)); }

std::string save_network(const NetworkSpec& spec) {
  validate(spec);
  std::ostringstream out;
  out << "{\n  \"input_dim\": " << spec.input_dim << ",\n  \"output_names\": [";
  for (std::size_t i = 0; i < spec.output_names.size(); ++i)
    out << (i ? ", " : "") << json(spec.output_names[i]).dump();
  out << "],\n  \"input_norm\": [";
  for (std::size_t j = 0; j < spec.input_norm.size(); ++j)
    out << (j ? ", " : "") << "{\"lo\": " << num(spec.input_norm[j].lo)
        << ", \"hi\": " << num(spec.input_norm[j].hi) << '}';
  out << "],\n  \"hidden\": [";
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
    const auto& h = spec.hidden[k];
    out << (k ? ",\n" : "\n") << "    {\n      \"W\": ";
    write_matrix(out, h.w, "        ");
    out << ",\n      \"b\": ";
    write_vector(out, h.b);
    out << ",\n      \"bn\": {\n        \"gamma\": ";
    write_vector(out, h.bn.gamma);
    out << ",\n        \"beta\": ";
    write_vector(out, h.bn.beta);
    out << ",\n        \"mu\": ";
    write_vector(out, h.bn.mu);
    out << ",\n        \"var\": ";
    write_vector(out, h.bn.var);
    out << ",\n        \"eps\": " << num(h.bn.eps) << "\n      }\n    }";
  }
  out << "\n  ],\n  \"output\": {\n    \"W\": ";
  write_matrix(out, spec.output.w, "      ");
  out << ",\n    \"b\": ";
  write_vector(out, spec.output.b);
  out << "\n  }\n}\n";
  return out.str();
}

void save_network_file(const NetworkSpec& spec, const std::string& path) {
  write_file(path, save_network(spec));
}

// ---------------------------------------------------------------------------
// Folding and evaluation

FoldedNetwork fold_bn(const NetworkSpec& spec) {
  validate(spec);
  FoldedNetwork net;
  net.input_dim = spec.input_dim;
  net.output_names = spec.output_names;

  // BN_k(h) = D_k h + e_k, so the next affine map W h' + b absorbs it as
  // (W D_k) h + (W e_k + b).
  Vector d;
  Vector e;
  for (std::size_t k = 0; k <= spec.hidden.size(); ++k) {
    const Matrix& w = k < spec.hidden.size() ? spec.hidden[k].w : spec.output.w;
    const Vector& b = k < spec.hidden.size() ? spec.hidden[k].b : spec.output.b;
    AffineLayer layer{w, b};
    if (k > 0) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double shift = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) {
          layer.a(r, c) = w(r, c) * d[c];
          shift += w(r, c) * e[c];
        }
        layer.c[r] = b[r] + shift;
      }
    }
    if (k < spec.hidden.size()) {
      const auto& bn = spec.hidden[k].bn;
      d.resize(bn.gamma.size());
      e.resize(bn.gamma.size());
      for (std::size_t n = 0; n < bn.gamma.size(); ++n) {
        d[n] = bn.gamma[n] / std::sqrt(bn.var[n] + bn.eps);
        e[n] = bn.beta[n] - d[n] * bn.mu[n];
      }
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

void warn_out_of_domain(std::span<const double> z) {
  static std::atomic<bool> warned{false};
  for (double v : z) {
    if (v < 0.0 || v > 1.0) {
      if (!warned.exchange(true))
        std::cerr << "warning: network evaluated outside the normalized input domain [0,1]\n";
      return;
    }
  }
}

}  // namespace

Vector forward(const FoldedNetwork& net, std::span<const double> z) {
  require(z.size() == net.input_dim, ErrorKind::DimensionMismatch,
          "input has " + std::to_string(z.size()) + " entries, network expects " +
              std::to_string(net.input_dim));
  warn_out_of_domain(z);
  Vector cur(z.begin(), z.end());
  Vector next;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    next.resize(layer.c.size());
    kernels::affine(layer.a, cur, layer.c, next);
    if (k + 1 < net.layers.size()) kernels::relu(next);
    cur.swap(next);
  }
  return cur;
}

Vector forward(const NetworkSpec& spec, std::span<const double> z) {
  require(z.size() == spec.input_dim, ErrorKind::DimensionMismatch,
          "input dimension mismatch");
  Vector cur(z.begin(), z.end());
  for (const auto& layer : spec.hidden) {
    Vector next(layer.b.size());
    kernels::affine(layer.w, cur, layer.b, next);
    for (std::size_t n = 0; n < next.size(); ++n) {
      const double h = next[n] > 0.0 ? next[n] : 0.0;
      next[n] = layer.bn.gamma[n] * (h - layer.bn.mu[n]) / std::sqrt(layer.bn.var[n] + layer.bn.eps) +
                layer.bn.beta[n];
    }
    cur = std::move(next);
  }
  Vector out(spec.output.b.size());
  kernels::affine(spec.output.w, cur, spec.output.b, out);
  return out;
}

std::vector<Vector> pre_activations(const FoldedNetwork& net, std::span<const double> z) {
  require(z.size() == net.input_dim, ErrorKind::DimensionMismatch, "input dimension mismatch");
  std::vector<Vector> out;
  Vector cur(z.begin(), z.end());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Vector pre(net.layers[k].c.size());
    kernels::affine(net.layers[k].a, cur, net.layers[k].c, pre);
    out.push_back(pre);
    if (k + 1 < net.layers.size()) kernels::relu(pre);
    cur = std::move(pre);
  }
  return out;
}

double lipschitz_bound(const FoldedNetwork& net) {
  double l = 1.0;
  for (const auto& layer : net.layers) {
    double norm = 0.0;
    for (std::size_t r = 0; r < layer.a.rows(); ++r) {
      double s = 0.0;
      for (double v : layer.a.row(r)) s += std::abs(v);
      norm = std::max(norm, s);
    }
    l *= norm;
  }
  return l;
}

NetworkSpec make_spec(std::size_t input_dim, std::vector<HiddenLayer> hidden, OutputLayer output) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.hidden = std::move(hidden);
  spec.output = std::move(output);
  spec.input_norm.assign(input_dim, InputRange{});
  for (std::size_t i = 0; i < spec.output.w.rows(); ++i)
    spec.output_names.push_back("x_" + std::to_string(i + 1));
  return spec;
}

BatchNormParams identity_bn(std::size_t width, double eps) {
  BatchNormParams bn;
  bn.gamma.assign(width, 1.0);
  bn.beta.assign(width, 0.0);
  bn.mu.assign(width, 0.0);
  bn.var.assign(width, 1.0 - eps);
  bn.eps = eps;
  return bn;
}

}  // namespace nncert
