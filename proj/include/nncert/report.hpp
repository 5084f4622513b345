#pragma once

// File formats around verification: query files, report JSON with a
// provenance block, timing sidecars and CSV tables.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nncert/verify.hpp"

namespace nncert {

/// A single query object, an array of them, or {"queries": [...]}.
/// A scalar alpha broadcasts over z_ref.
std::vector<VerificationQuery> parse_queries(std::string_view json_text);
std::string save_queries(const std::vector<VerificationQuery>& qs);

struct ReportContext {
  std::string network_hash;
  std::string query_hash;
  VerifyOptions options;
};

struct ComparisonBlock {
  Vector T;
  Comparison comparison;
  std::vector<std::size_t> outside;  // test rows outside every ball
  std::size_t test_samples = 0;
};

std::string robustness_report(const RobustnessBatch& batch, const std::vector<VerificationQuery>& qs,
                              const ReportContext& ctx,
                              const std::optional<ComparisonBlock>& cmp = std::nullopt);

std::string trust_report(const std::vector<TrustResult>& results, const std::vector<VerificationQuery>& qs,
                         const std::vector<InputRange>& norm, const ReportContext& ctx);

/// Wall-clock data kept out of the main report so reports stay
/// byte-stable across runs.
std::string robustness_timing(const RobustnessBatch& batch);
std::string trust_timing(const std::vector<TrustResult>& results);

/// bin_lo,bin_hi,count
std::string histogram_csv(const Histogram& h);

/// output_name,delta_min_percent per query and output; "not_found" when no
/// perturbation up to the cap reaches beta.
std::string trust_table_csv(const std::vector<TrustResult>& results, const std::vector<VerificationQuery>& qs,
                            const std::vector<InputRange>& norm);

}  // namespace nncert
