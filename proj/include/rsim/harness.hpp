#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rsim/matrix.hpp"
#include "rsim/pwcca.hpp"

namespace rsim {

enum class Method { kCca, kSvcca, kPwcca };

const char* to_string(Method m);
Method method_from_string(const std::string& name);

// One trained-model population: one bundle per random seed, all sharing the
// same layer sequence and probe-input count.
struct ModelGroup {
  std::string label;
  std::vector<MatrixBundle> bundles;

  void validate() const;
};

// Distances for one layer: all unordered pairs inside each group, all
// cross-group pairs, the delta_d summary and its bootstrap interval.
struct LayerComparison {
  std::string layer_name;
  std::vector<double> within_a;  // C(N_a, 2) values
  std::vector<double> within_b;  // C(N_b, 2) values
  std::vector<double> cross;     // N_a * N_b values
  double delta_d = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct CompareParams {
  Method method = Method::kPwcca;
  CcaView mode = CcaView::kSymmetric;
  double rel_tol = kDefaultRelTol;
  double variance_keep = kDefaultVarianceKeep;
  std::size_t n_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;  // no wall-clock default; callers must set one
  bool allow_ill_conditioned = false;
  std::size_t jobs = 1;
};

struct ComparisonReport {
  std::string group_a_label;
  std::string group_b_label;
  Method method = Method::kPwcca;
  std::vector<LayerComparison> layers;
  CompareParams config;
};

// Task-dependence signal: mean cross-group distance minus the average of
// the two mean within-group distances. Positive means the training task
// left a mark on the representation beyond seed noise; near zero means the
// representations are task-agnostic. Means are accumulated over sorted
// copies so the result does not depend on list order.
double delta_d(const std::vector<double>& within_a, const std::vector<double>& within_b,
               const std::vector<double>& cross);

// Percentile bootstrap on delta_d: each resample redraws all three lists
// independently with replacement (same sizes) and recomputes the statistic.
// Deterministic given the seed.
std::pair<double, double> bootstrap_ci(const std::vector<double>& samples_a,
                                       const std::vector<double>& samples_b,
                                       const std::vector<double>& samples_cross,
                                       std::size_t n_resamples, double level,
                                       std::uint64_t seed);

// Run the full within/cross protocol layer by layer. Pairwise distances are
// independent and may be computed on params.jobs threads; outputs are keyed
// by pair index, so the report does not depend on scheduling.
ComparisonReport compare_groups(const ModelGroup& a, const ModelGroup& b,
                                const CompareParams& params);

// Machine-readable renderings; both are byte-stable for identical reports.
std::string report_to_json(const ComparisonReport& report);
std::string report_to_csv(const ComparisonReport& report);

}  // namespace rsim
