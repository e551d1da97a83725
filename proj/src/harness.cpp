#include "rsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "rsim/cca.hpp"
#include "rsim/parallel.hpp"
#include "rsim/rng.hpp"

namespace rsim {

namespace {

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// Type-7 empirical quantile (linear interpolation between order statistics).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct PairTask {
  std::size_t layer;
  int kind;  // 0 within_a, 1 within_b, 2 cross
  std::size_t i;
  std::size_t j;
};

double pair_distance(const ActivationMatrix& x, const ActivationMatrix& y,
                     const CompareParams& params, bool* ill) {
  switch (params.method) {
    case Method::kPwcca: {
      const PwccaDistance d = pwcca_distance(x, y, params.mode, params.rel_tol);
      *ill = d.ill_conditioned;
      return d.value;
    }
    case Method::kCca: {
      const CcaResult r = cca(x, y, params.rel_tol);
      *ill = r.ill_conditioned;
      return mean_cca_distance(r);
    }
    case Method::kSvcca: {
      const CcaResult r = svcca(x, y, params.variance_keep, params.rel_tol);
      *ill = r.ill_conditioned;
      return mean_cca_distance(r);
    }
  }
  throw Error("unreachable method");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::kCca: return "cca";
    case Method::kSvcca: return "svcca";
    case Method::kPwcca: return "pwcca";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "cca") return Method::kCca;
  if (name == "svcca") return Method::kSvcca;
  if (name == "pwcca") return Method::kPwcca;
  throw Error("unknown method: " + name);
}

void ModelGroup::validate() const {
  if (bundles.size() < 2) {
    throw ShapeError("group '" + label + "' needs at least 2 bundles, has " +
                     std::to_string(bundles.size()));
  }
  const MatrixBundle& first = bundles.front();
  first.validate();
  for (const auto& bundle : bundles) {
    bundle.validate();
    if (bundle.layers.size() != first.layers.size()) {
      throw ShapeError("group '" + label + "': bundle '" + bundle.model_id +
                       "' has a different layer count");
    }
    for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
      if (bundle.layers[l].layer_name != first.layers[l].layer_name) {
        throw ShapeError("group '" + label + "': layer sequence mismatch in bundle '" +
                         bundle.model_id + "'");
      }
      if (bundle.layers[l].cols() != first.layers[l].cols()) {
        throw ShapeError("group '" + label + "': probe-input count mismatch in bundle '" +
                         bundle.model_id + "'");
      }
    }
  }
}

double delta_d(const std::vector<double>& within_a, const std::vector<double>& within_b,
               const std::vector<double>& cross) {
  if (within_a.empty() || within_b.empty() || cross.empty()) {
    throw DegenerateInputError("delta_d requires non-empty distance lists");
  }
  return sorted_mean(cross) - (sorted_mean(within_a) + sorted_mean(within_b)) / 2.0;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& samples_a,
                                       const std::vector<double>& samples_b,
                                       const std::vector<double>& samples_cross,
                                       std::size_t n_resamples, double level,
                                       std::uint64_t seed) {
  if (samples_a.empty() || samples_b.empty() || samples_cross.empty()) {
    throw DegenerateInputError("bootstrap_ci requires non-empty distance lists");
  }
  if (n_resamples < 100) {
    throw DegenerateInputError("bootstrap_ci needs at least 100 resamples");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw DegenerateInputError("bootstrap confidence level must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<double> a(samples_a.size()), b(samples_b.size()), c(samples_cross.size());
  std::vector<double> deltas(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    for (auto& v : a) v = samples_a[rng.index(samples_a.size())];
    for (auto& v : b) v = samples_b[rng.index(samples_b.size())];
    for (auto& v : c) v = samples_cross[rng.index(samples_cross.size())];
    deltas[r] = delta_d(a, b, c);
  }
  std::sort(deltas.begin(), deltas.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(deltas, tail), quantile_sorted(deltas, 1.0 - tail)};
}

ComparisonReport compare_groups(const ModelGroup& a, const ModelGroup& b,
                                const CompareParams& params) {
  a.validate();
  b.validate();
  const std::size_t layer_count = a.bundles.front().layers.size();
  if (b.bundles.front().layers.size() != layer_count) {
    throw ShapeError("groups disagree on layer count");
  }
  for (std::size_t l = 0; l < layer_count; ++l) {
    const auto& la = a.bundles.front().layers[l];
    const auto& lb = b.bundles.front().layers[l];
    if (la.layer_name != lb.layer_name) {
      throw ShapeError("groups disagree on layer sequence at index " + std::to_string(l) +
                       ": '" + la.layer_name + "' vs '" + lb.layer_name + "'");
    }
    if (la.cols() != lb.cols()) {
      throw ShapeError("groups disagree on probe-input count for layer '" + la.layer_name + "'");
    }
  }

  const std::size_t na = a.bundles.size();
  const std::size_t nb = b.bundles.size();

  std::vector<PairTask> tasks;
  for (std::size_t l = 0; l < layer_count; ++l) {
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = i + 1; j < na; ++j) tasks.push_back({l, 0, i, j});
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = i + 1; j < nb; ++j) tasks.push_back({l, 1, i, j});
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) tasks.push_back({l, 2, i, j});
  }

  std::vector<double> values(tasks.size());
  std::vector<unsigned char> flagged(tasks.size(), 0);
  parallel_for(tasks.size(), params.jobs, [&](std::size_t t) {
    const PairTask& task = tasks[t];
    const ActivationMatrix& x = task.kind == 1 ? b.bundles[task.i].layers[task.layer]
                                               : a.bundles[task.i].layers[task.layer];
    const ActivationMatrix& y = task.kind == 0 ? a.bundles[task.j].layers[task.layer]
                                               : b.bundles[task.j].layers[task.layer];
    bool ill = false;
    values[t] = pair_distance(x, y, params, &ill);
    flagged[t] = ill ? 1 : 0;
  });
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (flagged[t] && !params.allow_ill_conditioned) {
      const PairTask& task = tasks[t];
      throw IllConditionedError(
          "ill-conditioned comparison for layer '" +
          a.bundles.front().layers[task.layer].layer_name +
          "' (too few probe inputs for the kept subspaces); rerun with more probes "
          "or pass --allow-ill-conditioned");
    }
  }

  ComparisonReport report;
  report.group_a_label = a.label;
  report.group_b_label = b.label;
  report.method = params.method;
  report.config = params;
  report.layers.resize(layer_count);
  std::size_t cursor = 0;
  for (std::size_t l = 0; l < layer_count; ++l) {
    LayerComparison& layer = report.layers[l];
    layer.layer_name = a.bundles.front().layers[l].layer_name;
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = i + 1; j < na; ++j) layer.within_a.push_back(values[cursor++]);
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = i + 1; j < nb; ++j) layer.within_b.push_back(values[cursor++]);
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) layer.cross.push_back(values[cursor++]);
    layer.delta_d = delta_d(layer.within_a, layer.within_b, layer.cross);
    const auto ci = bootstrap_ci(layer.within_a, layer.within_b, layer.cross,
                                 params.n_resamples, params.level,
                                 derive_seed(params.seed, l));
    layer.ci_low = ci.first;
    layer.ci_high = ci.second;
  }
  return report;
}

std::string report_to_json(const ComparisonReport& report) {
  nlohmann::json j;
  j["method"] = to_string(report.method);
  j["groups"] = {report.group_a_label, report.group_b_label};
  j["config"] = {
      {"method", to_string(report.method)},
      {"mode", to_string(report.config.mode)},
      {"rel_tol", report.config.rel_tol},
      {"variance_keep", report.config.variance_keep},
      {"n_resamples", report.config.n_resamples},
      {"level", report.config.level},
      {"seed", report.config.seed},
      {"allow_ill_conditioned", report.config.allow_ill_conditioned},
      {"delta_d", "mean(cross) - (mean(within_a) + mean(within_b)) / 2"},
      {"bootstrap_unit", "pairwise distances, three lists resampled independently"},
  };
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : report.layers) {
    j["layers"].push_back({
        {"layer", layer.layer_name},
        {"within_a", layer.within_a},
        {"within_b", layer.within_b},
        {"cross", layer.cross},
        {"delta_d", layer.delta_d},
        {"ci", {layer.ci_low, layer.ci_high}},
    });
  }
  return j.dump(2) + "\n";
}

std::string report_to_csv(const ComparisonReport& report) {
  std::string out = "layer,mean_within_a,mean_within_b,mean_cross,delta_d,ci_low,ci_high\n";
  for (const auto& layer : report.layers) {
    out += layer.layer_name;
    out += ',' + format_double(sorted_mean(layer.within_a));
    out += ',' + format_double(sorted_mean(layer.within_b));
    out += ',' + format_double(sorted_mean(layer.cross));
    out += ',' + format_double(layer.delta_d);
    out += ',' + format_double(layer.ci_low);
    out += ',' + format_double(layer.ci_high);
    out += '\n';
  }
  return out;
}

}  // namespace rsim
