#include "rsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "rsim/errors.hpp"
#include "rsim/matrix_io.hpp"
#include "rsim/parallel.hpp"
#include "rsim/rng.hpp"

namespace rsim {
namespace {

constexpr int kActionCount = 4;

std::vector<double> softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

int sample_action(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Training math stays on plain scalar loops instead of the dispatched
// kernels: SIMD variants change summation order, and trained parameters
// must come out byte-identical on every machine for a given seed.
double dot_plain(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += x[k] * y[k];
  return acc;
}

void axpy_plain(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

// y = W x + b, with per-row dot products (W row-major).
void affine(const Matrix& w, const std::vector<double>& b, const double* x,
            std::size_t n, std::vector<double>& y) {
  y.resize(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    y[k] = dot_plain(w.row(k), x, n) + b[k];
  }
}

void init_encoder(ProbeNet& net, Rng& rng) {
  std::size_t fan_in = net.obs_dim();
  net.enc_w.clear();
  net.enc_b.clear();
  for (std::size_t width : net.encoder_widths) {
    Matrix w(width, fan_in);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    net.enc_w.push_back(std::move(w));
    net.enc_b.emplace_back(width, 0.0);
    fan_in = width;
  }
}

void init_heads(ProbeNet& net, Rng& rng) {
  net.target_table = Matrix(net.object_ids.size(), net.target_dim);
  for (double& v : net.target_table.data()) v = rng.uniform(-0.5, 0.5);
  const std::size_t joint = net.joint_dim();
  net.policy_w = Matrix(kActionCount, joint);
  const double plim = std::sqrt(6.0 / static_cast<double>(joint + kActionCount));
  for (double& v : net.policy_w.data()) v = rng.uniform(-plim, plim);
  net.policy_b.assign(kActionCount, 0.0);
  net.value_w = Matrix(1, joint);
  const double vlim = std::sqrt(6.0 / static_cast<double>(joint + 1));
  for (double& v : net.value_w.data()) v = rng.uniform(-vlim, vlim);
  net.value_b.assign(1, 0.0);
}

void check_net_matches_world(const ProbeNet& net, const GridWorld& w,
                             const TrainConfig& cfg) {
  if (net.class_ids != w.class_ids()) {
    throw ShapeError("net was built for a world with different object classes");
  }
  if (net.view_size != cfg.view_size) {
    throw ShapeError("config view_size " + std::to_string(cfg.view_size) +
                     " does not match net view_size " + std::to_string(net.view_size));
  }
}

// Applies grads scaled by lr; returns the name of the first non-finite
// block afterwards (empty when all finite).
std::string apply_update(ProbeNet& net, ProbeNet& grads, double lr, bool frozen_encoder) {
  auto pb = param_blocks(net);
  auto gb = param_blocks(grads);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (frozen_encoder && pb[i].name.rfind("enc_", 0) == 0) continue;
    axpy_plain(lr, gb[i].data, pb[i].data, pb[i].size);
    for (std::size_t k = 0; k < pb[i].size; ++k) {
      if (!std::isfinite(pb[i].data[k])) return pb[i].name;
    }
  }
  return {};
}

std::vector<std::string> sorted_unique_targets(const GridWorld& w,
                                               const std::vector<std::string>& ids) {
  if (ids.empty()) throw TaskError("target split side is empty");
  std::vector<std::string> targets(ids);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (const std::string& t : targets) w.object(t);  // TaskError if unknown
  return targets;
}

struct Rollout {
  EpisodeBatch batch;
  double undiscounted = 0.0;
};

Rollout run_episode(const GridWorld& w, const ProbeNet& net, const std::string& target,
                    const TrainConfig& cfg, Rng& rng) {
  const EnvParams env = cfg.env_params();
  const std::size_t trow = net.target_row(target);
  const StartPose& start = w.starts()[rng.index(w.starts().size())];
  AgentState s{start.cell, start.heading, 0, false};

  Rollout out;
  out.batch.value_coef = cfg.value_coef;
  out.batch.entropy_coef = cfg.entropy_coef;
  std::vector<double> rewards;
  std::vector<double> values;
  while (!s.done) {
    std::vector<double> obs = render_observation(w, s.cell, s.heading, cfg.view_size);
    StepForward f = forward_policy(net, obs, trow);
    const int action = sample_action(f.probs, rng);
    Transition tr = step(w, s, target, static_cast<Action>(action), env);
    out.batch.steps.push_back(BatchStep{std::move(obs), trow, action, 0.0, 0.0});
    values.push_back(f.value);
    rewards.push_back(tr.reward);
    out.undiscounted += tr.reward;
    s = tr.state;
  }
  double g = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    g = rewards[t] + cfg.gamma * g;
    out.batch.steps[t].return_g = g;
    out.batch.steps[t].advantage = g - values[t];
  }
  return out;
}

ProbeNet train_impl(const GridWorld& w, ProbeNet net, const std::vector<std::string>& side,
                    const TrainConfig& cfg, std::uint64_t seed, bool frozen_encoder,
                    std::vector<double>* episode_returns) {
  const std::vector<std::string> targets = sorted_unique_targets(w, side);
  Rng rng(derive_seed(seed, 1));
  if (episode_returns) episode_returns->clear();
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const std::string& target = targets[rng.index(targets.size())];
    Rollout rollout = run_episode(w, net, target, cfg, rng);
    ProbeNet grads = episode_gradient(net, rollout.batch);
    std::string bad = apply_update(net, grads, cfg.learning_rate, frozen_encoder);
    if (!bad.empty()) {
      throw TrainingError("training diverged: non-finite parameter in block '" + bad +
                          "' after the update at episode " + std::to_string(ep));
    }
    if (episode_returns) episode_returns->push_back(rollout.undiscounted);
  }
  return net;
}

Matrix row_matrix(const std::vector<double>& v) {
  return Matrix(1, v.size(), v);
}

}  // namespace

void TrainConfig::validate() const {
  if (episodes < 0) throw DataError("episodes must be non-negative");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DataError("learning_rate must be positive and finite");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DataError("gamma must lie in [0, 1]");
  if (value_coef < 0.0 || entropy_coef < 0.0) {
    throw DataError("value_coef and entropy_coef must be non-negative");
  }
  if (encoder_widths.empty()) throw DataError("encoder_widths must not be empty");
  for (std::size_t width : encoder_widths) {
    if (width < 1) throw DataError("encoder widths must be at least 1");
  }
  if (target_dim < 1) throw DataError("target_dim must be at least 1");
  if (probe_count < 1) throw DataError("probe_count must be at least 1");
  if (episode_cap < 1) throw DataError("episode_cap must be at least 1");
  if (seeds < 1) throw DataError("seeds must be at least 1");
  if (view_size < 3 || view_size % 2 == 0) throw DataError("view_size must be odd and >= 3");
  if (iou_radius < 1) throw DataError("iou_radius must be at least 1");
  if (eval_episodes < 1) throw DataError("eval_episodes must be at least 1");
  if (transfer_seeds < 1) throw DataError("transfer_seeds must be at least 1");
}

TrainConfig TrainConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError("config file must hold a JSON object");

  TrainConfig cfg;
  const std::set<std::string> known = {
      "episodes",     "learning_rate", "gamma",         "value_coef",
      "entropy_coef", "encoder_widths", "target_dim",   "probe_count",
      "episode_cap",  "seeds",         "view_size",     "iou_radius",
      "eval_episodes", "transfer_seeds", "transfer_episodes"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw FormatError("config file: unknown key '" + key + "'");
  }
  try {
    if (j.contains("episodes")) cfg.episodes = j["episodes"].get<int>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    if (j.contains("value_coef")) cfg.value_coef = j["value_coef"].get<double>();
    if (j.contains("entropy_coef")) cfg.entropy_coef = j["entropy_coef"].get<double>();
    if (j.contains("encoder_widths")) {
      cfg.encoder_widths.clear();
      if (!j["encoder_widths"].is_array()) {
        throw FormatError("config file: encoder_widths must be a list");
      }
      for (const auto& e : j["encoder_widths"]) {
        cfg.encoder_widths.push_back(e.get<std::size_t>());
      }
    }
    if (j.contains("target_dim")) cfg.target_dim = j["target_dim"].get<std::size_t>();
    if (j.contains("probe_count")) cfg.probe_count = j["probe_count"].get<std::size_t>();
    if (j.contains("episode_cap")) cfg.episode_cap = j["episode_cap"].get<int>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<int>();
    if (j.contains("view_size")) cfg.view_size = j["view_size"].get<int>();
    if (j.contains("iou_radius")) cfg.iou_radius = j["iou_radius"].get<int>();
    if (j.contains("eval_episodes")) cfg.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("transfer_seeds")) cfg.transfer_seeds = j["transfer_seeds"].get<int>();
    if (j.contains("transfer_episodes")) {
      cfg.transfer_episodes = j["transfer_episodes"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config file " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

std::size_t ProbeNet::obs_dim() const {
  return static_cast<std::size_t>(view_size) * static_cast<std::size_t>(view_size) *
         (3 + class_ids.size());
}

std::size_t ProbeNet::target_row(const std::string& object_id) const {
  auto it = std::lower_bound(object_ids.begin(), object_ids.end(), object_id);
  if (it == object_ids.end() || *it != object_id) {
    throw TaskError("net has no target embedding for object '" + object_id + "'");
  }
  return static_cast<std::size_t>(it - object_ids.begin());
}

ProbeNet::ParamCounts ProbeNet::parameter_counts() const {
  ParamCounts counts;
  for (std::size_t i = 0; i < enc_w.size(); ++i) {
    counts.encoder += enc_w[i].rows() * enc_w[i].cols() + enc_b[i].size();
  }
  counts.heads = target_table.rows() * target_table.cols() +
                 policy_w.rows() * policy_w.cols() + policy_b.size() +
                 value_w.rows() * value_w.cols() + value_b.size();
  return counts;
}

ProbeNet init_probe_net(const GridWorld& w, const TrainConfig& cfg, std::uint64_t seed,
                        const std::string& model_id) {
  cfg.validate();
  ProbeNet net;
  net.view_size = cfg.view_size;
  net.class_ids = w.class_ids();
  for (const WorldObject& o : w.objects()) net.object_ids.push_back(o.id);
  std::sort(net.object_ids.begin(), net.object_ids.end());
  net.encoder_widths = cfg.encoder_widths;
  net.target_dim = cfg.target_dim;
  net.model_id = model_id;
  Rng rng(seed);
  init_encoder(net, rng);
  init_heads(net, rng);
  return net;
}

ProbeNet zeros_like(const ProbeNet& net) {
  ProbeNet z = net;
  for (Matrix& m : z.enc_w) std::fill(m.data().begin(), m.data().end(), 0.0);
  for (auto& b : z.enc_b) std::fill(b.begin(), b.end(), 0.0);
  std::fill(z.target_table.data().begin(), z.target_table.data().end(), 0.0);
  std::fill(z.policy_w.data().begin(), z.policy_w.data().end(), 0.0);
  std::fill(z.policy_b.begin(), z.policy_b.end(), 0.0);
  std::fill(z.value_w.data().begin(), z.value_w.data().end(), 0.0);
  std::fill(z.value_b.begin(), z.value_b.end(), 0.0);
  return z;
}

std::vector<ParamBlock> param_blocks(ProbeNet& net) {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < net.enc_w.size(); ++i) {
    const std::string layer = std::to_string(i + 1);
    blocks.push_back({"enc_w" + layer, net.enc_w[i].data().data(),
                      net.enc_w[i].data().size()});
    blocks.push_back({"enc_b" + layer, net.enc_b[i].data(), net.enc_b[i].size()});
  }
  blocks.push_back({"target_table", net.target_table.data().data(),
                    net.target_table.data().size()});
  blocks.push_back({"policy_w", net.policy_w.data().data(), net.policy_w.data().size()});
  blocks.push_back({"policy_b", net.policy_b.data(), net.policy_b.size()});
  blocks.push_back({"value_w", net.value_w.data().data(), net.value_w.data().size()});
  blocks.push_back({"value_b", net.value_b.data(), net.value_b.size()});
  return blocks;
}

StepForward forward_policy(const ProbeNet& net, const std::vector<double>& obs,
                           std::size_t target_row) {
  if (obs.size() != net.obs_dim()) {
    throw ShapeError("observation length " + std::to_string(obs.size()) +
                     " does not match net input " + std::to_string(net.obs_dim()));
  }
  if (target_row >= net.target_table.rows()) {
    throw ShapeError("target row out of range");
  }
  StepForward f;
  f.h.resize(net.enc_w.size());
  // Observations are one-hot channel stacks, so the first layer skips the
  // exact zeros; term order is unchanged, so the sums match the dense loop
  // bit for bit.
  std::vector<std::size_t> nz;
  nz.reserve(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j)
    if (obs[j] != 0.0) nz.push_back(j);
  std::vector<double> pre;
  {
    const Matrix& w0 = net.enc_w[0];
    pre.resize(w0.rows());
    for (std::size_t k = 0; k < w0.rows(); ++k) {
      const double* row = w0.row(k);
      double acc = 0.0;
      for (std::size_t j : nz) acc += row[j] * obs[j];
      pre[k] = acc + net.enc_b[0][k];
    }
    f.h[0].resize(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) f.h[0][k] = std::tanh(pre[k]);
  }
  const double* prev = f.h[0].data();
  std::size_t prev_n = f.h[0].size();
  for (std::size_t i = 1; i < net.enc_w.size(); ++i) {
    affine(net.enc_w[i], net.enc_b[i], prev, prev_n, pre);
    f.h[i].resize(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) f.h[i][k] = std::tanh(pre[k]);
    prev = f.h[i].data();
    prev_n = f.h[i].size();
  }
  f.z.assign(prev, prev + prev_n);
  const double* e = net.target_table.row(target_row);
  f.z.insert(f.z.end(), e, e + net.target_dim);
  affine(net.policy_w, net.policy_b, f.z.data(), f.z.size(), f.logits);
  f.probs = softmax(f.logits);
  f.value = dot_plain(net.value_w.row(0), f.z.data(), f.z.size()) + net.value_b[0];
  return f;
}

double episode_objective(const ProbeNet& net, const EpisodeBatch& batch) {
  double total = 0.0;
  for (const BatchStep& s : batch.steps) {
    StepForward f = forward_policy(net, s.obs, s.target_row);
    double m = f.logits[0];
    for (double l : f.logits) m = std::max(m, l);
    double lse = 0.0;
    for (double l : f.logits) lse += std::exp(l - m);
    const double log_pa = (f.logits[static_cast<std::size_t>(s.action)] - m) - std::log(lse);
    total += log_pa * s.advantage;
    total -= batch.value_coef * (f.value - s.return_g) * (f.value - s.return_g);
    if (batch.entropy_coef > 0.0) total += batch.entropy_coef * entropy(f.probs);
  }
  return total;
}

ProbeNet episode_gradient(const ProbeNet& net, const EpisodeBatch& batch) {
  ProbeNet grads = zeros_like(net);
  const std::size_t enc_out = net.encoder_output_dim();
  std::vector<double> dlogits(kActionCount);
  std::vector<double> dz, dh, dprev;
  std::vector<std::size_t> nz;
  for (const BatchStep& s : batch.steps) {
    StepForward f = forward_policy(net, s.obs, s.target_row);

    const double h_ent = entropy(f.probs);
    for (int k = 0; k < kActionCount; ++k) {
      const double p = f.probs[static_cast<std::size_t>(k)];
      dlogits[static_cast<std::size_t>(k)] =
          s.advantage * ((k == s.action ? 1.0 : 0.0) - p);
      if (batch.entropy_coef > 0.0 && p > 0.0) {
        dlogits[static_cast<std::size_t>(k)] -=
            batch.entropy_coef * p * (std::log(p) + h_ent);
      }
    }
    const double dvalue = -2.0 * batch.value_coef * (f.value - s.return_g);

    // Heads: dW += d_out x z, db += d_out, dz = W^T d_out.
    dz.assign(f.z.size(), 0.0);
    for (int k = 0; k < kActionCount; ++k) {
      const double g = dlogits[static_cast<std::size_t>(k)];
      axpy_plain(g, f.z.data(), grads.policy_w.row(static_cast<std::size_t>(k)),
                    f.z.size());
      grads.policy_b[static_cast<std::size_t>(k)] += g;
      axpy_plain(g, net.policy_w.row(static_cast<std::size_t>(k)), dz.data(),
                    f.z.size());
    }
    axpy_plain(dvalue, f.z.data(), grads.value_w.row(0), f.z.size());
    grads.value_b[0] += dvalue;
    axpy_plain(dvalue, net.value_w.row(0), dz.data(), f.z.size());

    // Split dz into encoder-output and target-embedding parts.
    axpy_plain(1.0, dz.data() + enc_out, grads.target_table.row(s.target_row),
                  net.target_dim);
    dh.assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(enc_out));

    for (std::size_t layer = net.enc_w.size(); layer-- > 0;) {
      const std::vector<double>& h = f.h[layer];
      // tanh' = 1 - h^2, applied in place on dh.
      for (std::size_t k = 0; k < h.size(); ++k) dh[k] *= 1.0 - h[k] * h[k];
      if (layer == 0) {
        // One-hot input: only the active columns receive weight gradient,
        // and nothing consumes the input gradient.
        nz.clear();
        for (std::size_t j = 0; j < s.obs.size(); ++j)
          if (s.obs[j] != 0.0) nz.push_back(j);
        for (std::size_t k = 0; k < h.size(); ++k) {
          double* row = grads.enc_w[0].row(k);
          const double g = dh[k];
          for (std::size_t j : nz) row[j] += g * s.obs[j];
          grads.enc_b[0][k] += g;
        }
        break;
      }
      const double* below = f.h[layer - 1].data();
      const std::size_t below_n = f.h[layer - 1].size();
      dprev.assign(below_n, 0.0);
      for (std::size_t k = 0; k < h.size(); ++k) {
        axpy_plain(dh[k], below, grads.enc_w[layer].row(k), below_n);
        grads.enc_b[layer][k] += dh[k];
        axpy_plain(dh[k], net.enc_w[layer].row(k), dprev.data(), below_n);
      }
      dh = dprev;
    }
  }
  return grads;
}

ProbeNet train(const GridWorld& w, const std::vector<std::string>& split_side,
               const TrainConfig& cfg, std::uint64_t seed, const std::string& model_id,
               std::vector<double>* episode_returns) {
  cfg.validate();
  ProbeNet net = init_probe_net(w, cfg, seed, model_id);
  return train_impl(w, std::move(net), split_side, cfg, seed, false, episode_returns);
}

ProbeNet train_transfer(const GridWorld& w, const std::vector<std::string>& split_side,
                        const ProbeNet& source, const TrainConfig& cfg, std::uint64_t seed,
                        const std::string& model_id,
                        std::vector<double>* episode_returns) {
  cfg.validate();
  check_net_matches_world(source, w, cfg);
  if (source.target_dim != cfg.target_dim) {
    throw ShapeError("transfer config target_dim does not match the source net");
  }
  ProbeNet net = source;
  net.model_id = model_id;
  Rng rng(seed);
  init_heads(net, rng);
  return train_impl(w, std::move(net), split_side, cfg, seed, true, episode_returns);
}

double evaluate_policy(const GridWorld& w, const ProbeNet& net,
                       const std::vector<std::string>& targets, const TrainConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  check_net_matches_world(net, w, cfg);
  const std::vector<std::string> ids = sorted_unique_targets(w, targets);
  const EnvParams env = cfg.env_params();
  Rng rng(seed);
  double total = 0.0;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    const std::string& target = ids[rng.index(ids.size())];
    const std::size_t trow = net.target_row(target);
    const StartPose& start = w.starts()[rng.index(w.starts().size())];
    AgentState s{start.cell, start.heading, 0, false};
    while (!s.done) {
      std::vector<double> obs = render_observation(w, s.cell, s.heading, cfg.view_size);
      StepForward f = forward_policy(net, obs, trow);
      // Evaluation executes the greedy policy; sampling noise is a training device.
      int act = 0;
      for (int a = 1; a < kActionCount; ++a)
        if (f.probs[static_cast<std::size_t>(a)] > f.probs[static_cast<std::size_t>(act)]) act = a;
      Transition tr = step(w, s, target, static_cast<Action>(act), env);
      total += tr.reward;
      s = tr.state;
    }
  }
  return total / static_cast<double>(cfg.eval_episodes);
}

ProbeSet build_probeset(const GridWorld& w, std::size_t count, int view_size,
                        std::uint64_t seed) {
  if (count < 1) throw ProbeError("probe count must be at least 1");
  std::vector<std::vector<double>> unique;
  std::set<std::vector<double>> seen;
  for (int y = 0; y < w.height(); ++y) {
    for (int x = 0; x < w.width(); ++x) {
      Cell c{x, y};
      if (!w.is_free(c)) continue;
      for (int h = 0; h < 4; ++h) {
        std::vector<double> obs =
            render_observation(w, c, static_cast<Heading>(h), view_size);
        if (seen.insert(obs).second) unique.push_back(std::move(obs));
      }
    }
  }
  if (unique.size() < count) {
    throw ProbeError("world provides only " + std::to_string(unique.size()) +
                     " distinct observations, but " + std::to_string(count) +
                     " probes were requested");
  }
  std::vector<std::size_t> order(unique.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  Matrix obs_matrix(count, unique.front().size());
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(unique[order[i]].begin(), unique[order[i]].end(), obs_matrix.row(i));
  }
  return ProbeSet{std::move(obs_matrix)};
}

MatrixBundle extract_activations(const ProbeNet& net, const ProbeSet& probes) {
  if (probes.count() == 0) throw DegenerateInputError("probe set is empty");
  if (probes.observations.cols() != net.obs_dim()) {
    throw ShapeError("probe observation length " +
                     std::to_string(probes.observations.cols()) +
                     " does not match net input " + std::to_string(net.obs_dim()));
  }
  MatrixBundle bundle;
  bundle.model_id = net.model_id;
  for (std::size_t i = 0; i < net.enc_w.size(); ++i) {
    ActivationMatrix m;
    m.layer_name = "enc" + std::to_string(i + 1);
    m.model_id = net.model_id;
    m.values = Matrix(net.encoder_widths[i], probes.count());
    bundle.layers.push_back(std::move(m));
  }
  std::vector<double> pre, h, prev;
  for (std::size_t j = 0; j < probes.count(); ++j) {
    prev.assign(probes.observations.row(j),
                probes.observations.row(j) + probes.observations.cols());
    for (std::size_t i = 0; i < net.enc_w.size(); ++i) {
      affine(net.enc_w[i], net.enc_b[i], prev.data(), prev.size(), pre);
      h.resize(pre.size());
      for (std::size_t k = 0; k < pre.size(); ++k) h[k] = std::tanh(pre[k]);
      for (std::size_t k = 0; k < h.size(); ++k) {
        bundle.layers[i].values(k, j) = h[k];
      }
      prev = h;
    }
  }
  bundle.validate();
  return bundle;
}

StudyResult run_study(const GridWorld& w, const TargetSplit& split, int n_seeds,
                      const TrainConfig& cfg, std::uint64_t seed, int jobs) {
  cfg.validate();
  if (n_seeds < 2) throw Error("run_study needs at least 2 seeds per side");
  if (split.a.empty() || split.b.empty()) throw TaskError("both split sides must be non-empty");

  StudyResult result;
  result.probes = build_probeset(w, cfg.probe_count, cfg.view_size, derive_seed(seed, 1));
  result.nets_a.resize(static_cast<std::size_t>(n_seeds));
  result.nets_b.resize(static_cast<std::size_t>(n_seeds));
  result.returns_a.resize(static_cast<std::size_t>(n_seeds));
  result.returns_b.resize(static_cast<std::size_t>(n_seeds));

  const std::size_t n = static_cast<std::size_t>(n_seeds);
  parallel_for(2 * n, static_cast<std::size_t>(std::max(1, jobs)), [&](std::size_t i) {
    const bool side_a = i < n;
    const std::size_t idx = side_a ? i : i - n;
    const std::string model_id = (side_a ? "A" : "B") + std::to_string(idx);
    const std::uint64_t train_seed = derive_seed(seed, (side_a ? 100 : 200) + idx);
    std::vector<double>& curve = side_a ? result.returns_a[idx] : result.returns_b[idx];
    ProbeNet net = train(w, side_a ? split.a : split.b, cfg, train_seed, model_id, &curve);
    (side_a ? result.nets_a : result.nets_b)[idx] = std::move(net);
  });

  result.group_a.label = "A";
  result.group_b.label = "B";
  for (const ProbeNet& net : result.nets_a) {
    result.group_a.bundles.push_back(extract_activations(net, result.probes));
  }
  for (const ProbeNet& net : result.nets_b) {
    result.group_b.bundles.push_back(extract_activations(net, result.probes));
  }
  return result;
}

TransferOutcome run_transfer(const GridWorld& w, const std::vector<std::string>& side,
                             const std::vector<ProbeNet>& sources, const TrainConfig& cfg,
                             std::uint64_t seed, int n_seeds, int jobs) {
  cfg.validate();
  if (sources.empty()) throw Error("run_transfer needs at least one source net");
  if (n_seeds < 1) throw Error("run_transfer needs at least one seed");

  TransferOutcome out;
  const std::size_t n = static_cast<std::size_t>(n_seeds);
  out.nets.resize(n);
  out.curves.resize(n);
  out.eval_returns.resize(n);
  TrainConfig tcfg = cfg;
  if (cfg.transfer_episodes >= 0) tcfg.episodes = cfg.transfer_episodes;

  parallel_for(n, static_cast<std::size_t>(std::max(1, jobs)), [&](std::size_t k) {
    const ProbeNet& source = sources[k % sources.size()];
    const std::string model_id = "T" + std::to_string(k);
    ProbeNet net = train_transfer(w, side, source, tcfg, derive_seed(seed, 300 + k),
                                  model_id, &out.curves[k]);
    out.eval_returns[k] = evaluate_policy(w, net, side, tcfg, derive_seed(seed, 400 + k));
    out.nets[k] = std::move(net);
  });
  return out;
}

void save_net(const ProbeNet& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["model_id"] = net.model_id;
  meta["view_size"] = net.view_size;
  meta["class_ids"] = net.class_ids;
  meta["object_ids"] = net.object_ids;
  meta["encoder_widths"] = net.encoder_widths;
  meta["target_dim"] = net.target_dim;
  std::ofstream meta_out(dir / "meta.json", std::ios::binary);
  if (!meta_out) throw IoError("cannot write " + (dir / "meta.json").string());
  meta_out << meta.dump(2) << "\n";
  meta_out.close();
  if (!meta_out) throw IoError("failed writing " + (dir / "meta.json").string());

  std::vector<std::pair<std::string, Matrix>> blocks;
  for (std::size_t i = 0; i < net.enc_w.size(); ++i) {
    blocks.emplace_back("enc_w" + std::to_string(i + 1), net.enc_w[i]);
    blocks.emplace_back("enc_b" + std::to_string(i + 1), row_matrix(net.enc_b[i]));
  }
  blocks.emplace_back("target_table", net.target_table);
  blocks.emplace_back("policy_w", net.policy_w);
  blocks.emplace_back("policy_b", row_matrix(net.policy_b));
  blocks.emplace_back("value_w", net.value_w);
  blocks.emplace_back("value_b", row_matrix(net.value_b));

  std::string manifest;
  for (const auto& [name, matrix] : blocks) {
    io::save_matrix(ActivationMatrix{matrix, name, net.model_id},
                    dir / (name + ".rsm"), io::MatrixFormat::kBinary);
    manifest += name + " " + name + ".rsm\n";
  }
  std::ofstream man_out(dir / "manifest.txt", std::ios::binary);
  if (!man_out) throw IoError("cannot write " + (dir / "manifest.txt").string());
  man_out << manifest;
  man_out.close();
  if (!man_out) throw IoError("failed writing " + (dir / "manifest.txt").string());
}

ProbeNet load_net(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("net directory " + dir.string() + " has no meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("net meta.json: " + std::string(e.what()));
  }
  ProbeNet net;
  try {
    net.model_id = meta.at("model_id").get<std::string>();
    net.view_size = meta.at("view_size").get<int>();
    net.class_ids = meta.at("class_ids").get<std::vector<std::string>>();
    net.object_ids = meta.at("object_ids").get<std::vector<std::string>>();
    net.encoder_widths = meta.at("encoder_widths").get<std::vector<std::size_t>>();
    net.target_dim = meta.at("target_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("net meta.json: " + std::string(e.what()));
  }
  if (net.encoder_widths.empty()) throw FormatError("net meta.json: empty encoder_widths");

  auto load_block = [&dir](const std::string& name) {
    const auto path = dir / (name + ".rsm");
    if (!std::filesystem::exists(path)) {
      throw FormatError("net directory missing parameter block " + name);
    }
    return io::load_matrix(path).values;
  };
  auto expect = [](const Matrix& m, std::size_t rows, std::size_t cols,
                   const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw FormatError("parameter block " + name + " has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                        ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  };

  std::size_t fan_in = net.obs_dim();
  for (std::size_t i = 0; i < net.encoder_widths.size(); ++i) {
    const std::string layer = std::to_string(i + 1);
    Matrix w = load_block("enc_w" + layer);
    expect(w, net.encoder_widths[i], fan_in, "enc_w" + layer);
    Matrix b = load_block("enc_b" + layer);
    expect(b, 1, net.encoder_widths[i], "enc_b" + layer);
    net.enc_w.push_back(std::move(w));
    net.enc_b.push_back(b.data());
    fan_in = net.encoder_widths[i];
  }
  Matrix table = load_block("target_table");
  expect(table, net.object_ids.size(), net.target_dim, "target_table");
  net.target_table = std::move(table);
  Matrix pw = load_block("policy_w");
  expect(pw, kActionCount, net.joint_dim(), "policy_w");
  net.policy_w = std::move(pw);
  Matrix pb = load_block("policy_b");
  expect(pb, 1, kActionCount, "policy_b");
  net.policy_b = pb.data();
  Matrix vw = load_block("value_w");
  expect(vw, 1, net.joint_dim(), "value_w");
  net.value_w = std::move(vw);
  Matrix vb = load_block("value_b");
  expect(vb, 1, 1, "value_b");
  net.value_b = vb.data();
  return net;
}

}  // namespace rsim
