#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsim/harness.hpp"
#include "rsim/matrix.hpp"
#include "rsim/toyenv.hpp"

namespace rsim {

struct TrainConfig {
  int episodes = 2000;
  double learning_rate = 0.005;
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  std::vector<std::size_t> encoder_widths{64, 32};
  std::size_t target_dim = 16;
  std::size_t probe_count = 500;
  int episode_cap = 200;
  int seeds = 3;
  int view_size = 5;
  int iou_radius = 8;
  int eval_episodes = 100;
  int transfer_seeds = 5;
  int transfer_episodes = -1;  // -1: same as episodes

  EnvParams env_params() const { return EnvParams{view_size, episode_cap, iou_radius}; }
  void validate() const;
  static TrainConfig from_json_file(const std::filesystem::path& path);
};

// Feedforward probe policy: tanh encoder over the flattened one-hot view,
// a learned embedding per target object, and linear policy/value heads on
// [encoder output ; target embedding].
struct ProbeNet {
  int view_size = 5;
  std::vector<std::string> class_ids;
  std::vector<std::string> object_ids;  // sorted; row order of target_table
  std::vector<std::size_t> encoder_widths;
  std::size_t target_dim = 16;
  std::string model_id;

  std::vector<Matrix> enc_w;            // enc_w[i]: widths[i] x fan_in
  std::vector<std::vector<double>> enc_b;
  Matrix target_table;                  // object count x target_dim
  Matrix policy_w;                      // 4 x joint_dim
  std::vector<double> policy_b;         // 4
  Matrix value_w;                       // 1 x joint_dim
  std::vector<double> value_b;          // 1

  std::size_t obs_dim() const;
  std::size_t encoder_output_dim() const { return encoder_widths.back(); }
  std::size_t joint_dim() const { return encoder_output_dim() + target_dim; }
  std::size_t target_row(const std::string& object_id) const;  // TaskError if unknown

  struct ParamCounts {
    std::size_t encoder = 0;
    std::size_t heads = 0;  // target table + policy + value
    std::size_t total() const { return encoder + heads; }
  };
  ParamCounts parameter_counts() const;
};

ProbeNet init_probe_net(const GridWorld& w, const TrainConfig& cfg, std::uint64_t seed,
                        const std::string& model_id);
// Same architecture and metadata, every parameter zero (gradient container).
ProbeNet zeros_like(const ProbeNet& net);

// Flat views over every parameter array, in a fixed order shared by nets
// and their gradient containers.
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};
std::vector<ParamBlock> param_blocks(ProbeNet& net);

struct StepForward {
  std::vector<std::vector<double>> h;  // post-tanh activations per encoder layer
  std::vector<double> z;               // [encoder output ; target embedding]
  std::vector<double> logits;
  std::vector<double> probs;
  double value = 0.0;
};
StepForward forward_policy(const ProbeNet& net, const std::vector<double>& obs,
                           std::size_t target_row);

// One rollout frozen into a surrogate-objective mini-batch: advantages and
// returns are treated as constants, so the analytic gradient of
// episode_objective is exactly what training ascends.
struct BatchStep {
  std::vector<double> obs;
  std::size_t target_row = 0;
  int action = 0;
  double advantage = 0.0;
  double return_g = 0.0;
};
struct EpisodeBatch {
  std::vector<BatchStep> steps;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
};
// sum_t [ log pi(a_t) * adv_t - value_coef * (V_t - G_t)^2 + entropy_coef * H(pi_t) ]
double episode_objective(const ProbeNet& net, const EpisodeBatch& batch);
ProbeNet episode_gradient(const ProbeNet& net, const EpisodeBatch& batch);

ProbeNet train(const GridWorld& w, const std::vector<std::string>& split_side,
               const TrainConfig& cfg, std::uint64_t seed,
               const std::string& model_id = "net",
               std::vector<double>* episode_returns = nullptr);

// Copies the source encoder and keeps it frozen; target table and both
// heads are reinitialized from the seed and retrained.
ProbeNet train_transfer(const GridWorld& w, const std::vector<std::string>& split_side,
                        const ProbeNet& source, const TrainConfig& cfg, std::uint64_t seed,
                        const std::string& model_id = "transfer",
                        std::vector<double>* episode_returns = nullptr);

// Mean undiscounted return over cfg.eval_episodes episodes, executing the
// greedy (argmax) policy; exploration noise is a training-time device.
double evaluate_policy(const GridWorld& w, const ProbeNet& net,
                       const std::vector<std::string>& targets, const TrainConfig& cfg,
                       std::uint64_t seed);

struct ProbeSet {
  Matrix observations;  // count x obs_dim, one probe observation per row
  std::size_t count() const { return observations.rows(); }
};
// Distinct observations from random poses; ProbeError when the world cannot
// supply `count` distinct views.
ProbeSet build_probeset(const GridWorld& w, std::size_t count, int view_size,
                        std::uint64_t seed);

// One post-tanh ActivationMatrix per encoder layer (enc1, enc2, ...),
// rows = layer width, cols = probe count.
MatrixBundle extract_activations(const ProbeNet& net, const ProbeSet& probes);

struct StudyResult {
  ProbeSet probes;
  std::vector<ProbeNet> nets_a, nets_b;
  std::vector<std::vector<double>> returns_a, returns_b;  // per-episode returns
  ModelGroup group_a, group_b;
};
StudyResult run_study(const GridWorld& w, const TargetSplit& split, int n_seeds,
                      const TrainConfig& cfg, std::uint64_t seed, int jobs = 1);

struct TransferOutcome {
  std::vector<ProbeNet> nets;
  std::vector<std::vector<double>> curves;  // per-seed episode returns
  std::vector<double> eval_returns;         // per-seed mean eval return
};
TransferOutcome run_transfer(const GridWorld& w, const std::vector<std::string>& side,
                             const std::vector<ProbeNet>& sources, const TrainConfig& cfg,
                             std::uint64_t seed, int n_seeds, int jobs = 1);

// Parameter blocks in the matrix container format plus a manifest and a
// JSON metadata file, mirroring bundle layout.
void save_net(const ProbeNet& net, const std::filesystem::path& dir);
ProbeNet load_net(const std::filesystem::path& dir);

}  // namespace rsim
