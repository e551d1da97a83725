#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rsim/errors.hpp"
#include "rsim/rng.hpp"
#include "rsim/toyenv.hpp"
#include "rsim/trainer.hpp"

#include "helpers.hpp"

using namespace rsim;

namespace {

// Two objects of two classes in an open 7x7 room with two starts.
GridWorld trainer_world() {
  return GridWorld(7, 7, {{3, 3}},
                   {{"box_a", "box", {{5, 1}}}, {"plant_a", "plant", {{1, 5}}}},
                   {{{0, 0}, Heading::kEast}, {{6, 6}, Heading::kNorth}});
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.episodes = 25;
  cfg.learning_rate = 0.01;
  cfg.entropy_coef = 0.02;
  cfg.encoder_widths = {10, 6};
  cfg.target_dim = 4;
  cfg.probe_count = 40;
  cfg.episode_cap = 25;
  cfg.eval_episodes = 5;
  return cfg;
}

std::vector<std::pair<std::string, std::vector<double>>> snapshot(const ProbeNet& net) {
  ProbeNet copy = net;
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (const ParamBlock& b : param_blocks(copy)) {
    out.emplace_back(b.name, std::vector<double>(b.data, b.data + b.size));
  }
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return a.empty() ||
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Mixed rollout-shaped batch touching both targets and all actions.
EpisodeBatch fd_batch(const GridWorld& w, const ProbeNet& net, std::uint64_t seed) {
  EpisodeBatch batch;
  batch.value_coef = 0.6;
  batch.entropy_coef = 0.07;
  Rng rng(seed);
  const std::vector<Cell> cells = {{0, 0}, {4, 1}, {2, 5}, {6, 6}, {3, 2}};
  for (std::size_t t = 0; t < cells.size(); ++t) {
    BatchStep s;
    s.obs = render_observation(w, cells[t], static_cast<Heading>(rng.index(4)),
                               net.view_size);
    s.target_row = rng.index(net.object_ids.size());
    s.action = static_cast<int>(rng.index(4));
    s.advantage = rng.normal();
    s.return_g = rng.normal();
    batch.steps.push_back(std::move(s));
  }
  return batch;
}

}  // namespace

TEST_CASE("init_probe_net is deterministic and shaped by the world") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  const ProbeNet n1 = init_probe_net(w, cfg, 11, "m");
  const ProbeNet n2 = init_probe_net(w, cfg, 11, "m");
  const ProbeNet n3 = init_probe_net(w, cfg, 12, "m");

  const auto s1 = snapshot(n1), s2 = snapshot(n2), s3 = snapshot(n3);
  REQUIRE(s1.size() == s2.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].first == s2[i].first);
    CHECK(bitwise_equal(s1[i].second, s2[i].second));
    any_diff = any_diff || !bitwise_equal(s1[i].second, s3[i].second);
  }
  CHECK(any_diff);

  CHECK(n1.class_ids == w.class_ids());
  CHECK(n1.object_ids == std::vector<std::string>{"box_a", "plant_a"});
  CHECK(n1.obs_dim() == 25u * 5u);
  CHECK(n1.joint_dim() == 6u + 4u);
  CHECK(n1.target_row("box_a") == 0);
  CHECK(n1.target_row("plant_a") == 1);
  CHECK_THROWS_AS(n1.target_row("sofa_a"), TaskError);

  // block layout and the bookkeeping must agree
  ProbeNet mut = n1;
  const auto blocks = param_blocks(mut);
  std::vector<std::string> names;
  std::size_t total = 0, encoder = 0;
  for (const ParamBlock& b : blocks) {
    names.push_back(b.name);
    total += b.size;
    if (b.name.rfind("enc_", 0) == 0) encoder += b.size;
  }
  CHECK(names == std::vector<std::string>{"enc_w1", "enc_b1", "enc_w2", "enc_b2",
                                          "target_table", "policy_w", "policy_b",
                                          "value_w", "value_b"});
  const auto counts = n1.parameter_counts();
  CHECK(total == counts.total());
  CHECK(encoder == counts.encoder);
  CHECK(counts.heads == 2u * 4u + 4u * 10u + 4u + 10u + 1u);
}

TEST_CASE("forward_policy outputs a distribution and validates shapes") {
  const GridWorld w = trainer_world();
  const ProbeNet net = init_probe_net(w, tiny_config(), 5, "m");
  const std::vector<double> obs = render_observation(w, {0, 0}, Heading::kEast, 5);

  const StepForward f = forward_policy(net, obs, 0);
  REQUIRE(f.h.size() == 2);
  CHECK(f.h[0].size() == 10);
  CHECK(f.h[1].size() == 6);
  CHECK(f.z.size() == net.joint_dim());
  REQUIRE(f.probs.size() == 4);
  double total = 0.0;
  for (double p : f.probs) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(std::fabs(total - 1.0) <= 1e-12);
  CHECK(std::isfinite(f.value));
  for (double h : f.h[1]) CHECK(std::fabs(h) <= 1.0);

  CHECK_THROWS_AS(forward_policy(net, std::vector<double>(7, 0.0), 0), ShapeError);
  CHECK_THROWS_AS(forward_policy(net, obs, 9), ShapeError);
}

TEST_CASE("episode_gradient matches finite differences on every block") {
  const GridWorld w = trainer_world();
  TrainConfig cfg = tiny_config();
  cfg.view_size = 3;  // keep the finite-difference sweep small

  for (std::uint64_t seed : {21u, 22u, 23u}) {
    ProbeNet net = init_probe_net(w, cfg, seed, "fd");
    const EpisodeBatch batch = fd_batch(w, net, derive_seed(777, seed));
    ProbeNet grads = episode_gradient(net, batch);

    auto nb = param_blocks(net);
    auto gb = param_blocks(grads);
    REQUIRE(nb.size() == gb.size());
    const double eps = 1e-5;
    for (std::size_t bi = 0; bi < nb.size(); ++bi) {
      REQUIRE(nb[bi].size == gb[bi].size);
      const std::size_t stride = std::max<std::size_t>(1, nb[bi].size / 9);
      for (std::size_t k = 0; k < nb[bi].size; k += stride) {
        const double saved = nb[bi].data[k];
        nb[bi].data[k] = saved + eps;
        const double up = episode_objective(net, batch);
        nb[bi].data[k] = saved - eps;
        const double down = episode_objective(net, batch);
        nb[bi].data[k] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double an = gb[bi].data[k];
        CHECK(std::fabs(fd - an) <= 1e-6 * (1.0 + std::fabs(fd) + std::fabs(an)));
      }
    }

    // a small ascent step along the gradient must increase the objective
    const double before = episode_objective(net, batch);
    for (std::size_t bi = 0; bi < nb.size(); ++bi) {
      for (std::size_t k = 0; k < nb[bi].size; ++k) {
        nb[bi].data[k] += 1e-4 * gb[bi].data[k];
      }
    }
    CHECK(episode_objective(net, batch) > before);
  }
}

TEST_CASE("empty batch yields zero objective and zero gradients") {
  const GridWorld w = trainer_world();
  const ProbeNet net = init_probe_net(w, tiny_config(), 3, "m");
  const EpisodeBatch batch;
  CHECK(episode_objective(net, batch) == 0.0);
  ProbeNet grads = episode_gradient(net, batch);
  for (const ParamBlock& b : param_blocks(grads)) {
    for (std::size_t k = 0; k < b.size; ++k) CHECK(b.data[k] == 0.0);
  }
}

TEST_CASE("training is deterministic given the seed") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  std::vector<double> curve1, curve2;
  const ProbeNet n1 = train(w, {"box_a"}, cfg, 31, "m", &curve1);
  const ProbeNet n2 = train(w, {"box_a"}, cfg, 31, "m", &curve2);
  CHECK(curve1.size() == static_cast<std::size_t>(cfg.episodes));
  CHECK(curve1 == curve2);

  const auto s1 = snapshot(n1), s2 = snapshot(n2);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(bitwise_equal(s1[i].second, s2[i].second));
  }

  const ProbeNet n3 = train(w, {"box_a"}, cfg, 32, "m");
  const auto s3 = snapshot(n3);
  bool any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    any_diff = any_diff || !bitwise_equal(s1[i].second, s3[i].second);
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(train(w, {}, cfg, 1), TaskError);
  CHECK_THROWS_AS(train(w, {"ghost"}, cfg, 1), TaskError);
}

TEST_CASE("diverging updates raise TrainingError naming the block") {
  const GridWorld w = trainer_world();
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 1e290;
  cfg.episodes = 10;
  try {
    train(w, {"box_a"}, cfg, 77);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("transfer with zero episodes copies the encoder bitwise") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  const ProbeNet source = train(w, {"box_a"}, cfg, 41, "src");

  TrainConfig frozen = cfg;
  frozen.episodes = 0;
  const ProbeNet moved = train_transfer(w, {"plant_a"}, source, frozen, 42, "dst");
  CHECK(moved.model_id == "dst");

  const auto ss = snapshot(source), ms = snapshot(moved);
  bool heads_differ = false;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (ss[i].first.rfind("enc_", 0) == 0) {
      CHECK(bitwise_equal(ss[i].second, ms[i].second));
    } else {
      heads_differ = heads_differ || !bitwise_equal(ss[i].second, ms[i].second);
    }
  }
  CHECK(heads_differ);  // heads are re-drawn from the transfer seed

  // identical encoders produce identical activations on shared probes
  const ProbeSet probes = build_probeset(w, 30, cfg.view_size, 9);
  const MatrixBundle ba = extract_activations(source, probes);
  const MatrixBundle bb = extract_activations(moved, probes);
  REQUIRE(ba.layers.size() == bb.layers.size());
  for (std::size_t l = 0; l < ba.layers.size(); ++l) {
    CHECK(bitwise_equal(ba.layers[l].values.data(), bb.layers[l].values.data()));
  }
}

TEST_CASE("transfer training leaves the frozen encoder untouched") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  const ProbeNet source = train(w, {"box_a"}, cfg, 51, "src");
  const ProbeNet tuned = train_transfer(w, {"plant_a"}, source, cfg, 52, "dst");

  const auto ss = snapshot(source), ts = snapshot(tuned);
  bool heads_moved = false;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (ss[i].first.rfind("enc_", 0) == 0) {
      CHECK(bitwise_equal(ss[i].second, ts[i].second));
    } else {
      heads_moved = heads_moved || !bitwise_equal(ss[i].second, ts[i].second);
    }
  }
  CHECK(heads_moved);

  // architecture mismatches are rejected up front
  TrainConfig other = cfg;
  other.target_dim = cfg.target_dim + 1;
  CHECK_THROWS_AS(train_transfer(w, {"plant_a"}, source, other, 1), ShapeError);
  TrainConfig wrong_view = cfg;
  wrong_view.view_size = 7;
  CHECK_THROWS_AS(train_transfer(w, {"plant_a"}, source, wrong_view, 1), ShapeError);
}

TEST_CASE("evaluate_policy is deterministic and checks the world") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  const ProbeNet net = train(w, {"box_a"}, cfg, 61);
  const double r1 = evaluate_policy(w, net, {"box_a"}, cfg, 8);
  const double r2 = evaluate_policy(w, net, {"box_a"}, cfg, 8);
  CHECK(r1 == r2);
  CHECK(std::isfinite(r1));

  TrainConfig wrong_view = cfg;
  wrong_view.view_size = 7;
  CHECK_THROWS_AS(evaluate_policy(w, net, {"box_a"}, wrong_view, 8), ShapeError);
  CHECK_THROWS_AS(evaluate_policy(w, net, {"ghost"}, cfg, 8), TaskError);
}

TEST_CASE("build_probeset returns distinct deterministic observations") {
  const GridWorld w = trainer_world();
  const ProbeSet p1 = build_probeset(w, 40, 5, 123);
  const ProbeSet p2 = build_probeset(w, 40, 5, 123);
  CHECK(p1.count() == 40);
  CHECK(p1.observations.cols() == 25u * 5u);
  CHECK(bitwise_equal(p1.observations.data(), p2.observations.data()));

  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < p1.count(); ++i) {
    rows.insert(std::vector<double>(p1.observations.row(i),
                                    p1.observations.row(i) + p1.observations.cols()));
  }
  CHECK(rows.size() == p1.count());

  const ProbeSet p3 = build_probeset(w, 40, 5, 124);
  CHECK(!bitwise_equal(p1.observations.data(), p3.observations.data()));

  CHECK_THROWS_AS(build_probeset(w, 100000, 5, 1), ProbeError);
  CHECK_THROWS_AS(build_probeset(w, 0, 5, 1), ProbeError);
}

TEST_CASE("extract_activations mirrors the forward pass layer by layer") {
  const GridWorld w = trainer_world();
  const TrainConfig cfg = tiny_config();
  const ProbeNet net = init_probe_net(w, cfg, 71, "probe_me");
  const ProbeSet probes = build_probeset(w, 25, cfg.view_size, 5);
  const MatrixBundle bundle = extract_activations(net, probes);

  CHECK(bundle.model_id == "probe_me");
  REQUIRE(bundle.layers.size() == 2);
  CHECK(bundle.layers[0].layer_name == "enc1");
  CHECK(bundle.layers[1].layer_name == "enc2");
  CHECK(bundle.layers[0].values.rows() == 10);
  CHECK(bundle.layers[1].values.rows() == 6);
  CHECK(bundle.layers[0].values.cols() == 25);

  for (std::size_t j = 0; j < probes.count(); ++j) {
    const std::vector<double> obs(probes.observations.row(j),
                                  probes.observations.row(j) + probes.observations.cols());
    const StepForward f = forward_policy(net, obs, 0);
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t k = 0; k < f.h[l].size(); ++k) {
        CHECK(bundle.layers[l].values(k, j) == f.h[l][k]);
      }
    }
  }

  ProbeSet wrong;
  wrong.observations = testutil::random_matrix(4, 7, 1);
  CHECK_THROWS_AS(extract_activations(net, wrong), ShapeError);
}

TEST_CASE("save_net and load_net round trip every parameter") {
  const GridWorld w = trainer_world();
  const ProbeNet net = train(w, {"plant_a"}, tiny_config(), 81, "disk_net");
  const auto dir = testutil::make_temp_dir("net");
  save_net(net, dir / "n0");
  const ProbeNet back = load_net(dir / "n0");

  CHECK(back.model_id == net.model_id);
  CHECK(back.view_size == net.view_size);
  CHECK(back.class_ids == net.class_ids);
  CHECK(back.object_ids == net.object_ids);
  CHECK(back.encoder_widths == net.encoder_widths);
  CHECK(back.target_dim == net.target_dim);

  const auto sa = snapshot(net), sb = snapshot(back);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(bitwise_equal(sa[i].second, sb[i].second));
  }

  const std::string manifest = testutil::slurp(dir / "n0" / "manifest.txt");
  CHECK(manifest.find("enc_w1 enc_w1.rsm\n") != std::string::npos);
  CHECK(manifest.find("value_b value_b.rsm\n") != std::string::npos);

  CHECK_THROWS_AS(load_net(dir / "missing"), FormatError);
  std::filesystem::remove(dir / "n0" / "policy_w.rsm");
  CHECK_THROWS_AS(load_net(dir / "n0"), FormatError);
}

TEST_CASE("run_study trains both sides and labels the groups") {
  const GridWorld w = trainer_world();
  TrainConfig cfg = tiny_config();
  cfg.episodes = 12;
  cfg.probe_count = 20;
  TargetSplit split;
  split.a = {"box_a"};
  split.b = {"plant_a"};

  const StudyResult study = run_study(w, split, 2, cfg, 7, 1);
  CHECK(study.group_a.label == "A");
  CHECK(study.group_b.label == "B");
  REQUIRE(study.nets_a.size() == 2);
  REQUIRE(study.group_b.bundles.size() == 2);
  CHECK(study.nets_a[0].model_id == "A0");
  CHECK(study.nets_b[1].model_id == "B1");
  CHECK(study.returns_a[0].size() == 12);
  CHECK(study.probes.count() == 20);
  CHECK(study.group_a.bundles[0].layers.size() == 2);
  study.group_a.validate();
  study.group_b.validate();

  // deterministic under reruns, including threaded ones
  const StudyResult again = run_study(w, split, 2, cfg, 7, 2);
  for (int side = 0; side < 2; ++side) {
    const auto& n1 = side == 0 ? study.nets_a : study.nets_b;
    const auto& n2 = side == 0 ? again.nets_a : again.nets_b;
    for (std::size_t i = 0; i < n1.size(); ++i) {
      const auto s1 = snapshot(n1[i]), s2 = snapshot(n2[i]);
      for (std::size_t bi = 0; bi < s1.size(); ++bi) {
        CHECK(bitwise_equal(s1[bi].second, s2[bi].second));
      }
    }
  }

  CHECK_THROWS_AS(run_study(w, split, 1, cfg, 7, 1), Error);
  TargetSplit empty_side;
  empty_side.a = {"box_a"};
  CHECK_THROWS_AS(run_study(w, empty_side, 2, cfg, 7, 1), TaskError);
}

TEST_CASE("run_transfer recycles sources round-robin and evaluates greedily") {
  const GridWorld w = trainer_world();
  TrainConfig cfg = tiny_config();
  cfg.episodes = 12;
  cfg.transfer_episodes = 0;  // keep the encoders byte-identical to the sources
  const ProbeNet s0 = train(w, {"box_a"}, cfg, 91, "s0");
  const ProbeNet s1 = train(w, {"box_a"}, cfg, 92, "s1");

  const TransferOutcome out = run_transfer(w, {"plant_a"}, {s0, s1}, cfg, 5, 3, 1);
  REQUIRE(out.nets.size() == 3);
  REQUIRE(out.eval_returns.size() == 3);
  CHECK(out.curves[0].empty());  // zero transfer episodes, empty curves
  CHECK(out.nets[0].model_id == "T0");

  // net k borrows source k % 2's encoder
  const auto b0 = snapshot(s0), b1 = snapshot(s1);
  const auto t0 = snapshot(out.nets[0]), t2 = snapshot(out.nets[2]);
  const auto t1 = snapshot(out.nets[1]);
  for (std::size_t i = 0; i < b0.size(); ++i) {
    if (b0[i].first.rfind("enc_", 0) != 0) continue;
    CHECK(bitwise_equal(t0[i].second, b0[i].second));
    CHECK(bitwise_equal(t2[i].second, b0[i].second));
    CHECK(bitwise_equal(t1[i].second, b1[i].second));
  }

  CHECK_THROWS_AS(run_transfer(w, {"plant_a"}, {}, cfg, 5, 2, 1), Error);
}

TEST_CASE("train config json parsing accepts knobs and rejects junk") {
  namespace fs = std::filesystem;
  const fs::path dir = testutil::make_temp_dir("cfg");

  testutil::spit(dir / "good.json", R"({
    "episodes": 40, "learning_rate": 0.02, "gamma": 0.95,
    "encoder_widths": [8, 4], "target_dim": 6, "probe_count": 33,
    "entropy_coef": 0.01, "episode_cap": 50, "seeds": 2,
    "eval_episodes": 7, "transfer_seeds": 3, "transfer_episodes": 9
  })");
  const TrainConfig cfg = TrainConfig::from_json_file(dir / "good.json");
  CHECK(cfg.episodes == 40);
  CHECK(cfg.learning_rate == 0.02);
  CHECK(cfg.gamma == 0.95);
  CHECK(cfg.encoder_widths == std::vector<std::size_t>{8, 4});
  CHECK(cfg.target_dim == 6);
  CHECK(cfg.probe_count == 33);
  CHECK(cfg.eval_episodes == 7);
  CHECK(cfg.transfer_seeds == 3);
  CHECK(cfg.transfer_episodes == 9);
  CHECK(cfg.view_size == 5);  // untouched default

  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "absent.json"), IoError);

  testutil::spit(dir / "junk.json", "{ nope");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "junk.json"), FormatError);

  testutil::spit(dir / "unknown.json", R"({"episodes": 5, "optimizer": "adam"})");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "unknown.json"), FormatError);

  testutil::spit(dir / "badtype.json", R"({"learning_rate": "fast"})");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "badtype.json"), FormatError);

  testutil::spit(dir / "badgamma.json", R"({"gamma": 1.5})");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "badgamma.json"), DataError);

  testutil::spit(dir / "badview.json", R"({"view_size": 4})");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "badview.json"), DataError);

  testutil::spit(dir / "badwidths.json", R"({"encoder_widths": []})");
  CHECK_THROWS_AS(TrainConfig::from_json_file(dir / "badwidths.json"), DataError);

  TrainConfig bad;
  bad.learning_rate = -0.1;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = TrainConfig{};
  bad.value_coef = -1.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}
