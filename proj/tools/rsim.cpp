#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <typeinfo>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rsim/cca.hpp"
#include "rsim/errors.hpp"
#include "rsim/harness.hpp"
#include "rsim/matrix_io.hpp"
#include "rsim/pwcca.hpp"
#include "rsim/rng.hpp"
#include "rsim/toyenv.hpp"
#include "rsim/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_log_level = 0;  // 0 error, 1 info, 2 debug

void init_logging() {
  const char* env = std::getenv("RSIM_LOG");
  if (!env) return;
  const std::string level = env;
  if (level == "error") {
    g_log_level = 0;
  } else if (level == "info") {
    g_log_level = 1;
  } else if (level == "debug") {
    g_log_level = 2;
  } else {
    std::fprintf(stderr, "rsim: ignoring unknown RSIM_LOG value '%s'\n", env);
  }
}

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::fprintf(stderr, "rsim: %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
  if (g_log_level >= 2) std::fprintf(stderr, "rsim: %s\n", msg.c_str());
}

int exit_code_for(const rsim::Error& e) {
  if (dynamic_cast<const rsim::IllConditionedError*>(&e)) return 4;
  if (dynamic_cast<const rsim::TrainingError*>(&e) ||
      dynamic_cast<const rsim::TaskError*>(&e) ||
      dynamic_cast<const rsim::ReachError*>(&e) ||
      dynamic_cast<const rsim::ProbeError*>(&e)) {
    return 5;
  }
  if (dynamic_cast<const rsim::NumericalError*>(&e) ||
      dynamic_cast<const rsim::DegenerateInputError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const rsim::ShapeError*>(&e) ||
      dynamic_cast<const rsim::BundleError*>(&e) ||
      dynamic_cast<const rsim::FormatError*>(&e) ||
      dynamic_cast<const rsim::DataError*>(&e) ||
      dynamic_cast<const rsim::IoError*>(&e)) {
    return 2;
  }
  return 1;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rsim::IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw rsim::IoError("failed writing " + path.string());
}

rsim::CcaView view_from_string(const std::string& s) {
  if (s == "first") return rsim::CcaView::kFirst;
  if (s == "second") return rsim::CcaView::kSecond;
  if (s == "symmetric") return rsim::CcaView::kSymmetric;
  throw rsim::Error("unknown mode '" + s + "' (expected first, second or symmetric)");
}

rsim::io::MatrixFormat format_from_string(const std::string& s) {
  if (s == "binary") return rsim::io::MatrixFormat::kBinary;
  if (s == "text") return rsim::io::MatrixFormat::kText;
  throw rsim::Error("unknown format '" + s + "' (expected binary or text)");
}

std::string group_label(const fs::path& dir) {
  fs::path p = dir.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

rsim::ModelGroup load_group(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw rsim::IoError("group directory not found: " + dir.string());
  }
  rsim::ModelGroup group;
  group.label = group_label(dir);
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& sub : subdirs) {
    group.bundles.push_back(rsim::io::load_bundle(sub));
  }
  group.validate();
  return group;
}

std::string curves_csv(const std::vector<std::vector<double>>& curves,
                       const std::vector<std::string>& labels) {
  std::string out = "model,episode,return\n";
  char buf[96];
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t e = 0; e < curves[i].size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g\n", labels[i].c_str(), e,
                    curves[i][e]);
      out += buf;
    }
  }
  return out;
}

json config_to_json(const rsim::TrainConfig& cfg) {
  return json{{"episodes", cfg.episodes},
              {"learning_rate", cfg.learning_rate},
              {"gamma", cfg.gamma},
              {"value_coef", cfg.value_coef},
              {"entropy_coef", cfg.entropy_coef},
              {"encoder_widths", cfg.encoder_widths},
              {"target_dim", cfg.target_dim},
              {"probe_count", cfg.probe_count},
              {"episode_cap", cfg.episode_cap},
              {"seeds", cfg.seeds},
              {"view_size", cfg.view_size},
              {"iou_radius", cfg.iou_radius},
              {"eval_episodes", cfg.eval_episodes},
              {"transfer_seeds", cfg.transfer_seeds},
              {"transfer_episodes", cfg.transfer_episodes}};
}

struct DistanceArgs {
  std::string method;
  std::string a, b;
  std::string mode = "symmetric";
  double rel_tol = rsim::kDefaultRelTol;
  double keep = rsim::kDefaultVarianceKeep;
  bool allow_ill = false;
};

int cmd_distance(const DistanceArgs& args) {
  const rsim::ActivationMatrix x = rsim::io::load_matrix(args.a);
  const rsim::ActivationMatrix y = rsim::io::load_matrix(args.b);
  const rsim::Method method = rsim::method_from_string(args.method);

  json out;
  bool ill = false;
  if (method == rsim::Method::kPwcca) {
    const rsim::PwccaDistance d =
        rsim::pwcca_distance(x, y, view_from_string(args.mode), args.rel_tol);
    ill = d.ill_conditioned;
    out = {{"method", "pwcca"},
           {"mode", to_string(d.view)},
           {"value", d.value},
           {"alpha", d.alpha},
           {"rho", d.rho_used},
           {"ill_conditioned", d.ill_conditioned}};
  } else {
    const rsim::CcaResult r = method == rsim::Method::kCca
                                  ? rsim::cca(x, y, args.rel_tol)
                                  : rsim::svcca(x, y, args.keep, args.rel_tol);
    ill = r.ill_conditioned;
    out = {{"method", to_string(method)},
           {"value", rsim::mean_cca_distance(r)},
           {"rho", r.rho},
           {"kept", {r.kept_x, r.kept_y}},
           {"ill_conditioned", r.ill_conditioned}};
  }
  if (ill && !args.allow_ill) {
    throw rsim::IllConditionedError(
        "inputs are ill-conditioned for this comparison (too few columns for the kept "
        "subspaces); pass --allow-ill-conditioned to proceed");
  }
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

struct CompareArgs {
  std::string group_a, group_b, out_dir;
  std::string method = "pwcca";
  std::string mode = "symmetric";
  double rel_tol = rsim::kDefaultRelTol;
  double keep = rsim::kDefaultVarianceKeep;
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool allow_ill = false;
};

int cmd_compare(const CompareArgs& args) {
  const rsim::ModelGroup a = load_group(args.group_a);
  const rsim::ModelGroup b = load_group(args.group_b);

  rsim::CompareParams params;
  params.method = rsim::method_from_string(args.method);
  params.mode = view_from_string(args.mode);
  params.rel_tol = args.rel_tol;
  params.variance_keep = args.keep;
  params.n_resamples = args.resamples;
  params.level = args.level;
  params.seed = args.seed;
  params.allow_ill_conditioned = args.allow_ill;
  params.jobs = static_cast<std::size_t>(std::max(1, args.jobs));

  const rsim::ComparisonReport report = rsim::compare_groups(a, b, params);
  fs::create_directories(args.out_dir);
  write_text_file(fs::path(args.out_dir) / "report.json", rsim::report_to_json(report));
  write_text_file(fs::path(args.out_dir) / "report.csv", rsim::report_to_csv(report));
  log_info("compare: wrote report.json and report.csv under " + args.out_dir);
  return 0;
}

struct SplitArgs {
  std::string world;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_split(const SplitArgs& args) {
  const rsim::GridWorld w = rsim::GridWorld::from_json_file(args.world);
  std::vector<std::string> ids;
  for (const auto& o : w.objects()) ids.push_back(o.id);
  const rsim::TargetSplit split = rsim::make_split(ids, args.seed);
  const json out = {{"seed", args.seed}, {"a", split.a}, {"b", split.b}};
  const std::string text = out.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!args.out.empty()) write_text_file(args.out, text);
  return 0;
}

struct ProbeArgs {
  std::string world;
  std::size_t count = 0;
  int view_size = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_probe(const ProbeArgs& args) {
  const rsim::GridWorld w = rsim::GridWorld::from_json_file(args.world);
  const rsim::ProbeSet probes =
      rsim::build_probeset(w, args.count, args.view_size, args.seed);
  rsim::io::save_matrix(
      rsim::ActivationMatrix{probes.observations, "probes", "probeset"},
      args.out, rsim::io::MatrixFormat::kBinary);
  const json summary = {{"count", probes.count()},
                        {"obs_dim", probes.observations.cols()},
                        {"out", args.out}};
  std::printf("%s\n", summary.dump(2).c_str());
  return 0;
}

struct ConvertArgs {
  std::string in, out;
  std::string to;
};

int cmd_convert(const ConvertArgs& args) {
  const rsim::ActivationMatrix m = rsim::io::load_matrix(args.in);
  rsim::io::save_matrix(m, args.out, format_from_string(args.to));
  return 0;
}

struct StudyArgs {
  std::string world, config, out_dir;
  std::uint64_t seed = 0;
  bool transfer = false;
  int jobs = 1;
  std::string method = "pwcca";
  std::string mode = "symmetric";
  double rel_tol = rsim::kDefaultRelTol;
  double keep = rsim::kDefaultVarianceKeep;
  std::size_t resamples = 1000;
  double level = 0.95;
  bool allow_ill = false;
};

int cmd_study(const StudyArgs& args) {
  const rsim::GridWorld w = rsim::GridWorld::from_json_file(args.world);
  const rsim::TrainConfig cfg = rsim::TrainConfig::from_json_file(args.config);

  std::vector<std::string> ids;
  for (const auto& o : w.objects()) ids.push_back(o.id);
  const rsim::TargetSplit split = rsim::make_split(ids, rsim::derive_seed(args.seed, 0));
  log_info("study: split a=" + std::to_string(split.a.size()) +
           " b=" + std::to_string(split.b.size()) + ", training " +
           std::to_string(cfg.seeds) + " nets per side");

  const rsim::StudyResult study =
      rsim::run_study(w, split, cfg.seeds, cfg, args.seed, args.jobs);
  log_info("study: training done, comparing groups");

  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  std::vector<std::string> artifacts;

  const json split_json = {{"seed", args.seed}, {"a", split.a}, {"b", split.b}};
  write_text_file(out_dir / "split.json", split_json.dump(2) + "\n");
  artifacts.push_back("split.json");

  rsim::io::save_matrix(
      rsim::ActivationMatrix{study.probes.observations, "probes", "probeset"},
      out_dir / "probes.rsm", rsim::io::MatrixFormat::kBinary);
  artifacts.push_back("probes.rsm");

  std::vector<std::string> model_labels;
  std::vector<std::vector<double>> model_curves;
  for (std::size_t i = 0; i < study.nets_a.size(); ++i) {
    model_labels.push_back(study.nets_a[i].model_id);
    model_curves.push_back(study.returns_a[i]);
  }
  for (std::size_t i = 0; i < study.nets_b.size(); ++i) {
    model_labels.push_back(study.nets_b[i].model_id);
    model_curves.push_back(study.returns_b[i]);
  }
  for (std::size_t i = 0; i < model_labels.size(); ++i) {
    const rsim::ProbeNet& net =
        i < study.nets_a.size() ? study.nets_a[i] : study.nets_b[i - study.nets_a.size()];
    rsim::save_net(net, out_dir / "nets" / model_labels[i]);
    artifacts.push_back("nets/" + model_labels[i] + "/manifest.txt");
  }
  for (const auto& bundle : study.group_a.bundles) {
    rsim::io::save_bundle(bundle, out_dir / "bundles" / bundle.model_id);
    artifacts.push_back("bundles/" + bundle.model_id + "/manifest.txt");
  }
  for (const auto& bundle : study.group_b.bundles) {
    rsim::io::save_bundle(bundle, out_dir / "bundles" / bundle.model_id);
    artifacts.push_back("bundles/" + bundle.model_id + "/manifest.txt");
  }
  write_text_file(out_dir / "training_returns.csv", curves_csv(model_curves, model_labels));
  artifacts.push_back("training_returns.csv");

  rsim::CompareParams params;
  params.method = rsim::method_from_string(args.method);
  params.mode = view_from_string(args.mode);
  params.rel_tol = args.rel_tol;
  params.variance_keep = args.keep;
  params.n_resamples = args.resamples;
  params.level = args.level;
  params.seed = rsim::derive_seed(args.seed, 2);
  params.allow_ill_conditioned = args.allow_ill;
  params.jobs = static_cast<std::size_t>(std::max(1, args.jobs));
  const rsim::ComparisonReport report =
      rsim::compare_groups(study.group_a, study.group_b, params);
  write_text_file(out_dir / "report.json", rsim::report_to_json(report));
  write_text_file(out_dir / "report.csv", rsim::report_to_csv(report));
  artifacts.push_back("report.json");
  artifacts.push_back("report.csv");

  json manifest;
  manifest["command"] = "study";
  manifest["seed"] = args.seed;
  manifest["world"] = args.world;
  manifest["config"] = config_to_json(cfg);
  manifest["method"] = args.method;
  manifest["mode"] = args.mode;
  manifest["jobs"] = args.jobs;

  if (args.transfer) {
    log_info("study: running frozen-encoder transfer onto side B");
    const rsim::TransferOutcome tr = rsim::run_transfer(
        w, split.b, study.nets_a, cfg, args.seed, cfg.transfer_seeds, args.jobs);
    std::vector<std::string> tlabels;
    for (const auto& net : tr.nets) tlabels.push_back(net.model_id);
    write_text_file(out_dir / "transfer_curves.csv", curves_csv(tr.curves, tlabels));
    artifacts.push_back("transfer_curves.csv");
    std::string eval_csv = "model,eval_return\n";
    char buf[64];
    for (std::size_t k = 0; k < tr.eval_returns.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g\n", tlabels[k].c_str(),
                    tr.eval_returns[k]);
      eval_csv += buf;
    }
    write_text_file(out_dir / "transfer_eval.csv", eval_csv);
    artifacts.push_back("transfer_eval.csv");
    for (const auto& net : tr.nets) {
      rsim::save_net(net, out_dir / "nets" / net.model_id);
      artifacts.push_back("nets/" + net.model_id + "/manifest.txt");
    }
    manifest["transfer_eval_returns"] = tr.eval_returns;
  }

  std::sort(artifacts.begin(), artifacts.end());
  manifest["artifacts"] = artifacts;
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  log_info("study: wrote " + std::to_string(artifacts.size() + 1) + " artifacts under " +
           args.out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();

  CLI::App app{"Representation similarity toolkit: CCA/SVCCA/PWCCA distances, group "
               "comparisons, and a gridworld probe-training study pipeline"};
  app.require_subcommand(1);

  DistanceArgs dist;
  CLI::App* sub_distance =
      app.add_subcommand("distance", "Distance between two activation matrices");
  sub_distance->add_option("--method", dist.method, "cca, svcca or pwcca")->required();
  sub_distance->add_option("--a", dist.a, "first matrix file")->required();
  sub_distance->add_option("--b", dist.b, "second matrix file")->required();
  sub_distance->add_option("--mode", dist.mode, "pwcca weighting view (first, second, symmetric)");
  sub_distance->add_option("--rel-tol", dist.rel_tol, "rank-truncation relative tolerance");
  sub_distance->add_option("--keep", dist.keep, "svcca variance fraction to keep");
  sub_distance->add_flag("--allow-ill-conditioned", dist.allow_ill,
                         "report results even when the comparison is ill-conditioned");

  CompareArgs cmp;
  CLI::App* sub_compare =
      app.add_subcommand("compare", "Compare two groups of model bundles");
  sub_compare->add_option("--group-a", cmp.group_a, "directory of bundle directories")
      ->required();
  sub_compare->add_option("--group-b", cmp.group_b, "directory of bundle directories")
      ->required();
  sub_compare->add_option("--out", cmp.out_dir, "output directory")->required();
  sub_compare->add_option("--method", cmp.method, "cca, svcca or pwcca");
  sub_compare->add_option("--mode", cmp.mode, "pwcca weighting view");
  sub_compare->add_option("--rel-tol", cmp.rel_tol, "rank-truncation relative tolerance");
  sub_compare->add_option("--keep", cmp.keep, "svcca variance fraction to keep");
  sub_compare->add_option("--resamples", cmp.resamples, "bootstrap resamples");
  sub_compare->add_option("--level", cmp.level, "bootstrap confidence level");
  sub_compare->add_option("--seed", cmp.seed, "bootstrap seed")->required();
  sub_compare->add_option("--jobs", cmp.jobs, "worker thread cap");
  sub_compare->add_flag("--allow-ill-conditioned", cmp.allow_ill,
                        "tolerate ill-conditioned comparisons");

  SplitArgs spl;
  CLI::App* sub_split = app.add_subcommand("split", "Split a world's targets into two sides");
  sub_split->add_option("--world", spl.world, "world file")->required();
  sub_split->add_option("--seed", spl.seed, "split seed")->required();
  sub_split->add_option("--out", spl.out, "optional JSON output file");

  ProbeArgs prb;
  CLI::App* sub_probe = app.add_subcommand("probe", "Build a probe observation set");
  sub_probe->add_option("--world", prb.world, "world file")->required();
  sub_probe->add_option("--count", prb.count, "number of probe observations")->required();
  sub_probe->add_option("--view-size", prb.view_size, "view window size (odd)");
  sub_probe->add_option("--seed", prb.seed, "selection seed")->required();
  sub_probe->add_option("--out", prb.out, "output matrix file")->required();

  ConvertArgs cnv;
  CLI::App* sub_convert =
      app.add_subcommand("convert", "Convert a matrix between binary and text formats");
  sub_convert->add_option("--in", cnv.in, "input matrix file")->required();
  sub_convert->add_option("--out", cnv.out, "output matrix file")->required();
  sub_convert->add_option("--to", cnv.to, "output format: binary or text")->required();

  StudyArgs stu;
  CLI::App* sub_study =
      app.add_subcommand("study", "End-to-end split/train/extract/compare study");
  sub_study->add_option("--world", stu.world, "world file")->required();
  sub_study->add_option("--config", stu.config, "training config file")->required();
  sub_study->add_option("--seed", stu.seed, "study seed")->required();
  sub_study->add_option("--out", stu.out_dir, "output directory")->required();
  sub_study->add_flag("--transfer", stu.transfer, "also run frozen-encoder transfer onto side B");
  sub_study->add_option("--jobs", stu.jobs, "worker thread cap");
  sub_study->add_option("--method", stu.method, "cca, svcca or pwcca");
  sub_study->add_option("--mode", stu.mode, "pwcca weighting view");
  sub_study->add_option("--rel-tol", stu.rel_tol, "rank-truncation relative tolerance");
  sub_study->add_option("--keep", stu.keep, "svcca variance fraction to keep");
  sub_study->add_option("--resamples", stu.resamples, "bootstrap resamples");
  sub_study->add_option("--level", stu.level, "bootstrap confidence level");
  sub_study->add_flag("--allow-ill-conditioned", stu.allow_ill,
                      "tolerate ill-conditioned comparisons");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (*sub_distance) return cmd_distance(dist);
    if (*sub_compare) return cmd_compare(cmp);
    if (*sub_split) return cmd_split(spl);
    if (*sub_probe) return cmd_probe(prb);
    if (*sub_convert) return cmd_convert(cnv);
    if (*sub_study) return cmd_study(stu);
  } catch (const rsim::Error& e) {
    std::fprintf(stderr, "rsim: error: %s\n", e.what());
    log_debug(std::string("error type: ") + typeid(e).name());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rsim: unexpected error: %s\n", e.what());
    return 1;
  }
  return 1;
}
