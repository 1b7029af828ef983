/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end: gen-data, slic, cluster, train-logic, regularize,
// adapt, eval, render.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rpt/rpt.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exposes TrainConfig keys as --dashed-flags whose help shows the default.
/// Options are registered by bind() once every entry is known, so the
/// string slots never move.
class ConfigFlags {
 public:
  void add(CLI::App* app, const std::string& key, const std::string& flag = "") {
    entries_.push_back({key, flag.empty() ? "--" + dashed(key) : flag, app,
                        rpt::config_value(rpt::TrainConfig{}, key), nullptr});
  }

  void bind() {
    for (auto& e : entries_) e.option = e.app->add_option(e.flag, e.value, "config key " + e.key)->capture_default_str();
  }

  /// File values first, then any flag given explicitly.
  rpt::TrainConfig resolve(const std::string& config_path) const {
    rpt::TrainConfig cfg;
    if (!config_path.empty()) cfg = rpt::load_config(config_path);
    for (const auto& e : entries_)
      if (e.option != nullptr && e.option->count() > 0) rpt::set_config_value(cfg, e.key, e.value);
    rpt::validate(cfg);
    return cfg;
  }

 private:
  struct Entry {
    std::string key, flag;
    CLI::App* app;
    std::string value;
    CLI::Option* option;
  };
  static std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
  }
  std::vector<Entry> entries_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw rpt::Error("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw rpt::Error("cannot write " + path.string());
  out << text;
  if (!out) throw rpt::Error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rpt::Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_report(const rpt::IouReport& rep) {
  std::string out;
  char buf[128];
  for (std::size_t c = 0; c < rep.iou.size(); ++c) {
    const char* name = c < rpt::kNumClasses ? rpt::kClassNames[c] : "class";
    if (rep.present[c])
      std::snprintf(buf, sizeof buf, "  %-10s %.4f\n", name, rep.iou[c]);
    else
      std::snprintf(buf, sizeof buf, "  %-10s absent\n", name);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mIoU %.4f\n", rep.miou);
  return out + buf;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 7;
  rpt::GenDatasetOptions options;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  const auto [source, target] = rpt::benchmark_domains(a.seed);
  const auto manifest = rpt::gen_dataset(source, target, a.options, a.out);
  std::cout << "wrote " << a.options.n_source << " source and " << a.options.n_target << " target scenes\n"
            << manifest.string() << "\n";
  return 0;
}

struct SlicArgs {
  std::string in, out;
  std::size_t n = 0;  // 0: area / 32
  double m = rpt::TrainConfig{}.slic_m;
  std::size_t iters = rpt::TrainConfig{}.slic_iters;
  std::uint64_t seed = 7;
};

int run_slic(const SlicArgs& a) {
  const auto image = rpt::grid_from_raw<rpt::Image>(rpt::read_tensor(a.in));
  rpt::validate(image);
  rpt::TrainConfig cfg;
  cfg.slic_n = a.n;
  cfg.slic_m = a.m;
  cfg.slic_iters = a.iters;
  cfg.seed = a.seed;
  rpt::SlicTrace trace;
  const auto sp = rpt::slic(rpt::rgb_to_lab(image), rpt::slic_params_for(cfg, image.height(), image.width()), &trace);
  rpt::write_tensor(a.out, rpt::to_raw(sp));
  std::cout << sp.count << " superpixels after " << trace.iterations << " iterations\n";
  return 0;
}

int run_cluster(const std::string& manifest, const rpt::TrainConfig& cfg, const std::string& out) {
  const auto data = rpt::load_dataset(manifest);
  const auto setup = rpt::cluster_target(data.target, cfg);
  rpt::to_bundle(setup).save(out);
  std::cout << setup.clusters.assignment.size() << " target superpixels in " << setup.clusters.k << " clusters\n";
  return 0;
}

int run_train_logic(const std::string& manifest, const rpt::TrainConfig& cfg, const std::string& out) {
  const auto data = rpt::load_dataset(manifest);
  const auto result = rpt::train_logic_on_source(data.source, cfg);
  rpt::save_logic_model(result.model, out);
  char buf[128];
  std::snprintf(buf, sizeof buf, "final loss %.6f\n", result.final_loss);
  std::cout << buf;
  return 0;
}

/// Files written by `adapt` that `regularize` reads back.
struct RunInputs {
  fs::path manifest, logic;
};

void write_inputs(const fs::path& dir, const RunInputs& in) {
  write_text(dir / "inputs.txt",
             "manifest = " + fs::absolute(in.manifest).string() + "\nlogic = " + fs::absolute(in.logic).string() + "\n");
}

RunInputs read_inputs(const fs::path& dir) {
  std::istringstream in(read_text(dir / "inputs.txt"));
  RunInputs r;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "manifest") r.manifest = value;
    if (key == "logic") r.logic = value;
  }
  if (r.manifest.empty() || r.logic.empty()) throw rpt::FormatError("incomplete inputs.txt in " + dir.string());
  return r;
}

struct AdaptArgs {
  std::string config, manifest, logic, clusters, pretrained, out;
  std::size_t renders = 4;
};

int run_adapt(const AdaptArgs& a, const rpt::TrainConfig& cfg) {
  const fs::path out = a.out;
  ensure_dir(out);
  const auto data = rpt::load_dataset(a.manifest);
  const auto logic = rpt::load_logic_model(a.logic);

  rpt::SegHead pretrained = a.pretrained.empty()
                                ? rpt::pretrain(cfg, data.source)
                                : rpt::seg_head_from_bundle(rpt::TensorBundle::load(a.pretrained));
  auto setup = a.clusters.empty() ? rpt::cluster_target(data.target, cfg)
                                  : rpt::cluster_setup_from_bundle(rpt::TensorBundle::load(a.clusters));
  rpt::to_bundle(setup).save(out / "clusters");
  auto state = rpt::build_state(pretrained, data.target, logic, cfg, std::move(setup));
  const auto result = rpt::adapt(cfg, data, logic, pretrained, std::move(state));

  write_text(out / "config.txt", rpt::format_config(cfg));
  write_text(out / "metrics.csv", rpt::format_metrics_csv(result.rows));
  rpt::to_bundle(pretrained).save(out / "pretrained");
  rpt::to_bundle(result.model).save(out / "model");
  rpt::to_bundle(result.discriminator).save(out / "discriminator");
  write_inputs(out, {a.manifest, a.logic});

  ensure_dir(out / "render");
  for (std::size_t i = 0; i < std::min(a.renders, data.target.size()); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "target_%04zu_", i);
    const std::string stem = (out / "render" / name).string();
    rpt::write_ppm(stem + "gt.ppm", data.target[i].labels);
    rpt::write_ppm(stem + "before.ppm", rpt::predict(pretrained, data.target[i].image));
    rpt::write_ppm(stem + "after.ppm", rpt::predict(result.model, data.target[i].image));
  }

  const auto before = rpt::evaluate(pretrained, data.target, cfg.threads);
  const auto after = rpt::evaluate(result.model, data.target, cfg.threads);
  std::string run = "pretrained target\n" + format_report(before) + "adapted target\n" + format_report(after);
  run += "state refreshes at";
  for (auto it : result.refreshed_at) run += " " + std::to_string(it);
  run += "\n";
  write_text(out / "run.txt", run);
  std::cout << run;
  return 0;
}

int run_regularize(const std::string& state_dir, double lambda, const std::string& report, std::size_t threads) {
  const fs::path dir = state_dir;
  rpt::TrainConfig cfg = rpt::load_config(dir / "config.txt");
  cfg.lambda_pc = cfg.lambda_cc = cfg.lambda_sl = lambda;
  cfg.threads = threads;
  rpt::validate(cfg);
  const auto inputs = read_inputs(dir);
  const auto data = rpt::load_dataset(inputs.manifest);
  const auto logic = rpt::load_logic_model(inputs.logic);
  const auto model = rpt::seg_head_from_bundle(rpt::TensorBundle::load(dir / "model"));
  auto setup = rpt::cluster_setup_from_bundle(rpt::TensorBundle::load(dir / "clusters"));
  const auto state = rpt::build_state(model, data.target, logic, cfg, std::move(setup));

  std::string csv = "image,L_pc,L_cc,L_sl,punished_pc,punished_cc,punished_sl\n";
  char buf[256];
  for (std::size_t i = 0; i < data.target.size(); ++i) {
    const auto logits = rpt::forward_seg(model, data.target[i].image).logits;
    const auto t = rpt::rpt_terms(logits, state, i, cfg);
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%zu,%zu\n", i, t.pcr.loss, t.ccr.loss, t.slr.loss,
                  t.pcr.punished, t.ccr.punished, t.slr.punished);
    csv += buf;
  }
  write_text(report, csv);
  std::cout << "wrote losses for " << data.target.size() << " target images\n";
  return 0;
}

struct EvalArgs {
  std::string pred, gt, model, manifest, domain = "target";
  std::size_t classes = rpt::kNumClasses;
};

int run_eval(const EvalArgs& a, std::size_t threads) {
  rpt::IouReport rep;
  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw UsageError("--pred and --gt go together");
    const auto pred = rpt::labels_from_raw(rpt::read_tensor(a.pred));
    const auto gt = rpt::labels_from_raw(rpt::read_tensor(a.gt));
    rpt::validate(pred, a.classes);
    rpt::validate(gt, a.classes);
    rep = rpt::evaluate_labels(pred, gt, a.classes);
  } else if (!a.model.empty() && !a.manifest.empty()) {
    const auto data = rpt::load_dataset(a.manifest);
    const auto model = rpt::seg_head_from_bundle(rpt::TensorBundle::load(a.model));
    if (a.domain != "source" && a.domain != "target") throw UsageError("--domain must be source or target");
    rep = rpt::evaluate(model, a.domain == "source" ? data.source : data.target, threads);
  } else {
    throw UsageError("eval needs --pred/--gt or --model/--manifest");
  }
  std::cout << format_report(rep);
  return 0;
}

int run_render(const std::string& in, const std::string& palette, const std::string& out) {
  const auto labels = rpt::labels_from_raw(rpt::read_tensor(in));
  rpt::write_ppm(out, labels, palette.empty() ? rpt::kDefaultPalette : rpt::read_palette(palette));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction-transfer regularization for segmentation domain adaptation"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  const rpt::TrainConfig defaults;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the seeded source/target benchmark");
  gen_cmd->add_option("--seed", gen.seed, "benchmark seed")->capture_default_str();
  gen_cmd->add_option("--n-source", gen.options.n_source, "source scenes")->capture_default_str();
  gen_cmd->add_option("--n-target", gen.options.n_target, "target scenes")->capture_default_str();
  gen_cmd->add_option("--height", gen.options.height, "scene height")->capture_default_str();
  gen_cmd->add_option("--width", gen.options.width, "scene width")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  SlicArgs sl;
  auto* slic_cmd = app.add_subcommand("slic", "superpixels of one RGB image tensor");
  slic_cmd->add_option("--in", sl.in, "image .rptt (H x W x 3 f32)")->required();
  slic_cmd->add_option("--n", sl.n, "target superpixel count (0: area / 32)")->capture_default_str();
  slic_cmd->add_option("--m", sl.m, "compactness")->capture_default_str();
  slic_cmd->add_option("--iters", sl.iters, "maximum iterations")->capture_default_str();
  slic_cmd->add_option("--seed", sl.seed, "seed")->capture_default_str();
  slic_cmd->add_option("--out", sl.out, "superpixel map .rptt")->required();

  ConfigFlags flags;
  std::string cluster_manifest, cluster_config, cluster_out;
  auto* cluster_cmd = app.add_subcommand("cluster", "superpixels and k-means over the target features");
  cluster_cmd->add_option("--manifest", cluster_manifest, "dataset manifest")->required();
  cluster_cmd->add_option("--config", cluster_config, "key = value config file");
  for (const char* key : {"k", "kmeans_iters", "slic_n", "slic_m", "slic_iters", "seed"}) flags.add(cluster_cmd, key);
  cluster_cmd->add_option("--out", cluster_out, "output bundle directory")->required();

  std::string logic_manifest, logic_config, logic_out;
  auto* logic_cmd = app.add_subcommand("train-logic", "train the spatial-logic model on source labels");
  logic_cmd->add_option("--manifest", logic_manifest, "dataset manifest")->required();
  logic_cmd->add_option("--config", logic_config, "key = value config file");
  flags.add(logic_cmd, "logic_hidden", "--hidden");
  flags.add(logic_cmd, "logic_epochs", "--epochs");
  flags.add(logic_cmd, "logic_lr", "--lr");
  for (const char* key : {"slic_n", "slic_m", "slic_iters", "n_strips", "seed"}) flags.add(logic_cmd, key);
  logic_cmd->add_option("--out", logic_out, "output bundle directory")->required();

  std::string reg_state, reg_report;
  double reg_lambda = defaults.lambda_pc;
  auto* reg_cmd = app.add_subcommand("regularize", "per-image regularizer losses of an adaptation run");
  reg_cmd->add_option("--state", reg_state, "run directory written by adapt")->required();
  reg_cmd->add_option("--lambda", reg_lambda, "threshold for all three regularizers")->capture_default_str();
  reg_cmd->add_option("--report", reg_report, "output CSV")->required();

  AdaptArgs ad;
  auto* adapt_cmd = app.add_subcommand("adapt", "pre-train on source, then adapt to target");
  adapt_cmd->add_option("--config", ad.config, "key = value config file");
  adapt_cmd->add_option("--manifest", ad.manifest, "dataset manifest")->required();
  adapt_cmd->add_option("--logic", ad.logic, "logic model bundle from train-logic")->required();
  adapt_cmd->add_option("--clusters", ad.clusters, "cluster bundle from cluster (recomputed if absent)");
  adapt_cmd->add_option("--pretrained", ad.pretrained, "pre-trained model bundle (trained if absent)");
  adapt_cmd->add_option("--renders", ad.renders, "target images rendered before/after")->capture_default_str();
  for (const auto& key : rpt::config_keys())
    if (key != "threads") flags.add(adapt_cmd, key);
  adapt_cmd->add_option("--out", ad.out, "run directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "IoU of label maps or of a model on a manifest split");
  eval_cmd->add_option("--pred", ev.pred, "predicted label map .rptt");
  eval_cmd->add_option("--gt", ev.gt, "ground-truth label map .rptt");
  eval_cmd->add_option("--model", ev.model, "model bundle directory");
  eval_cmd->add_option("--manifest", ev.manifest, "dataset manifest");
  eval_cmd->add_option("--domain", ev.domain, "source or target")->capture_default_str();
  eval_cmd->add_option("--classes", ev.classes, "number of classes")->capture_default_str();

  std::string render_in, render_palette, render_out;
  auto* render_cmd = app.add_subcommand("render", "label map to PPM");
  render_cmd->add_option("--in", render_in, "label map .rptt")->required();
  render_cmd->add_option("--palette", render_palette, "palette file (built-in palette if absent)");
  render_cmd->add_option("--out", render_out, "output .ppm")->required();

  flags.bind();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*slic_cmd) return run_slic(sl);
    if (*cluster_cmd) {
      auto cfg = flags.resolve(cluster_config);
      cfg.threads = threads;
      return run_cluster(cluster_manifest, cfg, cluster_out);
    }
    if (*logic_cmd) {
      auto cfg = flags.resolve(logic_config);
      cfg.threads = threads;
      return run_train_logic(logic_manifest, cfg, logic_out);
    }
    if (*reg_cmd) return run_regularize(reg_state, reg_lambda, reg_report, threads);
    if (*adapt_cmd) {
      auto cfg = flags.resolve(ad.config);
      cfg.threads = threads;
      return run_adapt(ad, cfg);
    }
    if (*eval_cmd) return run_eval(ev, threads);
    if (*render_cmd) return run_render(render_in, render_palette, render_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const rpt::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
