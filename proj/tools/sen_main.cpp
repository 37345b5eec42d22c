// Command-line front end: train / eval / gradcheck / ablate / params.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sen/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string ckpt_path;
  int64_t seed_override = -1;
};

sen::SENConfig load_config(const CommonArgs& args) {
  sen::SENConfig cfg = args.config_path.empty()
                           ? sen::SENConfig()
                           : sen::SENConfig::from_file(args.config_path);
  if (args.seed_override >= 0) cfg.seed = uint64_t(args.seed_override);
  cfg.validate_or_throw();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", args.seed_override,
                  "Seed override (takes precedence over the config)");
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--ckpt", args.ckpt_path, "Checkpoint path");
}

fs::path ensure_out_dir(const CommonArgs& args) {
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  return dir;
}

int cmd_train(const CommonArgs& args, const std::string& resume_path,
              int64_t stop_at) {
  sen::SENConfig cfg = load_config(args);
  const fs::path out_dir = ensure_out_dir(args);
  sen::Experiment exp(cfg);
  if (!resume_path.empty()) exp.load_checkpoint(resume_path);

  sen::MetricsWriter writer((out_dir / "metrics.jsonl").string());
  sen::TrainOutcome outcome = exp.run(&writer, stop_at);

  const std::string ckpt = args.ckpt_path.empty()
                               ? (out_dir / "checkpoint.senc").string()
                               : args.ckpt_path;
  exp.save_checkpoint(ckpt);

  ordered_json summary;
  summary["steps"] = outcome.steps_run;
  summary["arm"] = sen::to_string(cfg.training.arm);
  summary[exp.metric_name()] = outcome.final_metric;
  summary["encoder_hash"] = outcome.encoder_hash_after;
  summary["checkpoint"] = ckpt;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  sen::SENConfig cfg = load_config(args);
  sen::Experiment exp(cfg);
  if (!args.ckpt_path.empty()) exp.load_checkpoint(args.ckpt_path);
  ordered_json result;
  result["step"] = exp.current_step();
  result[exp.metric_name()] = exp.evaluate();
  std::cout << result.dump() << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, bool sweep) {
  constexpr double kTol = 1e-4;
  if (sweep) {
    bool ok = true;
    double worst = 0.0;
    for (const auto& entry : sen::gradcheck_sweep()) {
      worst = std::max(worst, entry.result.max_rel_err);
      const bool pass = entry.result.max_rel_err < kTol;
      ok = ok && pass;
      std::cout << (pass ? "ok   " : "FAIL ") << entry.label
                << "  max_rel_err=" << entry.result.max_rel_err
                << "  entries=" << entry.result.entries_checked << "\n";
    }
    std::cout << "worst max_rel_err=" << worst << "\n";
    return ok ? 0 : 1;
  }
  sen::SENConfig cfg = load_config(args);
  sen::GradCheckResult r = sen::sen_gradcheck(cfg);
  std::cout << "max_rel_err=" << r.max_rel_err
            << " entries=" << r.entries_checked << "\n";
  return r.max_rel_err < kTol ? 0 : 1;
}

int cmd_params(const CommonArgs& args) {
  sen::SENConfig cfg = load_config(args);
  sen::Experiment exp(cfg);
  auto [frozen, trainable] = exp.sen().count_parameters();
  ordered_json out;
  out["frozen"] = frozen;
  out["trainable"] = trainable;
  out["task_head"] = exp.head_parameter_count();
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& axis,
               int64_t n_seeds) {
  sen::SENConfig base = load_config(args);
  const fs::path out_dir = ensure_out_dir(args);
  sen::MetricsWriter writer(
      (out_dir / ("ablate_" + axis + ".jsonl")).string());

  struct Variant {
    std::string label;
    sen::SENConfig cfg;
  };
  std::vector<Variant> variants;
  if (axis == "fusion") {
    for (sen::FusionKind k :
         {sen::FusionKind::avg, sen::FusionKind::add, sen::FusionKind::concat,
          sen::FusionKind::attention, sen::FusionKind::moe}) {
      sen::SENConfig c = base;
      c.ra.fusion = k;
      variants.push_back({"fusion_" + sen::to_string(k), std::move(c)});
    }
  } else if (axis == "depth") {
    for (int64_t layers : {1, 2, 3, 4}) {
      sen::SENConfig c = base;
      c.ra.layers = layers;
      variants.push_back({"depth_" + std::to_string(layers), std::move(c)});
    }
  } else if (axis == "distribution") {
    for (bool sparse : {true, false}) {
      sen::SENConfig c = base;
      c.ra.sparse = sparse;
      variants.push_back({sparse ? "sparse" : "dense", std::move(c)});
    }
  } else if (axis == "prompt") {
    for (bool q : {true, false}) {
      sen::SENConfig c = base;
      c.ra.learnable_prompt = q;
      variants.push_back({q ? "with_q" : "without_q", std::move(c)});
    }
  } else if (axis == "modality") {
    for (size_t count = 1; count <= base.modalities.size(); ++count) {
      sen::SENConfig c = base;
      c.task.active_modalities.clear();
      for (size_t i = 0; i < count; ++i)
        c.task.active_modalities.push_back(int64_t(i));
      variants.push_back({"modalities_" + std::to_string(count), std::move(c)});
    }
  } else {
    std::cerr << "unknown ablation axis '" << axis
              << "' (fusion|depth|distribution|prompt|modality)\n";
    return 1;
  }

  for (const auto& variant : variants) {
    double sum = 0.0;
    std::string metric;
    for (int64_t s = 0; s < n_seeds; ++s) {
      sen::SENConfig c = variant.cfg;
      c.seed = variant.cfg.seed + uint64_t(s);
      sen::Experiment exp(c);
      sen::TrainOutcome outcome = exp.run(nullptr);
      metric = exp.metric_name();
      sum += outcome.final_metric;
      writer.write(outcome.steps_run, variant.label,
                   "final_" + metric, outcome.final_metric, c.seed);
    }
    const double mean = sum / double(n_seeds);
    writer.write(variant.cfg.training.steps, variant.label,
                 "mean_final_" + metric, mean, variant.cfg.seed);
    std::cout << variant.label << "  mean_" << metric << "=" << mean << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive multi-modal encoder network experiments"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, grad_args, params_args, ablate_args;
  std::string resume_path;
  int64_t stop_at = -1;
  bool sweep = false;
  std::string axis = "depth";
  int64_t ablate_seeds = 1;

  CLI::App* train = app.add_subcommand("train", "Train and checkpoint");
  add_common(train, train_args);
  train->add_option("--resume", resume_path,
                    "Resume from an existing checkpoint");
  train->add_option("--stop-at", stop_at,
                    "Stop after this step (for later resume)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, eval_args);

  CLI::App* grad = app.add_subcommand("gradcheck",
                                      "Finite-difference gradient check");
  add_common(grad, grad_args);
  grad->add_flag("--sweep", sweep,
                 "Run the canonical fusion x distribution x prompt sweep");

  CLI::App* params = app.add_subcommand("params", "Print parameter counts");
  add_common(params, params_args);

  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation axis");
  add_common(ablate, ablate_args);
  ablate->add_option("--axis", axis,
                     "fusion|depth|distribution|prompt|modality");
  ablate->add_option("--seeds", ablate_seeds, "Seeds per variant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args, resume_path, stop_at);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (grad->parsed()) return cmd_gradcheck(grad_args, sweep);
    if (params->parsed()) return cmd_params(params_args);
    if (ablate->parsed()) return cmd_ablate(ablate_args, axis, ablate_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
