#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "farconf/experiment.hpp"
#include "farconf/params_io.hpp"

namespace fs = std::filesystem;
using namespace farconf;

namespace {

struct Common {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON); defaults when omitted")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "override the config seed");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_resolved(const ExperimentConfig& cfg, const fs::path& out) {
  write_file(out / "config.json", config_to_json(cfg).dump(2) + "\n");
}

std::vector<TrainedModel> models_for(const ExperimentConfig& cfg, const fs::path& out, const std::string& model,
                                     const std::string& head) {
  if (model.empty()) return load_models(cfg, out);
  TrainedModel m;
  m.name = fs::path(model).stem().string();
  m.head = head == "reject" ? HeadKind::reject : HeadKind::plain;
  m.params = load_params(model);
  return {m};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"farconf: confidence of ReLU classifiers far from the training data"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, rays_opts, eval_opts, run_opts;
  std::string rays_model, rays_head = "plain", eval_model, eval_head = "plain";

  auto* gen = app.add_subcommand("gen-data", "sample the training and test sets");
  add_common(gen, gen_opts);
  auto* train = app.add_subcommand("train", "train the experiment's classifiers");
  add_common(train, train_opts);
  auto* rays = app.add_subcommand("analyze-rays", "ray survey and confidence grid of trained models");
  add_common(rays, rays_opts);
  rays->add_option("--model", rays_model, "model file; default: the run's models/")->check(CLI::ExistingFile);
  rays->add_option("--head", rays_head, "plain or reject")->check(CLI::IsMember({"plain", "reject"}));
  auto* eval = app.add_subcommand("evaluate", "OOD detection metrics on the test sets");
  add_common(eval, eval_opts);
  eval->add_option("--model", eval_model, "model file; default: the run's models/")->check(CLI::ExistingFile);
  eval->add_option("--head", eval_head, "plain or reject")->check(CLI::IsMember({"plain", "reject"}));
  auto* run = app.add_subcommand("run-experiment", "data, training, evaluation and analysis end to end");
  add_common(run, run_opts);

  CLI11_PARSE(app, argc, argv);

  fs::path out;
  try {
    if (gen->parsed()) {
      out = gen_opts.out;
      const auto cfg = resolve(gen_opts);
      write_resolved(cfg, out);
      write_data(cfg, generate_data(cfg), out);
    } else if (train->parsed()) {
      out = train_opts.out;
      const auto cfg = resolve(train_opts);
      write_resolved(cfg, out);
      const auto data = generate_data(cfg);
      write_data(cfg, data, out);
      train_models(cfg, data, out);
    } else if (rays->parsed()) {
      out = rays_opts.out;
      const auto cfg = resolve(rays_opts);
      const auto data = generate_data(cfg);
      for (const auto& m : models_for(cfg, out, rays_model, rays_head)) {
        const auto survey = analyze_model(cfg, m, data, out);
        std::cout << m.name << ": " << to_json(survey.summary).dump() << "\n";
      }
    } else if (eval->parsed()) {
      out = eval_opts.out;
      const auto cfg = resolve(eval_opts);
      const auto data = generate_data(cfg);
      for (const auto& d : evaluate_models(cfg, models_for(cfg, out, eval_model, eval_head), data, out)) {
        std::cout << to_json(d).dump() << "\n";
      }
    } else if (run->parsed()) {
      out = run_opts.out;
      const auto cfg = resolve(run_opts);
      const auto outcome = run_experiment(cfg, out);
      for (const auto& m : outcome.models) {
        std::cout << m.name << ": " << to_json(m.detection).dump() << "\n";
      }
      for (const auto& t : outcome.gan_trace) {
        std::cout << "gan epoch " << t.epoch << ": mean entropy " << t.mean_entropy << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!out.empty()) write_failure_marker(out, e.what());
    return 1;
  }
  return 0;
}
