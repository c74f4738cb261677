#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "farconf/metrics.hpp"
#include "farconf/mlp.hpp"
#include "farconf/rays.hpp"
#include "farconf/synth.hpp"
#include "farconf/training.hpp"

namespace farconf {

using ordered_json = nlohmann::ordered_json;

enum class ExperimentKind { boundary_ood, general_ood, gan_generation };

std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(std::string_view s);

struct DataConfig {
  std::vector<GaussianClass> classes = two_gaussians();
  std::size_t n_per_class_train = 5000;
  std::size_t n_per_class_test = 1000;
  std::size_t n_ood_train = 2000;
  std::size_t n_ood_test = 5000;
  std::pair<double, double> radial_band{3.0, 5.0};
  Box2 box;
};

struct ClassifierConfig {
  std::vector<std::size_t> hidden_dims{500, 500};
  Activation activation = Activation::relu;
};

struct AnalysisConfig {
  std::size_t grid_resolution = 201;
  std::size_t n_rays = 1000;
  RayOptions rays;
};

struct CoverageConfig {
  std::pair<double, double> radial_window{3.0, 6.0};
  std::size_t n_bins = 36;
};

struct GanExperimentConfig {
  std::size_t n_per_class = 512;
  GanTrainConfig train;
};

// Everything a run depends on. Training seeds are derived from `seed`, so
// the serialised config alone reproduces a run.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::boundary_ood;
  std::uint64_t seed = 0;
  DataConfig data;
  ClassifierConfig classifier;
  TrainConfig confident{TrainMode::confident, 1.0, {}, 128, 200, 0};
  TrainConfig reject{TrainMode::reject, 0.0, {}, 128, 200, 0};
  GanExperimentConfig gan;
  AnalysisConfig analysis;
  CoverageConfig coverage;

  std::size_t num_classes() const { return data.classes.size(); }
  MlpSpec classifier_spec() const;
  // Copies of the per-model training configs with derived seeds filled in.
  TrainConfig confident_config() const;
  TrainConfig reject_config() const;
  GanTrainConfig gan_config() const;
  void validate() const;
};

ordered_json config_to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown top-level keys are a ConfigError.
ExperimentConfig config_from_json(const ordered_json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ExperimentData {
  Dataset train_in;
  Dataset train_ood;  // empty for gan_generation
  Dataset test_in;
  Dataset test_ood;
};

ExperimentData generate_data(const ExperimentConfig& cfg);

struct MethodMetrics {
  ScoreMethod method = ScoreMethod::max_prob;
  double auroc = 0.0;
  double fpr_at_95_tpr = 0.0;
};

struct GridSummary {
  std::size_t ood_points = 0;       // grid points at Mahalanobis distance >= 3
  double ood_max_in_class_prob = 0.0;
  double ood_fraction_above_0_99 = 0.0;
};

struct ModelDetection {
  std::string model;
  HeadKind head = HeadKind::plain;
  double in_accuracy = 0.0;  // argmax over the in-distribution classes
  std::vector<MethodMetrics> methods;
  // Test OOD points whose largest in-distribution class probability exceeds 0.9 / 0.99.
  double ood_high_conf_0_9 = 0.0;
  double ood_high_conf_0_99 = 0.0;
  std::optional<GridSummary> grid;

  const MethodMetrics& metrics(ScoreMethod m) const;
};

ModelDetection evaluate_model(const std::string& name, const NetworkParams& params, HeadKind head,
                              std::size_t num_classes, const Dataset& test_in, const Dataset& test_ood);

GridSummary summarize_grid(const ConfidenceGrid& grid, std::span<const GaussianClass> classes);

struct GanTracePoint {
  std::size_t epoch = 0;
  double mean_entropy = 0.0;
  std::vector<double> coverage;  // per class
};

struct ModelOutcome {
  std::string name;
  HeadKind head = HeadKind::plain;
  NetworkParams params;
  ModelDetection detection;
  RaySurveySummary rays;
};

struct ExperimentOutcome {
  std::vector<ModelOutcome> models;
  std::vector<GanTracePoint> gan_trace;

  const ModelOutcome& model(std::string_view name) const;
};

// Stages, each writing its artifacts under `out_dir`.
void write_data(const ExperimentConfig& cfg, const ExperimentData& data,
                const std::filesystem::path& out_dir);

struct TrainedModel {
  std::string name;
  HeadKind head = HeadKind::plain;
  NetworkParams params;
};

// Trains every model the experiment defines and writes models/*.json and
// logs/train.jsonl. For gan_generation also writes the generator snapshots,
// their samples and the coverage trace.
std::vector<TrainedModel> train_models(const ExperimentConfig& cfg, const ExperimentData& data,
                                       const std::filesystem::path& out_dir,
                                       std::vector<GanTracePoint>* gan_trace = nullptr);

// Ray survey, grid evaluation and plots for one model.
RaySurvey analyze_model(const ExperimentConfig& cfg, const TrainedModel& model, const ExperimentData& data,
                        const std::filesystem::path& out_dir, GridSummary* grid_summary = nullptr);

std::vector<ModelDetection> evaluate_models(const ExperimentConfig& cfg,
                                            const std::vector<TrainedModel>& models,
                                            const ExperimentData& data,
                                            const std::filesystem::path& out_dir);

// Loads models/*.json produced by train_models.
std::vector<TrainedModel> load_models(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Full pipeline. On failure writes `<out_dir>/FAILED` with the message and rethrows.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Records a failure marker for `out_dir`.
void write_failure_marker(const std::filesystem::path& out_dir, std::string_view message);

ordered_json to_json(const ModelDetection& d);
ordered_json to_json(const RaySurveySummary& s);
std::string rays_to_csv(const RaySurvey& survey);
std::string grid_to_csv(const ConfidenceGrid& grid);

}  // namespace farconf
