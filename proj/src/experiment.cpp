#include "farconf/experiment.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>

#include "farconf/dataset_io.hpp"
#include "farconf/error.hpp"
#include "farconf/params_io.hpp"
#include "farconf/rng.hpp"
#include "farconf/softmax.hpp"
#include "farconf/svg.hpp"

namespace farconf {

namespace fs = std::filesystem;

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::boundary_ood:
      return "boundary_ood";
    case ExperimentKind::general_ood:
      return "general_ood";
    case ExperimentKind::gan_generation:
      return "gan_generation";
  }
  return "boundary_ood";
}

ExperimentKind experiment_kind_from_string(std::string_view s) {
  if (s == "boundary_ood") return ExperimentKind::boundary_ood;
  if (s == "general_ood") return ExperimentKind::general_ood;
  if (s == "gan_generation") return ExperimentKind::gan_generation;
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

MlpSpec ExperimentConfig::classifier_spec() const {
  MlpSpec spec;
  spec.input_dim = data.classes.empty() ? 2 : data.classes.front().dim();
  spec.hidden_dims = classifier.hidden_dims;
  spec.output_dim = num_classes();
  spec.activation = classifier.activation;
  return spec;
}

TrainConfig ExperimentConfig::confident_config() const {
  TrainConfig c = confident;
  c.mode = TrainMode::confident;
  c.seed = Rng::derive_seed(seed, "train_confident");
  return c;
}

TrainConfig ExperimentConfig::reject_config() const {
  TrainConfig c = reject;
  c.mode = TrainMode::reject;
  c.seed = Rng::derive_seed(seed, "train_reject");
  return c;
}

GanTrainConfig ExperimentConfig::gan_config() const {
  GanTrainConfig g = gan.train;
  const std::size_t d = data.classes.empty() ? 2 : data.classes.front().dim();
  g.gan.generator.input_dim = g.gan.latent_dim;
  g.gan.generator.output_dim = d;
  g.gan.discriminator.input_dim = d;
  g.gan.discriminator.output_dim = 1;
  g.classifier.mode = TrainMode::gan_joint;
  g.classifier.seed = Rng::derive_seed(seed, "train_gan");
  return g;
}

void ExperimentConfig::validate() const {
  if (data.classes.size() < 2) throw ConfigError("experiment needs at least two classes");
  const std::size_t d = data.classes.front().dim();
  for (std::size_t i = 0; i < data.classes.size(); ++i) {
    const auto& c = data.classes[i];
    if (c.dim() != d) throw ConfigError("classes must share one dimension");
    if (c.covariance.size() != d * d) throw ConfigError("covariance must be d x d");
    if (c.label != static_cast<int>(i)) throw ConfigError("class labels must be 0..K-1 in order");
  }
  if (d != 2) throw ConfigError("experiments run in 2-D");
  if (data.n_per_class_train < 1 || data.n_per_class_test < 1 || data.n_ood_test < 1) {
    throw ConfigError("sample counts must be positive");
  }
  if (experiment != ExperimentKind::gan_generation && data.n_ood_train < 1) {
    throw ConfigError("n_ood_train must be positive");
  }
  if (!(data.radial_band.first >= kOodThreshold && data.radial_band.second > data.radial_band.first)) {
    throw ConfigError("radial_band must satisfy 3 <= lo < hi");
  }
  classifier_spec().validate();
  confident_config().validate();
  reject_config().validate();
  if (experiment == ExperimentKind::gan_generation) {
    const auto g = gan_config();
    g.classifier.validate();
    g.gan.validate(d);
    if (gan.n_per_class < 1) throw ConfigError("gan.n_per_class must be positive");
    if (g.snapshot_samples < 1) throw ConfigError("gan.snapshot_samples must be positive");
  }
  if (analysis.grid_resolution < 2) throw ConfigError("grid_resolution must be at least 2");
  if (analysis.n_rays < 1) throw ConfigError("n_rays must be positive");
  if (coverage.n_bins < 4) throw ConfigError("coverage.n_bins must be at least 4");
  if (!(coverage.radial_window.second > coverage.radial_window.first)) {
    throw ConfigError("coverage.radial_window must be increasing");
  }
}

// ---- config json ----

namespace {

ordered_json pair_json(std::pair<double, double> p) { return ordered_json::array({p.first, p.second}); }

ordered_json optimizer_json(const OptimizerConfig& o) {
  ordered_json j;
  j["kind"] = std::string(to_string(o.kind));
  j["learning_rate"] = o.learning_rate;
  j["momentum"] = o.momentum;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
  return j;
}

ordered_json train_json(const TrainConfig& t) {
  ordered_json j;
  j["beta"] = t.beta;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["optimizer"] = optimizer_json(t.optimizer);
  return j;
}

ordered_json net_json(const MlpSpec& s) {
  ordered_json j;
  j["hidden_dims"] = s.hidden_dims;
  j["activation"] = std::string(to_string(s.activation));
  return j;
}

void check_keys(const ordered_json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_pair(const ordered_json& j, const char* key, std::pair<double, double>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw ConfigError(std::string(key) + ": expected [lo, hi]");
  out = {a[0].get<double>(), a[1].get<double>()};
}

void read_optimizer(const ordered_json& j, OptimizerConfig& o) {
  check_keys(j, {"kind", "learning_rate", "momentum", "beta1", "beta2", "eps"}, "optimizer");
  if (j.contains("kind")) o.kind = optimizer_from_string(j.at("kind").get<std::string>());
  read(j, "learning_rate", o.learning_rate);
  read(j, "momentum", o.momentum);
  read(j, "beta1", o.beta1);
  read(j, "beta2", o.beta2);
  read(j, "eps", o.eps);
}

void read_train(const ordered_json& j, TrainConfig& t, std::string_view where) {
  check_keys(j, {"beta", "batch_size", "epochs", "optimizer"}, where);
  read(j, "beta", t.beta);
  read(j, "batch_size", t.batch_size);
  read(j, "epochs", t.epochs);
  if (j.contains("optimizer")) read_optimizer(j.at("optimizer"), t.optimizer);
}

void read_net(const ordered_json& j, MlpSpec& s, std::string_view where) {
  check_keys(j, {"hidden_dims", "activation"}, where);
  read(j, "hidden_dims", s.hidden_dims);
  if (j.contains("activation")) s.activation = activation_from_string(j.at("activation").get<std::string>());
}

GaussianClass class_from_json(const ordered_json& j, int label) {
  check_keys(j, {"mean", "covariance"}, "class");
  GaussianClass c;
  c.label = label;
  c.mean = j.at("mean").get<std::vector<double>>();
  const std::size_t d = c.mean.size();
  if (j.contains("covariance")) {
    const auto rows = j.at("covariance").get<std::vector<std::vector<double>>>();
    if (rows.size() != d) throw ConfigError("covariance must be d x d");
    for (const auto& r : rows) {
      if (r.size() != d) throw ConfigError("covariance must be d x d");
      c.covariance.insert(c.covariance.end(), r.begin(), r.end());
    }
  } else {
    c = GaussianClass::isotropic(c.mean, label);
  }
  return c;
}

}  // namespace

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["experiment"] = std::string(to_string(cfg.experiment));
  j["seed"] = cfg.seed;

  ordered_json data;
  ordered_json classes = ordered_json::array();
  for (const auto& c : cfg.data.classes) {
    ordered_json cj;
    cj["mean"] = c.mean;
    ordered_json cov = ordered_json::array();
    const std::size_t d = c.dim();
    for (std::size_t r = 0; r < d; ++r) {
      cov.push_back(std::vector<double>(c.covariance.begin() + static_cast<std::ptrdiff_t>(r * d),
                                        c.covariance.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
    }
    cj["covariance"] = cov;
    classes.push_back(cj);
  }
  data["classes"] = classes;
  data["n_per_class_train"] = cfg.data.n_per_class_train;
  data["n_per_class_test"] = cfg.data.n_per_class_test;
  data["n_ood_train"] = cfg.data.n_ood_train;
  data["n_ood_test"] = cfg.data.n_ood_test;
  data["radial_band"] = pair_json(cfg.data.radial_band);
  data["box"] = {{"x", pair_json(cfg.data.box.x)}, {"y", pair_json(cfg.data.box.y)}};
  j["data"] = data;

  j["classifier"] = {{"hidden_dims", cfg.classifier.hidden_dims},
                     {"activation", std::string(to_string(cfg.classifier.activation))}};
  j["confident"] = train_json(cfg.confident);
  j["reject"] = train_json(cfg.reject);

  const auto& g = cfg.gan.train;
  ordered_json gan;
  gan["n_per_class"] = cfg.gan.n_per_class;
  gan["latent_dim"] = g.gan.latent_dim;
  gan["generator"] = net_json(g.gan.generator);
  gan["discriminator"] = net_json(g.gan.discriminator);
  gan["classifier"] = train_json(g.classifier);
  gan["generator_optimizer"] = optimizer_json(g.generator_optimizer);
  gan["discriminator_optimizer"] = optimizer_json(g.discriminator_optimizer);
  gan["snapshot_epochs"] = g.snapshot_epochs;
  gan["snapshot_samples"] = g.snapshot_samples;
  j["gan"] = gan;

  j["analysis"] = {{"grid_resolution", cfg.analysis.grid_resolution},
                   {"n_rays", cfg.analysis.n_rays},
                   {"alpha_max_log2", cfg.analysis.rays.alpha_max_log2},
                   {"tie_tolerance", cfg.analysis.rays.tie_tolerance}};
  j["coverage"] = {{"radial_window", pair_json(cfg.coverage.radial_window)},
                   {"n_bins", cfg.coverage.n_bins}};
  return j;
}

ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig cfg;
  try {
    check_keys(j, {"experiment", "seed", "data", "classifier", "confident", "reject", "gan", "analysis",
                   "coverage"},
               "config");
    if (j.contains("experiment")) {
      cfg.experiment = experiment_kind_from_string(j.at("experiment").get<std::string>());
    }
    read(j, "seed", cfg.seed);

    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, {"classes", "n_per_class_train", "n_per_class_test", "n_ood_train", "n_ood_test",
                     "radial_band", "box"},
                 "data");
      if (d.contains("classes")) {
        cfg.data.classes.clear();
        int label = 0;
        for (const auto& c : d.at("classes")) cfg.data.classes.push_back(class_from_json(c, label++));
      }
      read(d, "n_per_class_train", cfg.data.n_per_class_train);
      read(d, "n_per_class_test", cfg.data.n_per_class_test);
      read(d, "n_ood_train", cfg.data.n_ood_train);
      read(d, "n_ood_test", cfg.data.n_ood_test);
      read_pair(d, "radial_band", cfg.data.radial_band);
      if (d.contains("box")) {
        const auto& b = d.at("box");
        check_keys(b, {"x", "y"}, "box");
        read_pair(b, "x", cfg.data.box.x);
        read_pair(b, "y", cfg.data.box.y);
      }
    }

    if (j.contains("classifier")) {
      MlpSpec s;
      s.hidden_dims = cfg.classifier.hidden_dims;
      s.activation = cfg.classifier.activation;
      read_net(j.at("classifier"), s, "classifier");
      cfg.classifier.hidden_dims = s.hidden_dims;
      cfg.classifier.activation = s.activation;
    }
    if (j.contains("confident")) read_train(j.at("confident"), cfg.confident, "confident");
    if (j.contains("reject")) read_train(j.at("reject"), cfg.reject, "reject");

    if (j.contains("gan")) {
      const auto& g = j.at("gan");
      check_keys(g, {"n_per_class", "latent_dim", "generator", "discriminator", "classifier",
                     "generator_optimizer", "discriminator_optimizer", "snapshot_epochs", "snapshot_samples"},
                 "gan");
      auto& t = cfg.gan.train;
      read(g, "n_per_class", cfg.gan.n_per_class);
      read(g, "latent_dim", t.gan.latent_dim);
      if (g.contains("generator")) read_net(g.at("generator"), t.gan.generator, "gan.generator");
      if (g.contains("discriminator")) read_net(g.at("discriminator"), t.gan.discriminator, "gan.discriminator");
      if (g.contains("classifier")) read_train(g.at("classifier"), t.classifier, "gan.classifier");
      if (g.contains("generator_optimizer")) read_optimizer(g.at("generator_optimizer"), t.generator_optimizer);
      if (g.contains("discriminator_optimizer")) {
        read_optimizer(g.at("discriminator_optimizer"), t.discriminator_optimizer);
      }
      read(g, "snapshot_epochs", t.snapshot_epochs);
      read(g, "snapshot_samples", t.snapshot_samples);
    }

    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      check_keys(a, {"grid_resolution", "n_rays", "alpha_max_log2", "tie_tolerance"}, "analysis");
      read(a, "grid_resolution", cfg.analysis.grid_resolution);
      read(a, "n_rays", cfg.analysis.n_rays);
      read(a, "alpha_max_log2", cfg.analysis.rays.alpha_max_log2);
      read(a, "tie_tolerance", cfg.analysis.rays.tie_tolerance);
    }
    if (j.contains("coverage")) {
      const auto& c = j.at("coverage");
      check_keys(c, {"radial_window", "n_bins"}, "coverage");
      read_pair(c, "radial_window", cfg.coverage.radial_window);
      read(c, "n_bins", cfg.coverage.n_bins);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j);
}

// ---- data ----

ExperimentData generate_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  ExperimentData out;
  const bool gan = cfg.experiment == ExperimentKind::gan_generation;
  out.train_in = sample_in_distribution(d.classes, gan ? cfg.gan.n_per_class : d.n_per_class_train,
                                        Rng::derive_seed(cfg.seed, "data_train_in"));
  switch (cfg.experiment) {
    case ExperimentKind::boundary_ood:
      out.train_ood = sample_boundary_ood(d.classes, d.n_ood_train, d.radial_band,
                                          Rng::derive_seed(cfg.seed, "data_train_ood"));
      break;
    case ExperimentKind::general_ood:
      out.train_ood = sample_box_ood(d.box, d.classes, d.n_ood_train, Rng::derive_seed(cfg.seed, "data_train_ood"));
      break;
    case ExperimentKind::gan_generation:
      out.train_ood.provenance = Provenance::gan_ood;
      break;
  }
  out.test_in = sample_in_distribution(d.classes, d.n_per_class_test, Rng::derive_seed(cfg.seed, "data_test_in"));
  out.test_ood = sample_box_ood(d.box, d.classes, d.n_ood_test, Rng::derive_seed(cfg.seed, "data_test_ood"));
  return out;
}

namespace {

std::vector<std::array<double, 2>> xy(const Tensor& t) {
  std::vector<std::array<double, 2>> out;
  if (t.size() == 0) return out;
  out.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out.push_back({t(i, 0), t(i, 1)});
  return out;
}

std::vector<ScatterSeries> dataset_series(const Dataset& in, const Dataset* ood, std::size_t k,
                                          const std::string& ood_label) {
  std::vector<ScatterSeries> series;
  for (std::size_t c = 0; c < k; ++c) {
    ScatterSeries s;
    s.label = "class " + std::to_string(c);
    s.color = category_color(c);
    s.radius = 1.5;
    for (const auto& smp : in.samples) {
      if (smp.label == static_cast<int>(c)) s.points.push_back({smp.point[0], smp.point[1]});
    }
    series.push_back(std::move(s));
  }
  if (ood != nullptr && !ood->empty()) {
    ScatterSeries s;
    s.label = ood_label;
    s.color = "#7f7f7f";
    s.radius = 1.5;
    for (const auto& smp : ood->samples) s.points.push_back({smp.point[0], smp.point[1]});
    series.push_back(std::move(s));
  }
  return series;
}

const fs::path kData = "data";
const fs::path kModels = "models";
const fs::path kLogs = "logs";
const fs::path kReports = "reports";
const fs::path kPlots = "plots";

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json log_json(const std::string& model, const LossBreakdown& l) {
  ordered_json j;
  j["model"] = model;
  j["epoch"] = l.epoch;
  j["ce_in"] = l.ce_in;
  j["kl_uniform"] = l.kl_uniform;
  j["gan_d"] = l.gan_d;
  j["gan_g"] = l.gan_g;
  j["in_acc"] = l.in_acc;
  j["classifier_total"] = l.classifier_total;
  j["generator_total"] = l.generator_total;
  return j;
}

std::string model_file(const std::string& name) { return name + ".json"; }

std::vector<std::pair<std::string, HeadKind>> model_names(ExperimentKind k) {
  if (k == ExperimentKind::gan_generation) return {{"gan_classifier", HeadKind::plain}};
  return {{"confident", HeadKind::plain}, {"reject", HeadKind::reject}};
}

std::string rays_file(const std::string& model) {
  return model == "reject" ? "rays_reject.csv" : "rays.csv";
}

}  // namespace

void write_data(const ExperimentConfig& cfg, const ExperimentData& data, const fs::path& out_dir) {
  const ordered_json cj = config_to_json(cfg);
  write_dataset(out_dir / kData / "train_in.csv", data.train_in, cj);
  if (cfg.experiment != ExperimentKind::gan_generation) {
    write_dataset(out_dir / kData / "train_ood.csv", data.train_ood, cj);
  }
  write_dataset(out_dir / kData / "test_in.csv", data.test_in, cj);
  write_dataset(out_dir / kData / "test_ood.csv", data.test_ood, cj);

  const std::size_t k = cfg.num_classes();
  ScatterData train;
  train.series = dataset_series(data.train_in, cfg.experiment == ExperimentKind::gan_generation ? nullptr : &data.train_ood,
                                k, "train OOD");
  train.bounds = cfg.data.box;
  PlotStyle style;
  style.title = "Training data";
  write_file(out_dir / kPlots / "train_data.svg", render_scatter(train, style));

  ScatterData test;
  test.series = dataset_series(data.test_in, &data.test_ood, k, "test OOD");
  test.bounds = cfg.data.box;
  style.title = "Test data";
  write_file(out_dir / kPlots / "test_data.svg", render_scatter(test, style));
}

// ---- training ----

std::vector<TrainedModel> train_models(const ExperimentConfig& cfg, const ExperimentData& data,
                                       const fs::path& out_dir, std::vector<GanTracePoint>* gan_trace) {
  std::vector<TrainedModel> models;
  std::string log;
  const MlpSpec spec = cfg.classifier_spec();

  if (cfg.experiment != ExperimentKind::gan_generation) {
    TrainResult conf = train_confident(data.train_in, data.train_ood, spec, cfg.confident_config());
    for (const auto& l : conf.log) log += log_json("confident", l).dump() + "\n";
    models.push_back({"confident", HeadKind::plain, std::move(conf.params)});

    TrainResult rej = train_reject(data.train_in, data.train_ood, spec, cfg.reject_config());
    for (const auto& l : rej.log) log += log_json("reject", l).dump() + "\n";
    models.push_back({"reject", HeadKind::reject, std::move(rej.params)});
  } else {
    const GanTrainConfig gcfg = cfg.gan_config();
    GanResult res = train_gan_joint(data.train_in, spec, gcfg);
    for (const auto& l : res.log) log += log_json("gan", l).dump() + "\n";

    std::vector<GanTracePoint> trace;
    ordered_json trace_json = ordered_json::array();
    for (const auto& snap : res.trace) {
      GanTracePoint p;
      p.epoch = snap.epoch;
      p.mean_entropy = snap.mean_entropy;
      p.coverage = angular_coverage(snap.samples, cfg.data.classes, cfg.coverage.radial_window, cfg.coverage.n_bins);
      ordered_json tj;
      tj["epoch"] = p.epoch;
      tj["mean_entropy"] = p.mean_entropy;
      tj["coverage"] = p.coverage;
      trace_json.push_back(tj);
      trace.push_back(p);

      const std::string stem = "epoch" + std::to_string(snap.epoch);
      save_params(snap.generator, out_dir / kModels / ("generator_" + stem + ".json"));
      std::string csv = "x0,x1\n";
      for (std::size_t i = 0; i < snap.samples.rows(); ++i) {
        csv += format_double(snap.samples(i, 0)) + "," + format_double(snap.samples(i, 1)) + "\n";
      }
      write_file(out_dir / kReports / ("gan_samples_" + stem + ".csv"), csv);

      ScatterData sd;
      sd.series = dataset_series(data.train_in, nullptr, cfg.num_classes(), "");
      ScatterSeries gs;
      gs.label = "generated";
      gs.color = "#d62728";
      gs.points = xy(snap.samples);
      sd.series.push_back(std::move(gs));
      PlotStyle style;
      style.title = "Generated samples, epoch " + std::to_string(snap.epoch);
      write_file(out_dir / kPlots / ("gan_" + stem + ".svg"), render_scatter(sd, style));
    }
    ordered_json tj;
    tj["radial_window"] = pair_json(cfg.coverage.radial_window);
    tj["n_bins"] = cfg.coverage.n_bins;
    tj["snapshots"] = trace_json;
    write_file(out_dir / kReports / "gan_trace.json", dump(tj));
    if (gan_trace != nullptr) *gan_trace = std::move(trace);

    save_params(res.generator, out_dir / kModels / "generator.json");
    save_params(res.discriminator, out_dir / kModels / "discriminator.json");
    models.push_back({"gan_classifier", HeadKind::plain, std::move(res.classifier)});
  }

  for (const auto& m : models) save_params(m.params, out_dir / kModels / model_file(m.name));
  write_file(out_dir / kLogs / "train.jsonl", log);
  return models;
}

std::vector<TrainedModel> load_models(const ExperimentConfig& cfg, const fs::path& out_dir) {
  std::vector<TrainedModel> models;
  for (const auto& [name, head] : model_names(cfg.experiment)) {
    const fs::path p = out_dir / kModels / model_file(name);
    if (!fs::exists(p)) throw ConfigError("missing model file " + p.string());
    models.push_back({name, head, load_params(p)});
  }
  return models;
}

// ---- evaluation ----

const MethodMetrics& ModelDetection::metrics(ScoreMethod m) const {
  for (const auto& x : methods) {
    if (x.method == m) return x;
  }
  throw ContractError("no metrics for method " + std::string(to_string(m)));
}

ModelDetection evaluate_model(const std::string& name, const NetworkParams& params, HeadKind head,
                              std::size_t num_classes, const Dataset& test_in, const Dataset& test_ood) {
  const std::size_t outputs = num_classes + (head == HeadKind::reject ? 1 : 0);
  if (params.output_dim() != outputs) throw DimensionError("evaluate_model: output count does not match head");
  ModelDetection d;
  d.model = name;
  d.head = head;
  const Tensor xin = test_in.points();
  const Tensor xood = test_ood.points();
  d.in_accuracy = accuracy(params, xin, test_in.labels(), num_classes);

  std::vector<ScoreMethod> methods{ScoreMethod::max_prob, ScoreMethod::entropy};
  if (head == HeadKind::reject) methods.push_back(ScoreMethod::reject_prob);
  for (const auto m : methods) {
    const auto si = ood_scores(params, xin, m, head);
    const auto so = ood_scores(params, xood, m, head);
    d.methods.push_back({m, auroc(si, so), fpr_at_tpr(si, so, 0.95)});
  }

  const Tensor logits = forward_logits(params, xood);
  std::size_t above_09 = 0;
  std::size_t above_099 = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    const double m = *std::max_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(num_classes));
    if (m > 0.9) ++above_09;
    if (m > 0.99) ++above_099;
  }
  const double n = static_cast<double>(logits.rows());
  d.ood_high_conf_0_9 = static_cast<double>(above_09) / n;
  d.ood_high_conf_0_99 = static_cast<double>(above_099) / n;
  return d;
}

GridSummary summarize_grid(const ConfidenceGrid& grid, std::span<const GaussianClass> classes) {
  GridSummary s;
  std::size_t above = 0;
  for (std::size_t iy = 0; iy < grid.resolution; ++iy) {
    for (std::size_t ix = 0; ix < grid.resolution; ++ix) {
      const double pt[2] = {grid.x_at(ix), grid.y_at(iy)};
      if (mahalanobis_to_nearest(pt, classes).distance < kOodThreshold) continue;
      const double p = grid.max_in_class_prob[iy * grid.resolution + ix];
      ++s.ood_points;
      s.ood_max_in_class_prob = std::max(s.ood_max_in_class_prob, p);
      if (p > 0.99) ++above;
    }
  }
  if (s.ood_points > 0) s.ood_fraction_above_0_99 = static_cast<double>(above) / static_cast<double>(s.ood_points);
  return s;
}

ordered_json to_json(const ModelDetection& d) {
  ordered_json j;
  j["model"] = d.model;
  j["head"] = d.head == HeadKind::reject ? "reject" : "plain";
  j["in_accuracy"] = d.in_accuracy;
  ordered_json methods;
  for (const auto& m : d.methods) {
    methods[std::string(to_string(m.method))] = {{"auroc", m.auroc}, {"fpr_at_95_tpr", m.fpr_at_95_tpr}};
  }
  j["methods"] = methods;
  j["ood_high_confidence"] = {{"above_0.9", d.ood_high_conf_0_9}, {"above_0.99", d.ood_high_conf_0_99}};
  if (d.grid) {
    j["grid"] = {{"ood_points", d.grid->ood_points},
                 {"ood_max_in_class_prob", d.grid->ood_max_in_class_prob},
                 {"ood_fraction_above_0.99", d.grid->ood_fraction_above_0_99}};
  }
  return j;
}

ordered_json to_json(const RaySurveySummary& s) {
  ordered_json j;
  j["n_directions"] = s.n_directions;
  j["fraction_certified"] = s.fraction_certified;
  j["fraction_unique"] = s.fraction_unique;
  j["k_star_histogram"] = s.k_star_histogram;
  j["fraction_confident"] = s.fraction_confident;
  j["mean_limit_entropy"] = s.mean_limit_entropy;
  j["fraction_unique_in_class"] = s.fraction_unique_in_class;
  if (s.fraction_unique_reject) j["fraction_unique_reject"] = *s.fraction_unique_reject;
  return j;
}

std::string rays_to_csv(const RaySurvey& survey) {
  std::string out = "dir_x,dir_y,beta,certified,degenerate,k_star,limit_max_prob,limit_entropy\n";
  for (const auto& r : survey.rays) {
    std::string ks;
    for (std::size_t i = 0; i < r.k_star.size(); ++i) {
      if (i) ks += ';';
      ks += std::to_string(r.k_star[i]);
    }
    out += format_double(r.direction[0]) + "," + format_double(r.direction[1]) + "," + format_double(r.beta) +
           "," + (r.certified ? "1" : "0") + "," + (r.degenerate ? "1" : "0") + "," + ks + ",";
    if (r.certified) out += format_double(r.limit_max_prob()) + "," + format_double(r.limit_entropy());
    else out += ",";
    out += "\n";
  }
  return out;
}

std::string grid_to_csv(const ConfidenceGrid& grid) {
  std::string out = "x0,x1,max_prob,entropy,argmax,max_in_class_prob\n";
  for (std::size_t iy = 0; iy < grid.resolution; ++iy) {
    for (std::size_t ix = 0; ix < grid.resolution; ++ix) {
      const std::size_t i = iy * grid.resolution + ix;
      out += format_double(grid.x_at(ix)) + "," + format_double(grid.y_at(iy)) + "," +
             format_double(grid.max_prob[i]) + "," + format_double(grid.entropy[i]) + "," +
             std::to_string(grid.argmax[i]) + "," + format_double(grid.max_in_class_prob[i]) + "\n";
    }
  }
  return out;
}

RaySurvey analyze_model(const ExperimentConfig& cfg, const TrainedModel& model, const ExperimentData& data,
                        const fs::path& out_dir, GridSummary* grid_summary) {
  const std::size_t k = cfg.num_classes();
  std::optional<std::size_t> reject_index;
  if (model.head == HeadKind::reject) reject_index = k;
  RaySurvey survey = ray_survey(model.params, cfg.analysis.n_rays, Rng::derive_seed(cfg.seed, "rays_" + model.name),
                                cfg.analysis.rays, reject_index);
  write_file(out_dir / kReports / rays_file(model.name), rays_to_csv(survey));

  const ConfidenceGrid grid = grid_confidence(model.params, cfg.data.box, cfg.analysis.grid_resolution, k);
  write_file(out_dir / kReports / ("grid_" + model.name + ".csv"), grid_to_csv(grid));
  const GridSummary gs = summarize_grid(grid, cfg.data.classes);
  if (grid_summary != nullptr) *grid_summary = gs;

  const std::size_t n = grid.resolution;
  HeatmapData conf;
  conf.box = cfg.data.box;
  conf.nx = n;
  conf.ny = n;
  conf.values = grid.max_in_class_prob;
  conf.range = {1.0 / static_cast<double>(k), 1.0};
  conf.overlay = dataset_series(data.train_in, nullptr, k, "");
  for (auto& s : conf.overlay) s.radius = 1.0;
  PlotStyle style;
  style.title = model.name + ": max in-distribution class probability";
  write_file(out_dir / kPlots / (model.name + "_confidence.svg"), render_heatmap(conf, style));

  HeatmapData cls;
  cls.box = cfg.data.box;
  cls.nx = n;
  cls.ny = n;
  cls.categorical = true;
  cls.values.reserve(grid.argmax.size());
  for (auto a : grid.argmax) cls.values.push_back(static_cast<double>(a));
  for (std::size_t c = 0; c < model.params.output_dim(); ++c) {
    cls.category_labels.push_back(reject_index && c == *reject_index ? "reject" : "class " + std::to_string(c));
  }
  style.title = model.name + ": predicted class";
  write_file(out_dir / kPlots / (model.name + "_argmax.svg"), render_heatmap(cls, style));
  return survey;
}

std::vector<ModelDetection> evaluate_models(const ExperimentConfig& cfg, const std::vector<TrainedModel>& models,
                                            const ExperimentData& data, const fs::path& out_dir) {
  std::vector<ModelDetection> out;
  ordered_json j;
  j["experiment"] = std::string(to_string(cfg.experiment));
  j["n_test_in"] = data.test_in.size();
  j["n_test_ood"] = data.test_ood.size();
  ordered_json arr = ordered_json::array();
  for (const auto& m : models) {
    ModelDetection d = evaluate_model(m.name, m.params, m.head, cfg.num_classes(), data.test_in, data.test_ood);
    const ConfidenceGrid grid = grid_confidence(m.params, cfg.data.box, cfg.analysis.grid_resolution, cfg.num_classes());
    d.grid = summarize_grid(grid, cfg.data.classes);
    arr.push_back(to_json(d));
    out.push_back(std::move(d));
  }
  j["models"] = arr;
  write_file(out_dir / kReports / "detection.json", dump(j));
  return out;
}

// ---- orchestration ----

const ModelOutcome& ExperimentOutcome::model(std::string_view name) const {
  for (const auto& m : models) {
    if (m.name == name) return m;
  }
  throw ContractError("no model named " + std::string(name));
}

void write_failure_marker(const fs::path& out_dir, std::string_view message) {
  try {
    write_file(out_dir / "FAILED", std::string(message) + "\n");
  } catch (...) {
  }
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  try {
    cfg.validate();
    fs::create_directories(out_dir);
    fs::remove(out_dir / "FAILED");
    write_file(out_dir / "config.json", dump(config_to_json(cfg)));

    const ExperimentData data = generate_data(cfg);
    write_data(cfg, data, out_dir);

    ExperimentOutcome outcome;
    const auto models = train_models(cfg, data, out_dir, &outcome.gan_trace);

    ordered_json rays_summary;
    ordered_json detection = ordered_json::array();
    for (const auto& m : models) {
      ModelOutcome mo;
      mo.name = m.name;
      mo.head = m.head;
      mo.params = m.params;
      GridSummary gs;
      mo.rays = analyze_model(cfg, m, data, out_dir, &gs).summary;
      mo.detection = evaluate_model(m.name, m.params, m.head, cfg.num_classes(), data.test_in, data.test_ood);
      mo.detection.grid = gs;
      rays_summary[m.name] = to_json(mo.rays);
      detection.push_back(to_json(mo.detection));
      outcome.models.push_back(std::move(mo));
    }
    write_file(out_dir / kReports / "rays_summary.json", dump(rays_summary));

    ordered_json dj;
    dj["experiment"] = std::string(to_string(cfg.experiment));
    dj["n_test_in"] = data.test_in.size();
    dj["n_test_ood"] = data.test_ood.size();
    dj["models"] = detection;
    write_file(out_dir / kReports / "detection.json", dump(dj));
    return outcome;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    throw;
  }
}

}  // namespace farconf
