#include "farconf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "farconf/error.hpp"
#include "farconf/losses.hpp"
#include "farconf/softmax.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace farconf {

namespace {

enum class Head { confident, reject };

// Flush-to-zero and denormals-are-zero for the guard's lifetime.
class DenormalGuard {
 public:
#if defined(__SSE2__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

Tensor stack(const Tensor& top, const Tensor& bottom) {
  if (bottom.rows() == 0 || bottom.size() == 0) return top;
  if (top.cols() != bottom.cols()) throw DimensionError("stack: column count mismatch");
  Tensor out = Tensor::matrix(top.rows() + bottom.rows(), top.cols());
  std::copy(top.data().begin(), top.data().end(), out.data().begin());
  std::copy(bottom.data().begin(), bottom.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

std::size_t count_correct(const Tensor& logits, std::size_t rows, std::span<const int> labels,
                          std::size_t num_classes) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = logits.row(i).first(num_classes);
    if (static_cast<int>(argmax(r)) == labels[i]) ++correct;
  }
  return correct;
}

// Mean -log softmax(logits)[label] over the first `rows` rows.
double cross_entropy_value(const Tensor& logits, std::size_t rows, std::span<const int> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    s -= log_softmax(logits.row(i))[static_cast<std::size_t>(labels[i])];
  }
  return rows ? s / static_cast<double>(rows) : 0.0;
}

void check_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " became non-finite", epoch);
}

void check_in_labels(const Dataset& in, std::size_t num_classes) {
  for (const auto& s : in.samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes) {
      throw ContractError("in-distribution sample carries label " + std::to_string(s.label));
    }
  }
}

TrainResult train_classifier(const Dataset& in_data, const Dataset& ood_data, const MlpSpec& spec,
                             const TrainConfig& cfg, Head head, const BatchObserver& observer) {
  cfg.validate();
  spec.validate();
  const std::size_t k = spec.output_dim;
  if (k < 2) throw ContractError("classifier needs at least two in-distribution classes");
  if (in_data.empty()) throw ContractError("training needs in-distribution data");
  if (head == Head::confident && cfg.beta > 0.0 && ood_data.empty()) {
    throw ContractError("confident training with beta > 0 needs OOD samples");
  }
  if (head == Head::reject && ood_data.empty()) {
    throw ContractError("reject training needs OOD samples");
  }

  MlpSpec net_spec = spec;
  if (head == Head::reject) net_spec.output_dim = k + 1;
  const DenormalGuard ftz;
  const ParamVars vars = ParamVars::bind(init_params(net_spec, Rng::derive_seed(cfg.seed, "classifier_init")));
  std::vector<ad::Var> leaves = vars.leaves();

  const bool use_ood = head == Head::reject || cfg.beta > 0.0;
  const Dataset no_ood{{}, ood_data.provenance, ood_data.seed};
  MinibatchStream stream(in_data, use_ood ? ood_data : no_ood, cfg.batch_size, k,
                         Rng::derive_seed(cfg.seed, "minibatch"));
  Optimizer optimizer(cfg.optimizer);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    stream.begin_epoch();
    LossBreakdown rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    std::size_t correct = 0;
    for (std::size_t step = 0; step < stream.steps_per_epoch(); ++step) {
      const Minibatch batch = stream.next();
      if (observer) observer(batch);
      const std::size_t n_in = batch.x_in.rows();

      ad::Var total;
      Tensor in_logits;
      if (head == Head::confident) {
        const ad::Var logits = forward_graph(vars, ad::Var::constant(batch.x_in));
        const ad::Var ce = cross_entropy(logits, batch.y_in);
        total = ce;
        rec.ce_in += ce.value().item();
        if (cfg.beta > 0.0 && batch.x_ood.rows() > 0) {
          const ad::Var kl = kl_uniform(vars, batch.x_ood, k);
          rec.kl_uniform += kl.value().item();
          total = ad::add(ce, ad::scale(kl, cfg.beta));
        }
        in_logits = logits.value();
      } else {
        std::vector<int> labels = batch.y_in;
        labels.resize(n_in + batch.x_ood.rows(), static_cast<int>(k));
        const ad::Var logits =
            forward_graph(vars, ad::Var::constant(stack(batch.x_in, batch.x_ood)));
        total = cross_entropy(logits, labels);
        rec.ce_in += cross_entropy_value(logits.value(), n_in, batch.y_in);
        in_logits = logits.value();
      }
      const double loss = total.value().item();
      check_finite(loss, "classifier loss", epoch);
      rec.classifier_total += loss;
      seen += n_in;
      correct += count_correct(in_logits, n_in, batch.y_in, k);

      ad::backward(total);
      optimizer.apply(leaves);
    }
    const double steps = static_cast<double>(stream.steps_per_epoch());
    rec.ce_in /= steps;
    rec.kl_uniform /= steps;
    rec.classifier_total /= steps;
    rec.in_acc = static_cast<double>(correct) / static_cast<double>(seen);
    result.log.push_back(rec);
  }
  result.params = vars.snapshot();
  return result;
}

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::confident:
      return "confident";
    case TrainMode::reject:
      return "reject";
    case TrainMode::gan_joint:
      return "gan_joint";
  }
  return "confident";
}

TrainMode train_mode_from_string(std::string_view s) {
  if (s == "confident") return TrainMode::confident;
  if (s == "reject") return TrainMode::reject;
  if (s == "gan_joint") return TrainMode::gan_joint;
  throw ConfigError("unknown training mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

MinibatchStream::MinibatchStream(const Dataset& in, const Dataset& ood, std::size_t batch_size,
                                 std::size_t num_classes, std::uint64_t seed)
    : in_x_(in.points()), in_y_(in.labels()), rng_(Rng::stream(seed, "minibatch_stream")) {
  if (in.empty()) throw ContractError("MinibatchStream: empty in-distribution set");
  if (batch_size == 0) throw ConfigError("MinibatchStream: batch_size must be positive");
  check_in_labels(in, num_classes);
  if (!ood.empty()) {
    for (const auto& s : ood.samples) {
      if (!s.is_ood()) throw ContractError("OOD set contains a labelled sample");
    }
    ood_x_ = ood.points();
    if (ood_x_.cols() != in_x_.cols()) throw DimensionError("OOD and in-distribution dims differ");
    const double share = static_cast<double>(batch_size) / static_cast<double>(num_classes + 1);
    ood_per_batch_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(share)));
    if (ood_per_batch_ >= batch_size) ood_per_batch_ = batch_size - 1;
    if (ood_per_batch_ == 0) throw ConfigError("batch too small to mix OOD samples");
    ood_order_.resize(ood_x_.rows());
    std::iota(ood_order_.begin(), ood_order_.end(), 0);
    rng_.shuffle(std::span(ood_order_));
  }
  in_per_batch_ = batch_size - ood_per_batch_;
  steps_per_epoch_ = (in_x_.rows() + in_per_batch_ - 1) / in_per_batch_;
  in_order_.resize(in_x_.rows());
  std::iota(in_order_.begin(), in_order_.end(), 0);
}

void MinibatchStream::begin_epoch() {
  rng_.shuffle(std::span(in_order_));
  in_cursor_ = 0;
}

Minibatch MinibatchStream::next() {
  if (in_cursor_ >= in_order_.size()) begin_epoch();
  const std::size_t n = std::min(in_per_batch_, in_order_.size() - in_cursor_);
  std::span<const std::size_t> idx(in_order_.data() + in_cursor_, n);
  in_cursor_ += n;

  Minibatch b;
  b.x_in = gather_rows(in_x_, idx);
  b.y_in.reserve(n);
  for (auto i : idx) b.y_in.push_back(in_y_[i]);

  if (ood_per_batch_ > 0) {
    std::vector<std::size_t> oidx;
    oidx.reserve(ood_per_batch_);
    for (std::size_t i = 0; i < ood_per_batch_; ++i) {
      if (ood_cursor_ == ood_order_.size()) {
        rng_.shuffle(std::span(ood_order_));
        ood_cursor_ = 0;
      }
      oidx.push_back(ood_order_[ood_cursor_++]);
    }
    b.x_ood = gather_rows(ood_x_, oidx);
  } else {
    b.x_ood = Tensor::matrix(0, in_x_.cols());
  }
  return b;
}

TrainResult train_confident(const Dataset& in_data, const Dataset& ood_data, const MlpSpec& spec,
                            const TrainConfig& cfg, const BatchObserver& observer) {
  if (cfg.mode != TrainMode::confident) throw ContractError("train_confident: mode must be confident");
  return train_classifier(in_data, ood_data, spec, cfg, Head::confident, observer);
}

TrainResult train_reject(const Dataset& in_data, const Dataset& ood_data, const MlpSpec& spec,
                         const TrainConfig& cfg, const BatchObserver& observer) {
  if (cfg.mode != TrainMode::reject) throw ContractError("train_reject: mode must be reject");
  return train_classifier(in_data, ood_data, spec, cfg, Head::reject, observer);
}

Tensor sample_latent(Rng& rng, std::size_t rows, std::size_t latent_dim) {
  Tensor z = Tensor::matrix(rows, latent_dim);
  for (auto& v : z.data()) v = rng.normal();
  return z;
}

double mean_predictive_entropy(const NetworkParams& params, const Tensor& x) {
  if (x.rows() == 0) return 0.0;
  const Tensor logits = forward_logits(params, x);
  double h = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) h += entropy(softmax(logits.row(i)));
  return h / static_cast<double>(logits.rows());
}

double accuracy(const NetworkParams& params, const Tensor& x, std::span<const int> labels,
                std::size_t num_classes) {
  if (x.rows() == 0) return 0.0;
  const Tensor logits = forward_logits(params, x);
  return static_cast<double>(count_correct(logits, logits.rows(), labels, num_classes)) /
         static_cast<double>(logits.rows());
}

GanResult train_gan_joint(const Dataset& in_data, const MlpSpec& classifier_spec,
                          const GanTrainConfig& cfg) {
  const TrainConfig& tc = cfg.classifier;
  if (tc.mode != TrainMode::gan_joint) throw ContractError("train_gan_joint: mode must be gan_joint");
  tc.validate();
  classifier_spec.validate();
  if (in_data.empty()) throw ContractError("train_gan_joint: empty in-distribution set");
  const std::size_t k = classifier_spec.output_dim;
  if (k < 2) throw ContractError("train_gan_joint: need at least two classes");
  cfg.gan.validate(in_data.dim());

  const DenormalGuard ftz;
  const ParamVars cv = ParamVars::bind(init_params(classifier_spec, Rng::derive_seed(tc.seed, "gan_classifier_init")));
  const ParamVars gv = ParamVars::bind(init_params(cfg.gan.generator, Rng::derive_seed(tc.seed, "gan_generator_init")));
  const ParamVars dv =
      ParamVars::bind(init_params(cfg.gan.discriminator, Rng::derive_seed(tc.seed, "gan_discriminator_init")));
  std::vector<ad::Var> c_leaves = cv.leaves();
  std::vector<ad::Var> g_leaves = gv.leaves();
  std::vector<ad::Var> d_leaves = dv.leaves();

  MinibatchStream stream(in_data, Dataset{}, tc.batch_size, k, Rng::derive_seed(tc.seed, "gan_minibatch"));
  Rng latent_rng = Rng::stream(tc.seed, "gan_latent");
  Rng snapshot_rng = Rng::stream(tc.seed, "gan_snapshot_latent");
  const Tensor snapshot_z = sample_latent(snapshot_rng, cfg.snapshot_samples, cfg.gan.latent_dim);

  Optimizer c_opt(tc.optimizer);
  Optimizer g_opt(cfg.generator_optimizer);
  Optimizer d_opt(cfg.discriminator_optimizer);
  const double beta = tc.beta;

  GanResult result;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    stream.begin_epoch();
    LossBreakdown rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    std::size_t correct = 0;
    for (std::size_t step = 0; step < stream.steps_per_epoch(); ++step) {
      const Minibatch batch = stream.next();
      const Tensor z = sample_latent(latent_rng, batch.x_in.rows(), cfg.gan.latent_dim);
      const ad::Var real = ad::Var::constant(batch.x_in);

      // Discriminator ascends the GAN value on real vs current fakes.
      {
        const ad::Var fake = ad::Var::constant(forward_graph(gv, ad::Var::constant(z)).value());
        const ad::Var loss = discriminator_loss(forward_graph(dv, real), forward_graph(dv, fake));
        check_finite(loss.value().item(), "discriminator loss", epoch);
        rec.gan_d += loss.value().item();
        ad::backward(loss);
        d_opt.apply(d_leaves);
      }

      // Generator descends its adversarial term plus beta * KL through the classifier.
      {
        const ParamVars dc = ParamVars::bind(dv.snapshot(), false);
        const ParamVars cc = ParamVars::bind(cv.snapshot(), false);
        const ad::Var fake = forward_graph(gv, ad::Var::constant(z));
        const ad::Var adv = generator_adversarial_term(forward_graph(dc, fake));
        ad::Var loss = adv;
        if (beta > 0.0) {
          loss = ad::add(adv, ad::scale(kl_uniform_from_logits(forward_graph(cc, fake), k), beta));
        }
        check_finite(loss.value().item(), "generator loss", epoch);
        rec.gan_g += adv.value().item();
        rec.generator_total += loss.value().item();
        ad::backward(loss);
        g_opt.apply(g_leaves);
      }

      // Classifier: in-distribution cross-entropy plus beta * KL on detached fakes.
      {
        const ad::Var logits = forward_graph(cv, real);
        const ad::Var ce = cross_entropy(logits, batch.y_in);
        ad::Var loss = ce;
        rec.ce_in += ce.value().item();
        if (beta > 0.0) {
          const ad::Var fake = ad::Var::constant(forward_graph(gv, ad::Var::constant(z)).value());
          const ad::Var kl = kl_uniform_from_logits(forward_graph(cv, fake), k);
          rec.kl_uniform += kl.value().item();
          loss = ad::add(ce, ad::scale(kl, beta));
        }
        check_finite(loss.value().item(), "classifier loss", epoch);
        rec.classifier_total += loss.value().item();
        seen += batch.x_in.rows();
        correct += count_correct(logits.value(), batch.x_in.rows(), batch.y_in, k);
        ad::backward(loss);
        c_opt.apply(c_leaves);
      }
    }
    const double steps = static_cast<double>(stream.steps_per_epoch());
    rec.ce_in /= steps;
    rec.kl_uniform /= steps;
    rec.gan_d /= steps;
    rec.gan_g /= steps;
    rec.classifier_total /= steps;
    rec.generator_total /= steps;
    rec.in_acc = static_cast<double>(correct) / static_cast<double>(seen);
    result.log.push_back(rec);

    if (std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(), epoch) !=
        cfg.snapshot_epochs.end()) {
      GanSnapshot snap;
      snap.epoch = epoch;
      snap.generator = gv.snapshot();
      snap.samples = forward_logits(snap.generator, snapshot_z);
      snap.mean_entropy = mean_predictive_entropy(cv.snapshot(), snap.samples);
      result.trace.push_back(std::move(snap));
    }
  }
  result.classifier = cv.snapshot();
  result.generator = gv.snapshot();
  result.discriminator = dv.snapshot();
  return result;
}

}  // namespace farconf
