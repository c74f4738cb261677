#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "farconf/mlp.hpp"
#include "farconf/optim.hpp"
#include "farconf/rng.hpp"
#include "farconf/synth.hpp"

namespace farconf {

enum class TrainMode { confident, reject, gan_joint };

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::confident;
  double beta = 1.0;  // weight of the KL-to-uniform term; unused in reject mode
  OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-epoch means of the objective's parts over the epoch's minibatches.
struct LossBreakdown {
  std::size_t epoch = 0;      // 1-based
  double ce_in = 0.0;         // in-distribution cross-entropy
  double kl_uniform = 0.0;    // KL(U || p) on OOD samples
  double gan_d = 0.0;         // discriminator loss (negated GAN value)
  double gan_g = 0.0;         // generator adversarial term, mean log(1 - D(G(z)))
  double in_acc = 0.0;        // running in-distribution accuracy over the epoch
  double classifier_total = 0.0;
  double generator_total = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<LossBreakdown> log;
};

struct Minibatch {
  Tensor x_in;
  std::vector<int> y_in;
  Tensor x_ood;  // empty (0 rows) when no OOD data is mixed in

  friend bool operator==(const Minibatch&, const Minibatch&) = default;
};

// Shared data pipeline of the confident and reject trainers. Each minibatch
// holds batch_size/(K+1) OOD rows (rounded) and fills the rest with
// in-distribution rows; an epoch is one pass over the in-distribution set.
// The OOD set is cycled through its own reshuffled order.
class MinibatchStream {
 public:
  MinibatchStream(const Dataset& in, const Dataset& ood, std::size_t batch_size,
                  std::size_t num_classes, std::uint64_t seed);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t in_per_batch() const { return in_per_batch_; }
  std::size_t ood_per_batch() const { return ood_per_batch_; }

  // Reshuffles the in-distribution order.
  void begin_epoch();
  Minibatch next();

 private:
  Tensor in_x_;
  std::vector<int> in_y_;
  Tensor ood_x_;
  std::size_t in_per_batch_ = 0;
  std::size_t ood_per_batch_ = 0;
  std::size_t steps_per_epoch_ = 0;
  Rng rng_;
  std::vector<std::size_t> in_order_;
  std::vector<std::size_t> ood_order_;
  std::size_t in_cursor_ = 0;
  std::size_t ood_cursor_ = 0;
};

// Observer hook for every minibatch a trainer consumes.
using BatchObserver = std::function<void(const Minibatch&)>;

// Minimises ce_in + beta * kl_uniform. `spec.output_dim` is K.
TrainResult train_confident(const Dataset& in_data, const Dataset& ood_data, const MlpSpec& spec,
                            const TrainConfig& cfg, const BatchObserver& observer = {});

// Cross-entropy over K+1 outputs with every OOD sample labelled K. `spec`
// describes the K-class body; the returned network has K+1 outputs.
TrainResult train_reject(const Dataset& in_data, const Dataset& ood_data, const MlpSpec& spec,
                         const TrainConfig& cfg, const BatchObserver& observer = {});

struct GanTrainConfig {
  GanSpec gan;
  TrainConfig classifier{TrainMode::gan_joint, 1.0, {}, 128, 1000, 0};
  OptimizerConfig generator_optimizer{OptimizerKind::adam, 2e-4, 0.0, 0.5, 0.999, 1e-8};
  OptimizerConfig discriminator_optimizer{OptimizerKind::adam, 2e-4, 0.0, 0.5, 0.999, 1e-8};
  std::vector<std::size_t> snapshot_epochs{100, 500, 1000};
  std::size_t snapshot_samples = 512;
};

struct GanSnapshot {
  std::size_t epoch = 0;
  Tensor samples;  // snapshot_samples x data_dim, from a fixed latent batch
  NetworkParams generator;
  double mean_entropy = 0.0;  // classifier predictive entropy on `samples`
};

struct GanResult {
  NetworkParams classifier;
  NetworkParams generator;
  NetworkParams discriminator;
  std::vector<GanSnapshot> trace;
  std::vector<LossBreakdown> log;
};

// Joint optimisation with a classifier trained from scratch. Each iteration
// takes one discriminator step, one generator step (adversarial term + beta
// KL on its samples), then one classifier step (ce_in + beta KL on the
// detached generator samples).
GanResult train_gan_joint(const Dataset& in_data, const MlpSpec& classifier_spec,
                          const GanTrainConfig& cfg);

// Standard-normal latent batch.
Tensor sample_latent(Rng& rng, std::size_t rows, std::size_t latent_dim);

// Shannon entropy (nats) of softmax(logits) per row, averaged.
double mean_predictive_entropy(const NetworkParams& params, const Tensor& x);

// Argmax over the first `num_classes` logits vs labels.
double accuracy(const NetworkParams& params, const Tensor& x, std::span<const int> labels,
                std::size_t num_classes);

}  // namespace farconf
