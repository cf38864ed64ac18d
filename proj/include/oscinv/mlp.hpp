#pragma once

#include <cstdint>
#include <vector>

#include "oscinv/field.hpp"
#include "oscinv/gmm.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

struct TrainConfig {
  int steps = 20000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

enum class TrainableSubset { kLastLayer, kAll };

struct FinetuneSpec {
  Vec anchor;         // y: the inversion target whose field value is adjusted
  Vec edited_anchor;  // y~: where the frozen field is probed
  std::vector<double> times;
  int steps = 2000;
  TrainableSubset subset = TrainableSubset::kLastLayer;
};

/// Trainable velocity network: a tanh MLP trunk on [x; t] with layer sizes
/// [d+1, 64, 64, 64, d], plus a zero-initialized linear read-out
/// (A0 + A1 t + A2 t^2) x. The bypass carries the far-field linear growth of
/// conditional-expectation fields, which the bounded trunk cannot track.
class MlpField final : public VelocityField {
 public:
  static constexpr int kHiddenWidth = 64;
  static constexpr int kHiddenLayers = 3;

  /// Trunk weights from uniform(+-1/sqrt(fan_in)) draws of the seed stream;
  /// bypass matrices start at zero.
  static MlpField random_init(int dim, std::uint64_t seed);

  int dim() const override { return dim_; }
  Vec eval(const Vec& x, double t) const override;
  bool has_analytic_jacobian() const override { return true; }
  Mat jacobian(const Vec& x, double t) const override;

  /// Parameter tensors in serialization order: W1,b1,...,W4,b4 then A0,A1,A2.
  std::vector<Mat>& weights() { return weights_; }
  const std::vector<Mat>& weights() const { return weights_; }
  std::vector<Vec>& biases() { return biases_; }
  const std::vector<Vec>& biases() const { return biases_; }
  std::vector<Mat>& bypass() { return bypass_; }
  const std::vector<Mat>& bypass() const { return bypass_; }

  std::vector<int> layer_sizes() const;
  std::int64_t parameter_count() const;

  /// Batched forward pass: inputs is (d+1) x B with rows [x; t].
  Mat forward(const Mat& inputs) const;

  bool operator==(const MlpField& other) const;

 private:
  MlpField(int dim, std::vector<Mat> weights, std::vector<Vec> biases, std::vector<Mat> bypass);

  friend MlpField load_checkpoint(const std::vector<std::uint8_t>& bytes);

  int dim_;
  std::vector<Mat> weights_;  // W1..W4, W_l maps layer l-1 to layer l
  std::vector<Vec> biases_;
  std::vector<Mat> bypass_;   // A0, A1, A2, each d x d
};

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  bool diverged = false;
  int divergence_step = -1;
};

/// A coupling minibatch: inputs (d+1) x B holding [x_t; t] columns and the
/// regression targets x_noise - x_data. Batch k of a training run is the
/// pure function of derive_seed(cfg.seed, k), so any step can be replayed.
struct TrainingBatch {
  Mat inputs;
  Mat targets;
};

TrainingBatch make_training_batch(const GaussianMixture& mix, int batch_size, Rng& rng);

/// Mean over the batch of || target - v(x_t, t) ||^2.
double batch_loss(const MlpField& field, const TrainingBatch& batch);

/// Adam on the flow-matching regression loss; cosine learning-rate decay from
/// cfg.learning_rate to zero. The field is updated in place. Divergence
/// (loss above 1e6) stops training and flags the result.
TrainResult train(MlpField& field, const GaussianMixture& mix, const TrainConfig& cfg);

/// Max relative disagreement between backprop parameter gradients and central
/// finite differences (step h) of the batch loss, over probe_count randomly
/// selected parameters on a fixed seed-derived minibatch.
double gradient_check(const MlpField& field, const GaussianMixture& mix, int probe_count,
                      std::uint64_t seed = 0x9d5ULL, double h = 1e-5);

/// Gradient descent on mean over spec.times of ||v(y, t) - v_frozen(y~, t)||^2,
/// updating only the requested parameter subset. The frozen reference copy is
/// captured on entry.
std::vector<TrainLogEntry> finetune(MlpField& field, const FinetuneSpec& spec, double lr);

/// Versioned binary checkpoint: header (magic, version, layer sizes), then
/// little-endian doubles, per layer weights row-major then biases, then the
/// bypass matrices row-major. The round-trip is bit-exact.
std::vector<std::uint8_t> save_checkpoint(const MlpField& field);

/// Throws std::runtime_error on malformed, truncated, or oversized streams.
MlpField load_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace oscinv
