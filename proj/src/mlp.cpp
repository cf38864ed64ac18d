#include "oscinv/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace oscinv {

namespace {

constexpr char kMagic[8] = {'O', 'I', 'N', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct ForwardCache {
  Mat h1, h2, h3;  // post-activation hidden states, width x B
};

Mat forward_cached(const MlpField& f, const Mat& inputs, ForwardCache& cache) {
  const auto& w = f.weights();
  const auto& b = f.biases();
  cache.h1 = ((w[0] * inputs).colwise() + b[0]).array().tanh().matrix();
  cache.h2 = ((w[1] * cache.h1).colwise() + b[1]).array().tanh().matrix();
  cache.h3 = ((w[2] * cache.h2).colwise() + b[2]).array().tanh().matrix();
  Mat out = (w[3] * cache.h3).colwise() + b[3];

  const int d = f.dim();
  const auto x = inputs.topRows(d);
  const auto t = inputs.row(d);
  const auto& a = f.bypass();
  out += a[0] * x;
  out += a[1] * (x.array().rowwise() * t.array()).matrix();
  out += a[2] * (x.array().rowwise() * (t.array() * t.array())).matrix();
  return out;
}

/// Gradients in the same tensor layout as the field parameters.
struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  std::vector<Mat> bypass;
};

Gradients zero_gradients(const MlpField& f) {
  Gradients g;
  for (const Mat& w : f.weights()) g.weights.push_back(Mat::Zero(w.rows(), w.cols()));
  for (const Vec& b : f.biases()) g.biases.push_back(Vec::Zero(b.size()));
  for (const Mat& a : f.bypass()) g.bypass.push_back(Mat::Zero(a.rows(), a.cols()));
  return g;
}

/// Backprop of dL/dOut through the network; inputs as in forward_cached.
Gradients backward(const MlpField& f, const Mat& inputs, const ForwardCache& cache,
                   const Mat& grad_out) {
  const auto& w = f.weights();
  const int d = f.dim();
  const auto x = inputs.topRows(d);
  const auto t = inputs.row(d);

  Gradients g = zero_gradients(f);
  g.weights[3] = grad_out * cache.h3.transpose();
  g.biases[3] = grad_out.rowwise().sum();
  g.bypass[0] = grad_out * x.transpose();
  g.bypass[1] = grad_out * (x.array().rowwise() * t.array()).matrix().transpose();
  g.bypass[2] = grad_out * (x.array().rowwise() * (t.array() * t.array())).matrix().transpose();

  Mat delta = (w[3].transpose() * grad_out).array() * (1.0 - cache.h3.array().square());
  g.weights[2] = delta * cache.h2.transpose();
  g.biases[2] = delta.rowwise().sum();
  delta = (w[2].transpose() * delta).array() * (1.0 - cache.h2.array().square());
  g.weights[1] = delta * cache.h1.transpose();
  g.biases[1] = delta.rowwise().sum();
  delta = (w[1].transpose() * delta).array() * (1.0 - cache.h1.array().square());
  g.weights[0] = delta * inputs.transpose();
  g.biases[0] = delta.rowwise().sum();
  return g;
}

/// Loss and parameter gradients of mean_b ||target_b - out_b||^2.
double loss_and_gradients(const MlpField& f, const TrainingBatch& batch, Gradients& grads) {
  ForwardCache cache;
  const Mat out = forward_cached(f, batch.inputs, cache);
  const Mat residual = out - batch.targets;
  const double loss = residual.squaredNorm() / residual.cols();
  const Mat grad_out = (2.0 / residual.cols()) * residual;
  grads = backward(f, batch.inputs, cache, grad_out);
  return loss;
}

void append_le_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_le_f64(std::vector<std::uint8_t>& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t read_u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double read_f64() {
    require(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  void read_raw(void* dst, std::size_t n) {
    require(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw std::runtime_error("checkpoint stream truncated at byte " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

MlpField::MlpField(int dim, std::vector<Mat> weights, std::vector<Vec> biases,
                   std::vector<Mat> bypass)
    : dim_(dim),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      bypass_(std::move(bypass)) {}

MlpField MlpField::random_init(int dim, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("field dimension must be positive");
  Rng rng(seed);
  const std::vector<int> sizes = {dim + 1, kHiddenWidth, kHiddenWidth, kHiddenWidth, dim};
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
    weights.push_back(std::move(w));
    biases.push_back(Vec::Zero(fan_out));
  }
  std::vector<Mat> bypass(3, Mat::Zero(dim, dim));
  return MlpField(dim, std::move(weights), std::move(biases), std::move(bypass));
}

std::vector<int> MlpField::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(weights_.front().cols()));
  for (const Mat& w : weights_) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

std::int64_t MlpField::parameter_count() const {
  std::int64_t n = 0;
  for (const Mat& w : weights_) n += w.size();
  for (const Vec& b : biases_) n += b.size();
  for (const Mat& a : bypass_) n += a.size();
  return n;
}

Mat MlpField::forward(const Mat& inputs) const {
  if (inputs.rows() != dim_ + 1) {
    throw std::invalid_argument("forward expects inputs with d+1 rows");
  }
  ForwardCache cache;
  return forward_cached(*this, inputs, cache);
}

Vec MlpField::eval(const Vec& x, double t) const {
  Mat input(dim_ + 1, 1);
  input.topRows(dim_).col(0) = x;
  input(dim_, 0) = t;
  return forward(input).col(0);
}

Mat MlpField::jacobian(const Vec& x, double t) const {
  Mat input(dim_ + 1, 1);
  input.topRows(dim_).col(0) = x;
  input(dim_, 0) = t;
  ForwardCache cache;
  forward_cached(*this, input, cache);

  // Chain rule through the trunk, keeping only the x block of the first layer.
  Mat jac = weights_[0].leftCols(dim_);
  jac = (1.0 - cache.h1.col(0).array().square()).matrix().asDiagonal() * jac;
  jac = weights_[1] * jac;
  jac = (1.0 - cache.h2.col(0).array().square()).matrix().asDiagonal() * jac;
  jac = weights_[2] * jac;
  jac = (1.0 - cache.h3.col(0).array().square()).matrix().asDiagonal() * jac;
  jac = weights_[3] * jac;
  jac += bypass_[0] + t * bypass_[1] + t * t * bypass_[2];
  return jac;
}

bool MlpField::operator==(const MlpField& other) const {
  if (dim_ != other.dim_) return false;
  auto mat_equal = [](const Mat& a, const Mat& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  };
  if (weights_.size() != other.weights_.size()) return false;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!mat_equal(weights_[i], other.weights_[i])) return false;
  }
  for (std::size_t i = 0; i < biases_.size(); ++i) {
    if (biases_[i] != other.biases_[i]) return false;
  }
  for (std::size_t i = 0; i < bypass_.size(); ++i) {
    if (!mat_equal(bypass_[i], other.bypass_[i])) return false;
  }
  return true;
}

TrainingBatch make_training_batch(const GaussianMixture& mix, int batch_size, Rng& rng) {
  const int d = mix.dim();
  TrainingBatch batch;
  batch.inputs.resize(d + 1, batch_size);
  batch.targets.resize(d, batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const auto [x_data, x_noise] = sample_pair(mix, rng);
    const double t = rng.uniform();
    batch.inputs.col(b).head(d) = t * x_noise + (1.0 - t) * x_data;
    batch.inputs(d, b) = t;
    batch.targets.col(b) = x_noise - x_data;
  }
  return batch;
}

double batch_loss(const MlpField& field, const TrainingBatch& batch) {
  const Mat out = field.forward(batch.inputs);
  return (out - batch.targets).squaredNorm() / batch.inputs.cols();
}

TrainResult train(MlpField& field, const GaussianMixture& mix, const TrainConfig& cfg) {
  if (cfg.steps < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("train: steps and batch_size must be positive");
  }
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0 && cfg.adam_beta2 > 0.0 &&
        cfg.adam_beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam betas must lie in (0,1)");
  }

  Gradients m = zero_gradients(field);
  Gradients v = zero_gradients(field);
  constexpr double kPi = 3.14159265358979323846;

  TrainResult result;
  result.log.reserve(cfg.steps);
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const TrainingBatch batch = make_training_batch(mix, cfg.batch_size, rng);
    Gradients grads;
    const double loss = loss_and_gradients(field, batch, grads);
    result.log.push_back({step, loss});
    if (!(loss <= 1e6)) {
      result.diverged = true;
      result.divergence_step = step;
      return result;
    }

    const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * step / cfg.steps));
    beta1_pow *= cfg.adam_beta1;
    beta2_pow *= cfg.adam_beta2;
    const double correction = std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
    auto adam_update = [&](auto& param, auto& m_t, auto& v_t, const auto& g) {
      m_t = cfg.adam_beta1 * m_t + (1.0 - cfg.adam_beta1) * g;
      v_t = cfg.adam_beta2 * v_t + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
      param -= (lr * correction) * (m_t.array() / (v_t.array().sqrt() + cfg.adam_eps)).matrix();
    };
    for (std::size_t i = 0; i < field.weights().size(); ++i) {
      adam_update(field.weights()[i], m.weights[i], v.weights[i], grads.weights[i]);
      adam_update(field.biases()[i], m.biases[i], v.biases[i], grads.biases[i]);
    }
    for (std::size_t i = 0; i < field.bypass().size(); ++i) {
      adam_update(field.bypass()[i], m.bypass[i], v.bypass[i], grads.bypass[i]);
    }
  }
  return result;
}

double gradient_check(const MlpField& field, const GaussianMixture& mix, int probe_count,
                      std::uint64_t seed, double h) {
  if (probe_count < 1) throw std::invalid_argument("probe_count must be positive");
  Rng rng(seed);
  const TrainingBatch batch = make_training_batch(mix, 32, rng);

  Gradients grads;
  loss_and_gradients(field, batch, grads);

  // Flattened tensor list mirroring the parameter layout.
  std::vector<double*> tensor_data;
  std::vector<std::int64_t> tensor_sizes;
  MlpField probe_field = field;
  std::vector<double> flat_grads;
  auto collect = [&](auto& tensors, auto& grad_tensors) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      tensor_data.push_back(tensors[i].data());
      tensor_sizes.push_back(tensors[i].size());
      const auto& g = grad_tensors[i];
      flat_grads.insert(flat_grads.end(), g.data(), g.data() + g.size());
    }
  };
  collect(probe_field.weights(), grads.weights);
  collect(probe_field.biases(), grads.biases);
  collect(probe_field.bypass(), grads.bypass);

  std::int64_t total = 0;
  for (std::int64_t n : tensor_sizes) total += n;

  double worst = 0.0;
  for (int p = 0; p < probe_count; ++p) {
    const std::int64_t flat = static_cast<std::int64_t>(rng.next_u64() % total);
    std::int64_t offset = flat;
    std::size_t tensor = 0;
    while (offset >= tensor_sizes[tensor]) {
      offset -= tensor_sizes[tensor];
      ++tensor;
    }
    double* slot = tensor_data[tensor] + offset;
    const double original = *slot;
    *slot = original + h;
    const double loss_plus = batch_loss(probe_field, batch);
    *slot = original - h;
    const double loss_minus = batch_loss(probe_field, batch);
    *slot = original;
    const double fd = (loss_plus - loss_minus) / (2.0 * h);
    const double bp = flat_grads[flat];
    const double denom = std::max({std::abs(fd), std::abs(bp), 1e-6});
    worst = std::max(worst, std::abs(fd - bp) / denom);
  }
  return worst;
}

std::vector<TrainLogEntry> finetune(MlpField& field, const FinetuneSpec& spec, double lr) {
  if (spec.times.empty()) throw std::invalid_argument("finetune: times must be non-empty");
  for (double t : spec.times) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("finetune: times must lie in (0,1)");
  }
  if (spec.steps < 1) throw std::invalid_argument("finetune: steps must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("finetune: learning rate must be positive");
  if (spec.anchor.size() != field.dim() || spec.edited_anchor.size() != field.dim()) {
    throw std::invalid_argument("finetune: anchor dimension does not match field");
  }

  const MlpField frozen = field;  // v^gt
  const int d = field.dim();
  const int n = static_cast<int>(spec.times.size());

  TrainingBatch batch;
  batch.inputs.resize(d + 1, n);
  batch.targets.resize(d, n);
  for (int i = 0; i < n; ++i) {
    batch.inputs.col(i).head(d) = spec.anchor;
    batch.inputs(d, i) = spec.times[i];
    batch.targets.col(i) = frozen.eval(spec.edited_anchor, spec.times[i]);
  }

  std::vector<TrainLogEntry> log;
  log.reserve(spec.steps);
  for (int step = 0; step < spec.steps; ++step) {
    Gradients grads;
    const double loss = loss_and_gradients(field, batch, grads);
    log.push_back({step, loss});
    if (spec.subset == TrainableSubset::kAll) {
      for (std::size_t i = 0; i < field.weights().size(); ++i) {
        field.weights()[i] -= lr * grads.weights[i];
        field.biases()[i] -= lr * grads.biases[i];
      }
      for (std::size_t i = 0; i < field.bypass().size(); ++i) {
        field.bypass()[i] -= lr * grads.bypass[i];
      }
    } else {
      field.weights().back() -= lr * grads.weights.back();
      field.biases().back() -= lr * grads.biases.back();
    }
  }
  return log;
}

std::vector<std::uint8_t> save_checkpoint(const MlpField& field) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  append_le_u32(out, kVersion);
  const std::vector<int> sizes = field.layer_sizes();
  append_le_u32(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) append_le_u32(out, static_cast<std::uint32_t>(s));
  append_le_u32(out, static_cast<std::uint32_t>(field.bypass().size()));
  for (std::size_t l = 0; l < field.weights().size(); ++l) {
    const Mat& w = field.weights()[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) append_le_f64(out, w(i, j));
    }
    const Vec& b = field.biases()[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) append_le_f64(out, b[i]);
  }
  for (const Mat& a : field.bypass()) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) append_le_f64(out, a(i, j));
    }
  }
  return out;
}

MlpField load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader reader(bytes);
  char magic[8];
  reader.read_raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint header: bad magic, not an oscinv checkpoint");
  }
  const std::uint32_t version = reader.read_u32();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint header: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n_sizes = reader.read_u32();
  if (n_sizes < 2 || n_sizes > 64) {
    throw std::runtime_error("checkpoint header: implausible layer count");
  }
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) {
    s = static_cast<int>(reader.read_u32());
    if (s < 1 || s > 1 << 20) throw std::runtime_error("checkpoint header: bad layer size");
  }
  const int d = sizes.back();
  if (sizes.front() != d + 1) {
    throw std::runtime_error("checkpoint header: input width must be output width + 1");
  }
  const std::uint32_t n_bypass = reader.read_u32();
  if (n_bypass != 3) throw std::runtime_error("checkpoint header: expected 3 bypass matrices");

  std::vector<Mat> weights;
  std::vector<Vec> biases;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Mat w(sizes[l + 1], sizes[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = reader.read_f64();
    }
    Vec b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = reader.read_f64();
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  std::vector<Mat> bypass;
  for (std::uint32_t k = 0; k < n_bypass; ++k) {
    Mat a(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) a(i, j) = reader.read_f64();
    }
    bypass.push_back(std::move(a));
  }
  if (reader.remaining() != 0) {
    throw std::runtime_error("checkpoint stream has " + std::to_string(reader.remaining()) +
                             " trailing bytes");
  }
  return MlpField(d, std::move(weights), std::move(biases), std::move(bypass));
}

}  // namespace oscinv
