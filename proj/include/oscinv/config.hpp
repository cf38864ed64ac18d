#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscinv/gmm.hpp"
#include "oscinv/mlp.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// Configuration problems: bad JSON, unknown keys, out-of-range values.
/// The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FieldKind { kAnalytic, kLearned };

struct FieldSelector {
  FieldKind kind = FieldKind::kAnalytic;
  std::string checkpoint_path;  // learned fields only
};

struct FinetuneConfig {
  Vec anchor;
  Vec edited_anchor;
  std::vector<double> times;
  int steps = 2000;
  TrainableSubset subset = TrainableSubset::kLastLayer;
  double learning_rate = 1e-2;
};

struct PostOptConfig {
  double beta = 1.0;
  std::optional<double> kernel_scale;  // absent: median heuristic on the references
  Vec rgb_target;
  int max_iters = 500;
  double tolerance = 1e-6;
  int reference_phase = 0;
  std::optional<Vec> init;  // absent: phase-mean average
};

struct SweepConfig {
  std::vector<double> gammas;
  int iterations = 3000;  // long tails classify slow geometric convergence correctly
};

struct VerifyConfig {
  int trials = 50;
  Vec anchor;
  double jitter = 0.3;
};

struct SampleConfig {
  int draws = 1000;
};

/// One experiment, parsed from a single strict JSON document: unknown keys
/// are rejected and every numeric range is validated at load. Component
/// weights may deviate from unit sum by at most 1e-9 and are renormalized.
struct ExperimentConfig {
  GaussianMixture mixture{{{1.0, Vec::Zero(1), 1.0}}, 1};
  int schedule_steps = 100;
  double gamma = 0.5;
  int iterations = 30;
  int window = 50;
  double tolerance = 1e-2;
  std::vector<Vec> targets;
  FieldSelector field;
  std::optional<TrainConfig> train;
  std::optional<FinetuneConfig> finetune;
  std::optional<PostOptConfig> post_opt;
  std::optional<SweepConfig> sweep;
  std::optional<VerifyConfig> verify;
  SampleConfig sample;
  std::uint64_t base_seed = 0;
  std::string output_dir;
  std::string config_hash;  // fnv1a-64 of the document bytes

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Subcommands that need a target (invert, root, verify, ...) call these.
  const Vec& primary_target() const;
  void require_detection_window() const;  // iterations >= 2 * window
};

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace oscinv
