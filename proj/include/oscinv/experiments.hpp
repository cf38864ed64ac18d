#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "oscinv/config.hpp"
#include "oscinv/field.hpp"

namespace oscinv {

inline constexpr const char* kToolName = "oscinv";
inline constexpr const char* kToolVersion = "1.0.0";

/// Owning handle for the field selected by the config (analytic mixture or a
/// learned checkpoint).
std::unique_ptr<VelocityField> make_field(const ExperimentConfig& cfg);

/// Uniform summary document: every standard numeric field is present, either
/// with a value or as null next to a "<key>_reason" string. Keys keep
/// insertion order, so serialization is deterministic.
class SummaryBuilder {
 public:
  SummaryBuilder(const ExperimentConfig& cfg, const std::string& subcommand);

  void set(const std::string& key, nlohmann::ordered_json value);
  void set_null(const std::string& key, const std::string& reason);

  /// Fills any untouched standard field with null and a generic reason, then
  /// appends the wall-clock placeholder (timings go to stderr so that replays
  /// stay byte-identical).
  nlohmann::ordered_json finish();

 private:
  nlohmann::ordered_json doc_;
};

/// Subcommand runners. Each creates the output directory, writes its data
/// files plus summary.json, and returns the summary. Runtime failures are
/// reported by exception; validation problems throw ConfigError.
nlohmann::ordered_json run_sample(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_invert(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_group_invert(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out, bool fig3_mode);
nlohmann::ordered_json run_root(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_jacobian(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_train(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_finetune(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_optimize(const ExperimentConfig& cfg, const std::filesystem::path& out);
nlohmann::ordered_json run_verify(const ExperimentConfig& cfg, const std::filesystem::path& out);

}  // namespace oscinv
