#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscinv/inversion.hpp"
#include "oscinv/mlp.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// Shortest text that parses back to exactly the same double, capped at 17
/// significant digits (%.17g with trailing-zero trimming).
std::string format_double(double v);

/// Serializes with stable key order (insertion order of ordered_json),
/// 2-space indentation, and format_double for every number, so equal
/// documents are byte-identical.
void write_json(std::ostream& os, const nlohmann::ordered_json& doc);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

/// trajectory.csv: iter, z_0..z_{d-1}, step_distance, pred_0..pred_{d-1};
/// step_distance is blank on row 0.
void write_trajectory_csv(const std::filesystem::path& path, const InversionTrajectory& traj);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainLogEntry>& log);

nlohmann::ordered_json vec_to_json(const Vec& v);

}  // namespace oscinv
