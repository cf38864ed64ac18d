#include "oscinv/emit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace oscinv {

namespace {

void write_json_value(std::ostream& os, const nlohmann::ordered_json& value, int indent) {
  const std::string pad(indent, ' ');
  const std::string pad_inner(indent + 2, ' ');
  switch (value.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (value.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [key, item] : value.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad_inner << nlohmann::ordered_json(key).dump() << ": ";
        write_json_value(os, item, indent + 2);
      }
      os << "\n" << pad << "}";
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (value.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      bool first = true;
      for (const auto& item : value) {
        if (!first) os << ",\n";
        first = false;
        os << pad_inner;
        write_json_value(os, item, indent + 2);
      }
      os << "\n" << pad << "]";
      return;
    }
    case nlohmann::ordered_json::value_t::number_float:
      os << format_double(value.get<double>());
      return;
    default:
      os << value.dump();
      return;
  }
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

void write_json(std::ostream& os, const nlohmann::ordered_json& doc) {
  write_json_value(os, doc, 0);
  os << "\n";
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
  std::ofstream out = open_output(path);
  write_json(out, doc);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_trajectory_csv(const std::filesystem::path& path, const InversionTrajectory& traj) {
  std::ofstream out = open_output(path);
  const int d = traj.iterates.empty() ? 0 : static_cast<int>(traj.iterates.front().size());
  out << "iter";
  for (int j = 0; j < d; ++j) out << ",z_" << j;
  out << ",step_distance";
  for (int j = 0; j < d; ++j) out << ",pred_" << j;
  out << "\n";
  for (std::size_t k = 0; k < traj.iterates.size(); ++k) {
    out << k;
    for (int j = 0; j < d; ++j) out << "," << format_double(traj.iterates[k][j]);
    out << ",";
    if (k > 0) out << format_double(traj.step_distances[k - 1]);
    for (int j = 0; j < d; ++j) out << "," << format_double(traj.one_step_preds[k][j]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_output(path);
  out << "gamma,period,spectral_norm_at_root,root_residual,converged,error\n";
  for (const SweepRow& row : rows) {
    out << format_double(row.gamma) << "," << row.period << ","
        << format_double(row.spectral_norm_at_root) << "," << format_double(row.root_residual)
        << "," << (row.converged ? 1 : 0) << "," << row.error << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainLogEntry>& log) {
  std::ofstream out = open_output(path);
  out << "step,loss\n";
  for (const TrainLogEntry& entry : log) {
    out << entry.step << "," << format_double(entry.loss) << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

nlohmann::ordered_json vec_to_json(const Vec& v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace oscinv
