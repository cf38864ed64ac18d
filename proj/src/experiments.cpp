#include "oscinv/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "oscinv/emit.hpp"
#include "oscinv/inversion.hpp"
#include "oscinv/postopt.hpp"
#include "oscinv/sampler.hpp"
#include "oscinv/schedule.hpp"

namespace oscinv {

namespace {

using nlohmann::ordered_json;

const char* kStandardFields[] = {"period",          "phase_means",
                                 "phase_spreads",   "mean_of_means",
                                 "z_star",          "root_residual",
                                 "root_method",     "spectral_norm",
                                 "averaging_error", "relative_averaging_error",
                                 "post_opt"};

ordered_json vecs_to_json(const std::vector<Vec>& vs) {
  ordered_json arr = ordered_json::array();
  for (const Vec& v : vs) arr.push_back(vec_to_json(v));
  return arr;
}

std::filesystem::path prepare_out_dir(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out.string());
  return out;
}

void fill_cluster_fields(SummaryBuilder& summary, const ClusterReport& clusters) {
  summary.set("period", clusters.period);
  if (clusters.period >= 1) {
    summary.set("phase_means", vecs_to_json(clusters.phase_means));
    summary.set("phase_spreads", ordered_json(clusters.phase_spreads));
  } else {
    summary.set_null("phase_means", "aperiodic tail: no residue classes");
    summary.set_null("phase_spreads", "aperiodic tail: no residue classes");
  }
  summary.set("mean_of_means", vec_to_json(clusters.mean_of_means));
}

const char* root_method_name(RootMethod method) {
  return method == RootMethod::kNewton ? "newton" : "averaged-iteration";
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

constexpr double kRootTol = 1e-12;

}  // namespace

std::unique_ptr<VelocityField> make_field(const ExperimentConfig& cfg) {
  if (cfg.field.kind == FieldKind::kAnalytic) {
    return std::make_unique<AnalyticMixtureField>(cfg.mixture);
  }
  std::ifstream in(cfg.field.checkpoint_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint file: " + cfg.field.checkpoint_path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  MlpField field = load_checkpoint(bytes);
  if (field.dim() != cfg.mixture.dim()) {
    throw ConfigError("checkpoint dimension does not match the configured mixture");
  }
  return std::make_unique<MlpField>(std::move(field));
}

SummaryBuilder::SummaryBuilder(const ExperimentConfig& cfg, const std::string& subcommand) {
  doc_["tool"] = kToolName;
  doc_["version"] = kToolVersion;
  doc_["subcommand"] = subcommand;
  doc_["config_hash"] = cfg.config_hash;
  doc_["base_seed"] = cfg.base_seed;
  doc_["gamma"] = cfg.gamma;
}

void SummaryBuilder::set(const std::string& key, ordered_json value) {
  doc_[key] = std::move(value);
}

void SummaryBuilder::set_null(const std::string& key, const std::string& reason) {
  doc_[key] = nullptr;
  doc_[key + "_reason"] = reason;
}

ordered_json SummaryBuilder::finish() {
  for (const char* field : kStandardFields) {
    if (!doc_.contains(field)) set_null(field, "not computed by this subcommand");
  }
  doc_["wall_clock_seconds"] = nullptr;
  doc_["wall_clock_seconds_reason"] =
      "reported on stderr; omitted here so replays are byte-identical";
  return doc_;
}

nlohmann::ordered_json run_sample(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  const auto field = make_field(cfg);
  const TimeSchedule schedule = TimeSchedule::identity(cfg.schedule_steps);
  const int d = cfg.mixture.dim();

  std::ofstream csv(out / "samples.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open " + (out / "samples.csv").string());
  csv << "draw";
  for (int j = 0; j < d; ++j) csv << ",x_" << j;
  csv << "\n";

  std::vector<int> component_counts(cfg.mixture.component_count(), 0);
  int unassigned = 0;
  for (int i = 0; i < cfg.sample.draws; ++i) {
    Rng rng(derive_seed(cfg.base_seed, static_cast<std::uint64_t>(i)));
    Vec z(d);
    for (int j = 0; j < d; ++j) z[j] = rng.normal();
    const std::vector<Vec> trajectory = euler_sample(*field, schedule, z);
    const Vec& endpoint = trajectory.back();
    csv << i;
    for (int j = 0; j < d; ++j) csv << "," << format_double(endpoint[j]);
    csv << "\n";

    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.mixture.component_count(); ++k) {
      const double dist = (endpoint - cfg.mixture.component(k).mean).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    if (best >= 0 && best_dist <= 4.0 * cfg.mixture.component(best).sigma) {
      ++component_counts[best];
    } else {
      ++unassigned;
    }
  }
  if (!csv) throw std::runtime_error("failed writing samples.csv");

  SummaryBuilder summary(cfg, "sample");
  ordered_json extras;
  extras["draws"] = cfg.sample.draws;
  extras["component_counts"] = component_counts;
  extras["unassigned"] = unassigned;
  ordered_json weights = ordered_json::array();
  for (int count : component_counts) {
    weights.push_back(static_cast<double>(count) / cfg.sample.draws);
  }
  extras["empirical_weights"] = weights;
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_invert(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  const auto field = make_field(cfg);
  const FixedPointMap map(*field, cfg.primary_target(), cfg.gamma);
  const InversionTrajectory traj = invert(map, cfg.iterations);
  write_trajectory_csv(out / "trajectory.csv", traj);

  SummaryBuilder summary(cfg, "invert");
  if (cfg.iterations >= 2 * cfg.window) {
    fill_cluster_fields(summary, detect_period(traj, cfg.window, cfg.tolerance));
  } else {
    const std::string reason = "trajectory shorter than 2*window; raise iterations to detect";
    summary.set_null("period", reason);
    summary.set_null("phase_means", reason);
    summary.set_null("phase_spreads", reason);
    summary.set_null("mean_of_means", reason);
  }
  ordered_json extras;
  extras["iterations"] = cfg.iterations;
  extras["target"] = vec_to_json(cfg.primary_target());
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_group_invert(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out, bool fig3_mode) {
  prepare_out_dir(out);
  const auto field = make_field(cfg);
  if (cfg.targets.empty()) throw ConfigError("group inversion needs \"targets\"");

  SummaryBuilder summary(cfg, fig3_mode ? "group-invert-fig3" : "group-invert");
  ordered_json extras;

  if (fig3_mode) {
    if (cfg.targets.size() < 3) {
      throw ConfigError("the fig3 protocol needs at least 3 entries in \"targets\"");
    }
    ordered_json per_m = ordered_json::object();
    for (int m = 1; m <= 3; ++m) {
      const std::vector<Vec> targets(cfg.targets.begin(), cfg.targets.begin() + m);
      const InversionTrajectory traj = group_invert(*field, targets, cfg.gamma, cfg.iterations);
      write_trajectory_csv(out / ("trajectory_m" + std::to_string(m) + ".csv"), traj);
      ordered_json entry;
      if (cfg.iterations >= 2 * cfg.window) {
        const ClusterReport clusters = detect_period(traj, cfg.window, cfg.tolerance);
        entry["period"] = clusters.period;
        entry["periodic"] = clusters.period >= 2;
      } else {
        entry["period"] = nullptr;
        entry["period_reason"] = "trajectory shorter than 2*window";
      }
      per_m["m" + std::to_string(m)] = std::move(entry);
    }
    extras["per_m"] = std::move(per_m);
  } else {
    const InversionTrajectory traj =
        group_invert(*field, cfg.targets, cfg.gamma, cfg.iterations);
    write_trajectory_csv(out / "trajectory.csv", traj);
    if (cfg.iterations >= 2 * cfg.window) {
      fill_cluster_fields(summary, detect_period(traj, cfg.window, cfg.tolerance));
    } else {
      const std::string reason = "trajectory shorter than 2*window";
      summary.set_null("period", reason);
      summary.set_null("phase_means", reason);
      summary.set_null("phase_spreads", reason);
      summary.set_null("mean_of_means", reason);
    }
    extras["group_size"] = cfg.targets.size();
  }
  extras["iterations"] = cfg.iterations;
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_root(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  const auto field = make_field(cfg);
  const FixedPointMap map(*field, cfg.primary_target(), cfg.gamma);

  SummaryBuilder summary(cfg, "root");
  Vec init = cfg.primary_target();
  if (cfg.iterations >= 2 * cfg.window) {
    const InversionTrajectory traj = invert(map, cfg.iterations);
    const ClusterReport clusters = detect_period(traj, cfg.window, cfg.tolerance);
    fill_cluster_fields(summary, clusters);
    init = clusters.mean_of_means;
  } else {
    const std::string reason = "trajectory shorter than 2*window; root seeded from the target";
    summary.set_null("period", reason);
    summary.set_null("phase_means", reason);
    summary.set_null("phase_spreads", reason);
    summary.set_null("mean_of_means", reason);
  }
  const RootResult root = find_root(map, init, kRootTol);
  summary.set("z_star", vec_to_json(root.z_star));
  summary.set("root_residual", root.residual);
  summary.set("root_method", root_method_name(root.method));
  summary.set("spectral_norm", spectral_norm(*field, root.z_star, cfg.gamma).spectral_norm);
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_jacobian(const ExperimentConfig& cfg,
                                    const std::filesystem::path& out) {
  prepare_out_dir(out);
  const auto field = make_field(cfg);
  const JacobianReport report = spectral_norm(*field, cfg.primary_target(), cfg.gamma);

  SummaryBuilder summary(cfg, "jacobian");
  summary.set("spectral_norm", report.spectral_norm);
  ordered_json extras;
  extras["eval_point"] = vec_to_json(report.eval_point);
  extras["top_singular_vector"] = vec_to_json(report.top_singular_vector);
  extras["t"] = report.t;
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  if (!cfg.sweep) throw ConfigError("the sweep subcommand needs a \"sweep\" config block");
  if (cfg.field.kind != FieldKind::kAnalytic) {
    throw ConfigError("sweep runs on the analytic field; set field.type to \"analytic\"");
  }
  const std::vector<SweepRow> rows =
      stability_sweep(cfg.mixture, cfg.primary_target(), cfg.sweep->gammas,
                      cfg.sweep->iterations, cfg.window, cfg.tolerance);
  write_sweep_csv(out / "sweep.csv", rows);

  constexpr double kDeadBand = 0.05;
  bool consistent = true;
  int outside_dead_band = 0;
  for (const SweepRow& row : rows) {
    if (!row.error.empty()) continue;
    if (std::abs(row.spectral_norm_at_root - 1.0) <= kDeadBand) continue;
    ++outside_dead_band;
    if ((row.period == 1) != (row.spectral_norm_at_root < 1.0)) consistent = false;
  }

  SummaryBuilder summary(cfg, "sweep");
  ordered_json extras;
  extras["rows"] = rows.size();
  extras["dead_band"] = kDeadBand;
  extras["rows_outside_dead_band"] = outside_dead_band;
  extras["consistent_outside_dead_band"] = consistent;
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_train(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  if (!cfg.train) throw ConfigError("the train subcommand needs a \"train\" config block");

  constexpr std::uint64_t kInitStream = 0x696e6974ULL;  // distinct from batch indices
  MlpField field =
      MlpField::random_init(cfg.mixture.dim(), derive_seed(cfg.train->seed, kInitStream));
  const TrainResult result = train(field, cfg.mixture, *cfg.train);
  write_training_log_csv(out / "training_log.csv", result.log);

  if (result.diverged) {
    throw std::runtime_error("training diverged at step " +
                             std::to_string(result.divergence_step) +
                             " (loss above 1e6); log written to training_log.csv");
  }

  const std::vector<std::uint8_t> bytes = save_checkpoint(field);
  std::ofstream ckpt(out / "model.ckpt", std::ios::binary);
  ckpt.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!ckpt) throw std::runtime_error("failed writing model.ckpt");

  SummaryBuilder summary(cfg, "train");
  ordered_json extras;
  extras["steps"] = cfg.train->steps;
  extras["batch_size"] = cfg.train->batch_size;
  extras["final_loss"] = result.log.empty() ? 0.0 : result.log.back().loss;
  extras["parameter_count"] = field.parameter_count();
  extras["checkpoint"] = "model.ckpt";
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_finetune(const ExperimentConfig& cfg,
                                    const std::filesystem::path& out) {
  prepare_out_dir(out);
  if (!cfg.finetune) throw ConfigError("the finetune subcommand needs a \"finetune\" config block");
  if (cfg.field.kind != FieldKind::kLearned) {
    throw ConfigError("finetune needs a learned field; set field.type to \"learned\"");
  }
  auto base = make_field(cfg);
  auto* mlp = dynamic_cast<MlpField*>(base.get());

  FinetuneSpec spec;
  spec.anchor = cfg.finetune->anchor;
  spec.edited_anchor = cfg.finetune->edited_anchor;
  spec.times = cfg.finetune->times;
  spec.steps = cfg.finetune->steps;
  spec.subset = cfg.finetune->subset;
  const std::vector<TrainLogEntry> log = finetune(*mlp, spec, cfg.finetune->learning_rate);
  write_training_log_csv(out / "finetune_log.csv", log);

  const std::vector<std::uint8_t> bytes = save_checkpoint(*mlp);
  std::ofstream ckpt(out / "model_finetuned.ckpt", std::ios::binary);
  ckpt.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!ckpt) throw std::runtime_error("failed writing model_finetuned.ckpt");

  SummaryBuilder summary(cfg, "finetune");
  ordered_json extras;
  extras["steps"] = spec.steps;
  extras["final_loss"] = log.empty() ? 0.0 : log.back().loss;
  extras["checkpoint"] = "model_finetuned.ckpt";
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_optimize(const ExperimentConfig& cfg,
                                    const std::filesystem::path& out) {
  prepare_out_dir(out);
  if (!cfg.post_opt) throw ConfigError("the optimize subcommand needs a \"post_opt\" config block");
  const auto field = make_field(cfg);
  const FixedPointMap map(*field, cfg.primary_target(), cfg.gamma);
  const PostOptConfig& popt = *cfg.post_opt;

  SummaryBuilder summary(cfg, "optimize");

  // The default entry point: oscillate, average the phase means, optimize
  // from there. Cluster regularization (beta > 0) takes one phase's tail
  // iterates as references.
  std::vector<Vec> references;
  Vec init;
  if (cfg.iterations >= 2 * cfg.window) {
    const InversionTrajectory traj = invert(map, cfg.iterations);
    const ClusterReport clusters = detect_period(traj, cfg.window, cfg.tolerance);
    fill_cluster_fields(summary, clusters);
    init = clusters.mean_of_means;
    if (popt.beta > 0.0) {
      if (clusters.period < 2) {
        throw std::runtime_error(
            "cluster-regularized post-opt needs an oscillatory configuration (period >= 2), "
            "detected period " +
            std::to_string(clusters.period));
      }
      if (popt.reference_phase >= clusters.period) {
        throw ConfigError("post_opt.reference_phase must be below the detected period");
      }
      const int total = static_cast<int>(traj.iterates.size());
      for (int i = total - cfg.window; i < total; ++i) {
        if (i % clusters.period == popt.reference_phase) references.push_back(traj.iterates[i]);
      }
    }
  } else {
    if (popt.beta > 0.0) {
      throw ConfigError("cluster-regularized post-opt needs iterations >= 2*window");
    }
    const std::string reason = "trajectory shorter than 2*window; init taken from the target";
    summary.set_null("period", reason);
    summary.set_null("phase_means", reason);
    summary.set_null("phase_spreads", reason);
    summary.set_null("mean_of_means", reason);
    init = cfg.primary_target();
  }
  if (popt.init) init = *popt.init;

  double kernel_scale = 1.0;
  if (popt.kernel_scale) {
    kernel_scale = *popt.kernel_scale;
  } else if (!references.empty()) {
    kernel_scale = median_pairwise_distance(references);
    if (!(kernel_scale > 0.0)) kernel_scale = 1.0;
  }

  const PostOptProblem problem(*field, cfg.gamma, squared_distance_loss(popt.rgb_target),
                               references, popt.beta, kernel_scale);
  const OptResult result = optimize(problem, init, popt.max_iters, popt.tolerance);

  std::ofstream trace(out / "objective_trace.csv", std::ios::binary);
  if (!trace) throw std::runtime_error("cannot open objective_trace.csv");
  trace << "iter,objective,grad_norm\n";
  for (std::size_t i = 0; i < result.objective_trace.size(); ++i) {
    trace << i << "," << format_double(result.objective_trace[i]) << ","
          << format_double(i < result.gradient_norm_trace.size() ? result.gradient_norm_trace[i]
                                                                 : 0.0)
          << "\n";
  }
  if (!trace) throw std::runtime_error("failed writing objective_trace.csv");

  const Vec final_prediction = one_step_predict(map, result.z_opt);
  ordered_json post;
  post["z_opt"] = vec_to_json(result.z_opt);
  post["objective_initial"] = result.objective_trace.front();
  post["objective_final"] = result.objective_trace.back();
  post["rgb_initial"] = problem.rgb_loss().value(one_step_predict(map, init));
  post["rgb_final"] = problem.rgb_loss().value(final_prediction);
  post["iterations"] = result.iterations;
  post["converged"] = result.converged;
  post["beta"] = popt.beta;
  post["kernel_scale"] = kernel_scale;
  post["reference_count"] = references.size();
  summary.set("post_opt", std::move(post));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

nlohmann::ordered_json run_verify(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  prepare_out_dir(out);
  if (!cfg.verify) throw ConfigError("the verify subcommand needs a \"verify\" config block");
  cfg.require_detection_window();
  const auto field = make_field(cfg);
  const VerifyConfig& vcfg = *cfg.verify;
  const int d = cfg.mixture.dim();

  std::ofstream csv(out / "verify.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open verify.csv");
  csv << "trial";
  for (int j = 0; j < d; ++j) csv << ",y_" << j;
  csv << ",period,compact,relative_averaging_error\n";

  std::map<int, int> skipped_by_period;
  int not_compact = 0;
  std::vector<double> errors;
  for (int trial = 0; trial < vcfg.trials; ++trial) {
    Rng rng(derive_seed(cfg.base_seed, static_cast<std::uint64_t>(trial)));
    Vec y(d);
    for (int j = 0; j < d; ++j) y[j] = vcfg.anchor[j] + vcfg.jitter * rng.normal();
    const Theorem3Report report =
        verify_theorem3(*field, y, cfg.gamma, cfg.iterations, cfg.window, cfg.tolerance);

    csv << trial;
    for (int j = 0; j < d; ++j) csv << "," << format_double(y[j]);
    csv << "," << report.clusters.period;
    if (!report.applicable) {
      ++skipped_by_period[report.clusters.period];
      csv << ",,\n";
      continue;
    }
    const double separation =
        (report.clusters.phase_means[0] - report.clusters.phase_means[1]).norm();
    const bool compact =
        *std::max_element(report.clusters.phase_spreads.begin(),
                          report.clusters.phase_spreads.end()) < 0.1 * separation;
    csv << "," << (compact ? 1 : 0) << "," << format_double(report.relative_averaging_error)
        << "\n";
    if (!compact) {
      ++not_compact;
      continue;
    }
    errors.push_back(report.relative_averaging_error);
  }
  if (!csv) throw std::runtime_error("failed writing verify.csv");

  SummaryBuilder summary(cfg, "verify");
  ordered_json extras;
  extras["trials"] = vcfg.trials;
  extras["applicable"] = errors.size();
  ordered_json skipped = ordered_json::object();
  for (const auto& [period, count] : skipped_by_period) {
    skipped["period_" + std::to_string(period)] = count;
  }
  skipped["not_compact"] = not_compact;
  extras["skipped"] = std::move(skipped);
  extras["relative_errors"] = errors;
  if (errors.empty()) {
    extras["median_relative_averaging_error"] = nullptr;
    extras["median_relative_averaging_error_reason"] = "no trial produced a compact 2-cycle";
  } else {
    extras["median_relative_averaging_error"] = median(errors);
    summary.set("relative_averaging_error", median(errors));
  }
  summary.set("extras", std::move(extras));
  const ordered_json doc = summary.finish();
  write_json_file(out / "summary.json", doc);
  return doc;
}

}  // namespace oscinv
