#include "oscinv/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace oscinv {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
  }
}

double require_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key \"" + key + "\" in " + where);
  if (!obj[key].is_number()) throw ConfigError("key \"" + key + "\" in " + where + " must be a number");
  return obj[key].get<double>();
}

int require_int(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key \"" + key + "\" in " + where);
  if (!obj[key].is_number_integer()) {
    throw ConfigError("key \"" + key + "\" in " + where + " must be an integer");
  }
  return obj[key].get<int>();
}

Vec parse_vec(const json& arr, int dim, const std::string& where) {
  if (!arr.is_array()) throw ConfigError(where + " must be an array of numbers");
  if (dim >= 0 && static_cast<int>(arr.size()) != dim) {
    throw ConfigError(where + " must have length " + std::to_string(dim));
  }
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ConfigError(where + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

GaussianMixture parse_mixture(const json& obj) {
  reject_unknown_keys(obj, {"dim", "components"}, "mixture");
  const int dim = require_int(obj, "dim", "mixture");
  if (dim < 1) throw ConfigError("mixture.dim must be positive");
  if (!obj.contains("components") || !obj["components"].is_array() || obj["components"].empty()) {
    throw ConfigError("mixture.components must be a non-empty array");
  }
  std::vector<MixtureComponent> components;
  double weight_sum = 0.0;
  int index = 0;
  for (const json& c : obj["components"]) {
    const std::string where = "mixture.components[" + std::to_string(index++) + "]";
    reject_unknown_keys(c, {"weight", "mean", "sigma"}, where);
    MixtureComponent comp;
    comp.weight = require_number(c, "weight", where);
    comp.sigma = require_number(c, "sigma", where);
    if (!c.contains("mean")) throw ConfigError("missing key \"mean\" in " + where);
    comp.mean = parse_vec(c["mean"], dim, where + ".mean");
    if (!(comp.weight > 0.0 && comp.weight <= 1.0)) {
      throw ConfigError(where + ".weight must lie in (0,1]");
    }
    if (!(comp.sigma > 0.0)) throw ConfigError(where + ".sigma must be positive");
    weight_sum += comp.weight;
    components.push_back(std::move(comp));
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw ConfigError("mixture weights must sum to 1 within 1e-9, got " +
                      std::to_string(weight_sum));
  }
  for (MixtureComponent& c : components) c.weight /= weight_sum;
  return GaussianMixture(std::move(components), dim);
}

TrainConfig parse_train(const json& obj) {
  reject_unknown_keys(obj,
                      {"steps", "batch_size", "learning_rate", "adam_beta1", "adam_beta2",
                       "adam_eps", "seed"},
                      "train");
  TrainConfig cfg;
  cfg.steps = require_int(obj, "steps", "train");
  cfg.batch_size = require_int(obj, "batch_size", "train");
  cfg.learning_rate = require_number(obj, "learning_rate", "train");
  if (obj.contains("adam_beta1")) cfg.adam_beta1 = obj["adam_beta1"].get<double>();
  if (obj.contains("adam_beta2")) cfg.adam_beta2 = obj["adam_beta2"].get<double>();
  if (obj.contains("adam_eps")) cfg.adam_eps = obj["adam_eps"].get<double>();
  if (obj.contains("seed")) cfg.seed = obj["seed"].get<std::uint64_t>();
  if (cfg.steps < 1) throw ConfigError("train.steps must be positive");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0)) {
    throw ConfigError("train.adam_beta1 must lie in (0,1)");
  }
  if (!(cfg.adam_beta2 > 0.0 && cfg.adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta2 must lie in (0,1)");
  }
  if (!(cfg.adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  return cfg;
}

FinetuneConfig parse_finetune(const json& obj, int dim) {
  reject_unknown_keys(
      obj, {"anchor", "edited_anchor", "times", "steps", "trainable_subset", "learning_rate"},
      "finetune");
  FinetuneConfig cfg;
  if (!obj.contains("anchor")) throw ConfigError("missing key \"anchor\" in finetune");
  cfg.anchor = parse_vec(obj["anchor"], dim, "finetune.anchor");
  if (!obj.contains("edited_anchor")) throw ConfigError("missing key \"edited_anchor\" in finetune");
  cfg.edited_anchor = parse_vec(obj["edited_anchor"], dim, "finetune.edited_anchor");
  if (!obj.contains("times") || !obj["times"].is_array() || obj["times"].empty()) {
    throw ConfigError("finetune.times must be a non-empty array");
  }
  for (const json& t : obj["times"]) {
    const double v = t.get<double>();
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("finetune.times entries must lie in (0,1)");
    cfg.times.push_back(v);
  }
  if (obj.contains("steps")) cfg.steps = obj["steps"].get<int>();
  if (cfg.steps < 1) throw ConfigError("finetune.steps must be positive");
  if (obj.contains("learning_rate")) cfg.learning_rate = obj["learning_rate"].get<double>();
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("finetune.learning_rate must be positive");
  if (obj.contains("trainable_subset")) {
    const std::string subset = obj["trainable_subset"].get<std::string>();
    if (subset == "last_layer") {
      cfg.subset = TrainableSubset::kLastLayer;
    } else if (subset == "all") {
      cfg.subset = TrainableSubset::kAll;
    } else {
      throw ConfigError("finetune.trainable_subset must be \"last_layer\" or \"all\"");
    }
  }
  return cfg;
}

PostOptConfig parse_post_opt(const json& obj, int dim) {
  reject_unknown_keys(obj,
                      {"beta", "kernel_scale", "rgb_target", "max_iters", "tolerance",
                       "reference_phase", "init"},
                      "post_opt");
  PostOptConfig cfg;
  if (obj.contains("beta")) cfg.beta = obj["beta"].get<double>();
  if (!(cfg.beta >= 0.0)) throw ConfigError("post_opt.beta must be non-negative");
  if (obj.contains("kernel_scale")) {
    cfg.kernel_scale = obj["kernel_scale"].get<double>();
    if (!(*cfg.kernel_scale > 0.0)) throw ConfigError("post_opt.kernel_scale must be positive");
  }
  if (!obj.contains("rgb_target")) throw ConfigError("missing key \"rgb_target\" in post_opt");
  cfg.rgb_target = parse_vec(obj["rgb_target"], dim, "post_opt.rgb_target");
  if (obj.contains("max_iters")) cfg.max_iters = obj["max_iters"].get<int>();
  if (cfg.max_iters < 1) throw ConfigError("post_opt.max_iters must be positive");
  if (obj.contains("tolerance")) cfg.tolerance = obj["tolerance"].get<double>();
  if (!(cfg.tolerance > 0.0)) throw ConfigError("post_opt.tolerance must be positive");
  if (obj.contains("reference_phase")) cfg.reference_phase = obj["reference_phase"].get<int>();
  if (cfg.reference_phase < 0) throw ConfigError("post_opt.reference_phase must be >= 0");
  if (obj.contains("init")) cfg.init = parse_vec(obj["init"], dim, "post_opt.init");
  return cfg;
}

SweepConfig parse_sweep(const json& obj) {
  reject_unknown_keys(obj, {"gammas", "gamma_min", "gamma_max", "count", "iterations"}, "sweep");
  SweepConfig cfg;
  if (obj.contains("gammas")) {
    if (obj.contains("gamma_min") || obj.contains("gamma_max") || obj.contains("count")) {
      throw ConfigError("sweep: give either \"gammas\" or a min/max/count range, not both");
    }
    for (const json& g : obj["gammas"]) cfg.gammas.push_back(g.get<double>());
  } else {
    const double lo = require_number(obj, "gamma_min", "sweep");
    const double hi = require_number(obj, "gamma_max", "sweep");
    const int count = require_int(obj, "count", "sweep");
    if (count < 2) throw ConfigError("sweep.count must be at least 2");
    if (!(lo < hi)) throw ConfigError("sweep: gamma_min must be below gamma_max");
    for (int i = 0; i < count; ++i) {
      cfg.gammas.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
    }
  }
  if (cfg.gammas.empty()) throw ConfigError("sweep needs at least one gamma");
  for (double g : cfg.gammas) {
    if (!(g > 0.0 && g < 1.0)) throw ConfigError("sweep gammas must lie strictly inside (0,1)");
  }
  if (obj.contains("iterations")) cfg.iterations = obj["iterations"].get<int>();
  if (cfg.iterations < 2) throw ConfigError("sweep.iterations must be at least 2");
  return cfg;
}

VerifyConfig parse_verify(const json& obj, int dim) {
  reject_unknown_keys(obj, {"trials", "anchor", "jitter"}, "verify");
  VerifyConfig cfg;
  if (obj.contains("trials")) cfg.trials = obj["trials"].get<int>();
  if (cfg.trials < 1) throw ConfigError("verify.trials must be positive");
  if (!obj.contains("anchor")) throw ConfigError("missing key \"anchor\" in verify");
  cfg.anchor = parse_vec(obj["anchor"], dim, "verify.anchor");
  if (obj.contains("jitter")) cfg.jitter = obj["jitter"].get<double>();
  if (!(cfg.jitter >= 0.0)) throw ConfigError("verify.jitter must be non-negative");
  return cfg;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(doc,
                      {"mixture", "schedule", "gamma", "iterations", "window", "tolerance",
                       "targets", "field", "train", "finetune", "post_opt", "sweep", "verify",
                       "sample", "base_seed", "output_dir"},
                      "config root");

  ExperimentConfig cfg;
  cfg.config_hash = fnv1a_hex(text);
  if (!doc.contains("mixture")) throw ConfigError("missing key \"mixture\" in config root");
  cfg.mixture = parse_mixture(doc["mixture"]);
  const int dim = cfg.mixture.dim();

  if (doc.contains("schedule")) {
    const json& sched = doc["schedule"];
    reject_unknown_keys(sched, {"total_steps", "identity"}, "schedule");
    cfg.schedule_steps = require_int(sched, "total_steps", "schedule");
    if (cfg.schedule_steps < 1) throw ConfigError("schedule.total_steps must be positive");
    if (sched.contains("identity") && !sched["identity"].get<bool>()) {
      throw ConfigError("only the identity schedule is supported");
    }
  }

  cfg.gamma = require_number(doc, "gamma", "config root");
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) {
    throw ConfigError("gamma must lie strictly inside (0,1)");
  }
  if (doc.contains("iterations")) cfg.iterations = doc["iterations"].get<int>();
  if (cfg.iterations < 1) throw ConfigError("iterations must be positive");
  if (doc.contains("window")) cfg.window = doc["window"].get<int>();
  if (cfg.window < 2) throw ConfigError("window must be at least 2");
  if (doc.contains("tolerance")) cfg.tolerance = doc["tolerance"].get<double>();
  if (!(cfg.tolerance > 0.0)) throw ConfigError("tolerance must be positive");

  if (doc.contains("targets")) {
    if (!doc["targets"].is_array()) throw ConfigError("targets must be an array of points");
    int index = 0;
    for (const json& t : doc["targets"]) {
      cfg.targets.push_back(parse_vec(t, dim, "targets[" + std::to_string(index++) + "]"));
    }
  }

  if (doc.contains("field")) {
    const json& field = doc["field"];
    reject_unknown_keys(field, {"type", "checkpoint"}, "field");
    const std::string type = field.contains("type") ? field["type"].get<std::string>() : "";
    if (type == "analytic") {
      cfg.field.kind = FieldKind::kAnalytic;
      if (field.contains("checkpoint")) {
        throw ConfigError("field.checkpoint only applies to learned fields");
      }
    } else if (type == "learned") {
      cfg.field.kind = FieldKind::kLearned;
      if (!field.contains("checkpoint")) {
        throw ConfigError("learned field needs a \"checkpoint\" path");
      }
      cfg.field.checkpoint_path = field["checkpoint"].get<std::string>();
    } else {
      throw ConfigError("field.type must be \"analytic\" or \"learned\"");
    }
  }

  if (doc.contains("train")) cfg.train = parse_train(doc["train"]);
  if (doc.contains("finetune")) cfg.finetune = parse_finetune(doc["finetune"], dim);
  if (doc.contains("post_opt")) cfg.post_opt = parse_post_opt(doc["post_opt"], dim);
  if (doc.contains("sweep")) cfg.sweep = parse_sweep(doc["sweep"]);
  if (doc.contains("verify")) cfg.verify = parse_verify(doc["verify"], dim);
  if (doc.contains("sample")) {
    reject_unknown_keys(doc["sample"], {"draws"}, "sample");
    if (doc["sample"].contains("draws")) cfg.sample.draws = doc["sample"]["draws"].get<int>();
    if (cfg.sample.draws < 1) throw ConfigError("sample.draws must be positive");
  }

  if (!doc.contains("base_seed")) throw ConfigError("missing key \"base_seed\" in config root");
  if (!doc["base_seed"].is_number_unsigned() && !doc["base_seed"].is_number_integer()) {
    throw ConfigError("base_seed must be an unsigned integer");
  }
  cfg.base_seed = doc["base_seed"].get<std::uint64_t>();
  if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

const Vec& ExperimentConfig::primary_target() const {
  if (targets.empty()) {
    throw ConfigError("this subcommand needs at least one entry in \"targets\"");
  }
  return targets.front();
}

void ExperimentConfig::require_detection_window() const {
  if (iterations < 2 * window) {
    throw ConfigError("verify-style runs need iterations >= 2*window; have iterations=" +
                      std::to_string(iterations) + ", window=" + std::to_string(window));
  }
}

}  // namespace oscinv
