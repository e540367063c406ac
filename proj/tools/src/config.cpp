#include "geoprev_app/config.hpp"

#include <cstdio>
#include <set>
#include <sstream>

namespace geoprev::app {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Command c) {
  switch (c) {
    case Command::Fit: return "fit";
    case Command::Predict: return "predict";
    case Command::Simulate: return "simulate";
    case Command::Cv: return "cv";
    case Command::Bench: return "bench";
  }
  return "fit";
}

Command command_from_string(const std::string& s) {
  if (s == "fit") return Command::Fit;
  if (s == "predict") return Command::Predict;
  if (s == "simulate") return Command::Simulate;
  if (s == "cv") return Command::Cv;
  if (s == "bench") return Command::Bench;
  throw ConfigError({"command: unknown command '" + s + "'"});
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out = "invalid config:";
  for (const auto& s : v) out += "\n  " + s;
  return out;
}

// Walks one JSON object, recording type errors and unknown keys against a
// dotted field path.
class Block {
 public:
  Block(const json& j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(problems) {
    if (!j_.is_object()) problem(path_, "must be an object");
  }

  ~Block() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) problem(field(k), "unknown field");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.is_object() && j_.contains(k) && !j_.at(k).is_null();
  }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      problem(field(k), "has the wrong type");
    }
  }

  void positive(const std::string& k, double& out) {
    get(k, out);
    if (!(out > 0.0)) problem(field(k), "must be > 0");
  }

  void positive(const std::string& k, int& out) {
    get(k, out);
    if (out < 1) problem(field(k), "must be >= 1");
  }

  void range(const std::string& k, double& lo, double& hi) {
    if (!has(k)) return;
    const auto& v = j_.at(k);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      problem(field(k), "must be a [low, high] pair");
      return;
    }
    lo = v[0].get<double>();
    hi = v[1].get<double>();
    if (!(lo > 0.0 && hi > lo)) problem(field(k), "needs 0 < low < high");
  }

  const json& at(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }

  std::string field(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  void problem(const std::string& f, const std::string& what) { problems_.push_back(f + ": " + what); }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

DistanceMetric metric_from(const std::string& s, const std::string& field, std::vector<std::string>& problems) {
  if (s == "euclidean") return DistanceMetric::Euclidean;
  if (s == "great_circle" || s == "greatcircle") return DistanceMetric::GreatCircle;
  problems.push_back(field + ": unknown metric '" + s + "'");
  return DistanceMetric::Euclidean;
}

std::string metric_name(DistanceMetric m) {
  return m == DistanceMetric::Euclidean ? "euclidean" : "great_circle";
}

void parse_gp(Block& b, gp::GpModelSpec& s, std::vector<std::string>& problems) {
  if (b.has("cov")) {
    Block c(b.at("cov"), b.field("cov"), problems);
    std::string family = to_string(s.cov.family);
    c.get("family", family);
    try {
      s.cov.family = cov_family_from_string(family);
    } catch (const std::exception&) {
      problems.push_back(c.field("family") + ": unknown covariance family '" + family + "'");
    }
    c.get("variance", s.cov.variance);
    c.get("range", s.cov.range);
    if (c.has("smoothness")) {
      double v = 0.0;
      c.get("smoothness", v);
      s.cov.smoothness = v;
    }
    std::string metric = metric_name(s.cov.metric);
    c.get("metric", metric);
    s.cov.metric = metric_from(metric, c.field("metric"), problems);
    if (s.cov.family == CovFamily::Matern && !s.cov.smoothness)
      problems.push_back(c.field("smoothness") + ": required for the matern family");
  }
  b.get("noise_variance", s.noise_variance);
  if (b.has("vecchia")) {
    Block v(b.at("vecchia"), b.field("vecchia"), problems);
    gp::VecchiaSpec vs;
    v.positive("m_fit", vs.m_fit);
    v.positive("m_predict", vs.m_predict);
    s.vecchia = vs;
  }
  if (b.has("boosting")) {
    Block o(b.at("boosting"), b.field("boosting"), problems);
    o.positive("rounds", s.boosting.rounds);
    o.get("learning_rate", s.boosting.learning_rate);
    if (!(s.boosting.learning_rate > 0.0 && s.boosting.learning_rate <= 1.0))
      problems.push_back(o.field("learning_rate") + ": must lie in (0, 1]");
    o.positive("num_leaves", s.boosting.num_leaves);
    o.positive("max_depth", s.boosting.max_depth);
    o.positive("min_data_in_leaf", s.boosting.min_data_in_leaf);
  }
  b.get("early_stop", s.early_stop);
  b.get("data_init", s.data_init);
}

void parse_sprf(Block& b, sprf::SprfSpec& s, std::vector<std::string>& problems) {
  b.positive("num_trees", s.num_trees);
  if (b.has("mtry")) {
    int m = 0;
    b.positive("mtry", m);
    s.mtry = m;
  }
  b.positive("min_node_size", s.min_node_size);
  std::string metric = metric_name(s.metric);
  b.get("metric", metric);
  s.metric = metric_from(metric, b.field("metric"), problems);
  b.get("seed", s.seed);
}

void parse_frk(Block& b, frk::FrkSpec& s) {
  b.positive("nres", s.nres);
  b.positive("regular", s.regular);
  b.positive("scale_aperture", s.scale_aperture);
  b.positive("bau_cell_size", s.bau_cell_size);
  b.positive("n_mc", s.n_mc);
  b.get("fine_scale", s.fine_scale);
  b.get("seed", s.seed);
}

void parse_lgm(Block& b, lgm::LgmSpec& s, std::vector<std::string>& problems) {
  b.positive("lattice_cell", s.lattice_cell);
  b.get("margin", s.margin);
  if (!(s.margin >= 0.0)) problems.push_back(b.field("margin") + ": must be >= 0");
  std::string resp = lgm::to_string(s.response);
  b.get("response", resp);
  try {
    s.response = lgm::response_from_string(resp);
  } catch (const std::exception&) {
    problems.push_back(b.field("response") + ": unknown response '" + resp + "'");
  }
  b.get("alpha", s.alpha);
  if (s.alpha != 2) problems.push_back(b.field("alpha") + ": only 2 is supported");
  b.get("min_range_cells", s.min_range_cells);
  b.get("strict_bounds", s.strict_bounds);
  b.range("kappa_range", s.kappa_min, s.kappa_max);
  b.range("tau_range", s.tau_min, s.tau_max);
  b.range("phi_range", s.phi_min, s.phi_max);
  b.range("noise_var_range", s.noise_var_min, s.noise_var_max);
  if (b.has("noise_var")) {
    double v = 0.0;
    b.positive("noise_var", v);
    s.fixed_noise_var = v;
  }
}

void parse_simulate(Block& b, SimulateSpec& s, const fs::path& base, std::vector<std::string>& problems,
                    bool need_sites) {
  if (b.has("raster")) {
    std::string p;
    b.get("raster", p);
    s.raster = base / p;
    if (!fs::exists(*s.raster)) problems.push_back(b.field("raster") + ": file not found: " + s.raster->string());
  }
  if (b.has("bbox")) {
    std::vector<double> v;
    b.get("bbox", v);
    if (v.size() != 4 || !(v[2] > v[0]) || !(v[3] > v[1]))
      problems.push_back(b.field("bbox") + ": must be [lon_min, lat_min, lon_max, lat_max]");
    else
      s.bbox = {{v[0], v[1]}, {v[2], v[3]}};
  }
  b.positive("cell_size", s.cell_size);
  if (b.has("count")) {
    long c = 0;
    b.get("count", c);
    if (c < 1) problems.push_back(b.field("count") + ": must be >= 1");
    else s.count = static_cast<std::size_t>(c);
  }
  if (b.has("points")) {
    std::string p;
    b.get("points", p);
    s.points = base / p;
    if (!fs::exists(*s.points)) problems.push_back(b.field("points") + ": file not found: " + s.points->string());
  }
  if (b.has("tests_per_site")) {
    const auto& t = b.at("tests_per_site");
    if (t.is_number_integer()) {
      s.tests_per_site = {t.get<long>()};
    } else if (t.is_array() && !t.empty() && std::all_of(t.begin(), t.end(), [](const json& e) { return e.is_number_integer(); })) {
      s.tests_per_site = t.get<std::vector<long>>();
    } else {
      problems.push_back(b.field("tests_per_site") + ": must be an integer or a list of integers");
    }
    for (long n : s.tests_per_site)
      if (n < 1) problems.push_back(b.field("tests_per_site") + ": entries must be >= 1");
  }
  b.get("noise_sd", s.noise_sd);
  if (!(s.noise_sd >= 0.0)) problems.push_back(b.field("noise_sd") + ": must be >= 0");
  if (need_sites && s.count.has_value() == s.points.has_value())
    problems.push_back(b.field("count") + ": exactly one of count or points is required");
}

const char* const kModelBlocks[] = {"gp", "sprf", "frk", "lgm", "constant"};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

ModelConfig model_config_from_json(ModelKind kind, const json& block, std::vector<std::string>& problems) {
  ModelConfig cfg;
  cfg.kind = kind;
  Block b(block, to_string(kind), problems);
  switch (kind) {
    case ModelKind::Gp: parse_gp(b, cfg.gp, problems); break;
    case ModelKind::Sprf: parse_sprf(b, cfg.sprf, problems); break;
    case ModelKind::Frk: parse_frk(b, cfg.frk); break;
    case ModelKind::Lgm: parse_lgm(b, cfg.lgm, problems); break;
    case ModelKind::Constant: break;
  }
  return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  switch (cfg.kind) {
    case ModelKind::Gp: {
      const auto& s = cfg.gp;
      j["cov"] = {{"family", to_string(s.cov.family)}, {"variance", s.cov.variance}, {"range", s.cov.range},
                  {"metric", metric_name(s.cov.metric)}};
      if (s.cov.smoothness) j["cov"]["smoothness"] = *s.cov.smoothness;
      j["noise_variance"] = s.noise_variance;
      if (s.vecchia) j["vecchia"] = {{"m_fit", s.vecchia->m_fit}, {"m_predict", s.vecchia->m_predict}};
      j["boosting"] = {{"rounds", s.boosting.rounds}, {"learning_rate", s.boosting.learning_rate},
                       {"num_leaves", s.boosting.num_leaves}, {"max_depth", s.boosting.max_depth},
                       {"min_data_in_leaf", s.boosting.min_data_in_leaf}};
      j["early_stop"] = s.early_stop;
      j["data_init"] = s.data_init;
      break;
    }
    case ModelKind::Sprf: {
      const auto& s = cfg.sprf;
      j = {{"num_trees", s.num_trees}, {"min_node_size", s.min_node_size}, {"metric", metric_name(s.metric)},
           {"seed", s.seed}};
      j["mtry"] = s.mtry ? json(*s.mtry) : json(nullptr);
      break;
    }
    case ModelKind::Frk: {
      const auto& s = cfg.frk;
      j = {{"nres", s.nres}, {"regular", s.regular}, {"scale_aperture", s.scale_aperture},
           {"bau_cell_size", s.bau_cell_size}, {"n_mc", s.n_mc}, {"fine_scale", s.fine_scale}, {"seed", s.seed}};
      break;
    }
    case ModelKind::Lgm: {
      const auto& s = cfg.lgm;
      j = {{"lattice_cell", s.lattice_cell}, {"margin", s.margin}, {"response", lgm::to_string(s.response)},
           {"alpha", s.alpha}, {"min_range_cells", s.min_range_cells}, {"strict_bounds", s.strict_bounds},
           {"kappa_range", {s.kappa_min, s.kappa_max}}, {"tau_range", {s.tau_min, s.tau_max}},
           {"phi_range", {s.phi_min, s.phi_max}}, {"noise_var_range", {s.noise_var_min, s.noise_var_max}}};
      if (s.fixed_noise_var) j["noise_var"] = *s.fixed_noise_var;
      break;
    }
    case ModelKind::Constant: j = json::object(); break;
  }
  return j;
}

RunConfig parse_config(const json& j, Command command, const fs::path& base_dir) {
  std::vector<std::string> problems;
  RunConfig cfg;
  cfg.command = command;
  cfg.source = j;
  {
    Block root(j, "", problems);
    if (root.has("command")) {
      std::string c;
      root.get("command", c);
      if (c != to_string(command))
        problems.push_back("command: config is for '" + c + "' but '" + to_string(command) + "' was requested");
    }
    root.get("seed", cfg.seed);
    int threads = 1;
    root.get("threads", threads);
    if (threads < 1) problems.push_back("threads: must be >= 1");
    cfg.threads = static_cast<unsigned>(std::max(threads, 1));
    root.get("early_stop", cfg.early_stop);
    if (root.has("output")) {
      std::string o;
      root.get("output", o);
      cfg.out_dir = base_dir / o;
    }

    if (root.has("input")) {
      Block in(root.at("input"), "input", problems);
      for (const char* key : {"survey", "model"}) {
        if (!in.has(key)) continue;
        std::string p;
        in.get(key, p);
        const fs::path full = base_dir / p;
        if (!fs::exists(full)) problems.push_back(in.field(key) + ": file not found: " + full.string());
        (std::string(key) == "survey" ? cfg.survey : cfg.model) = full;
      }
    }

    std::vector<std::string> blocks;
    for (const char* name : kModelBlocks)
      if (root.has(name)) blocks.emplace_back(name);
    const bool needs_model = command == Command::Fit || command == Command::Cv ||
                             (command == Command::Predict && !cfg.model);
    if (needs_model && blocks.size() != 1)
      problems.push_back("model: exactly one model block (gp, sprf, frk, lgm, constant) is required, found " +
                         std::to_string(blocks.size()));
    if (command == Command::Predict && cfg.model && !blocks.empty())
      problems.push_back("model: predict with input.model takes no model block");
    for (const auto& name : blocks) {
      auto mc = model_config_from_json(model_kind_from_string(name), root.at(name), problems);
      if (blocks.size() == 1) cfg.model_config = std::move(mc);
    }

    if ((command == Command::Fit || command == Command::Cv || (command == Command::Predict && !cfg.model)) &&
        !cfg.survey)
      problems.push_back("input.survey: required for " + to_string(command));
    if (command == Command::Predict && !cfg.model && !cfg.survey)
      problems.push_back("input.model: predict needs input.model or input.survey");

    if (root.has("grid")) {
      Block g(root.at("grid"), "grid", problems);
      if (g.has("raster")) {
        std::string p;
        g.get("raster", p);
        cfg.grid.raster = base_dir / p;
        if (!fs::exists(*cfg.grid.raster))
          problems.push_back("grid.raster: file not found: " + cfg.grid.raster->string());
      }
      if (g.has("bbox")) {
        std::vector<double> v;
        g.get("bbox", v);
        if (v.size() != 4 || !(v[2] > v[0]) || !(v[3] > v[1]))
          problems.push_back("grid.bbox: must be [lon_min, lat_min, lon_max, lat_max]");
        else
          cfg.grid.bbox = BBox{{v[0], v[1]}, {v[2], v[3]}};
      }
      g.positive("cell_size", cfg.grid.cell_size);
    }

    if (root.has("simulate")) {
      Block s(root.at("simulate"), "simulate", problems);
      parse_simulate(s, cfg.simulate, base_dir, problems, command == Command::Simulate);
    } else if (command == Command::Simulate) {
      problems.push_back("simulate: block required for the simulate command");
    }

    if (root.has("cv")) {
      Block c(root.at("cv"), "cv", problems);
      c.positive("k", cfg.cv.k);
      if (cfg.cv.k < 2) problems.push_back("cv.k: must be >= 2");
    }

    if (root.has("bench")) {
      Block b(root.at("bench"), "bench", problems);
      if (b.has("models")) {
        std::vector<std::string> names;
        b.get("models", names);
        cfg.bench.models.clear();
        for (const auto& n : names) {
          try {
            cfg.bench.models.push_back(model_kind_from_string(n));
          } catch (const std::exception&) {
            problems.push_back("bench.models: unknown model '" + n + "'");
          }
        }
      }
      if (b.has("sizes")) {
        std::vector<long> sizes;
        b.get("sizes", sizes);
        cfg.bench.sizes.clear();
        for (std::size_t i = 0; i < sizes.size(); ++i) {
          if (sizes[i] < 2) problems.push_back("bench.sizes: entries must be >= 2");
          if (i > 0 && sizes[i] < sizes[i - 1]) problems.push_back("bench.sizes: must be ascending");
          cfg.bench.sizes.push_back(static_cast<std::size_t>(std::max(sizes[i], 0L)));
        }
      }
      if (b.has("gp_exact_cap")) {
        long cap = 0;
        b.get("gp_exact_cap", cap);
        if (cap < 1) problems.push_back("bench.gp_exact_cap: must be >= 1");
        cfg.bench.gp_exact_cap = static_cast<std::size_t>(std::max(cap, 1L));
      }
      b.positive("gp_rounds", cfg.bench.gp_rounds);
      b.positive("grid_cell", cfg.bench.grid_cell);
      if (b.has("data")) {
        Block d(b.at("data"), "bench.data", problems);
        parse_simulate(d, cfg.bench.data, base_dir, problems, false);
      }
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace geoprev::app
