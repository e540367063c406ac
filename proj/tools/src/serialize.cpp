#include "geoprev_app/serialize.hpp"

#include <fstream>

#include "geoprev/errors.hpp"
#include "geoprev_app/config.hpp"

namespace geoprev::app {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json records_to_json(std::span<const SurveyRecord> records) {
  json rows = json::array();
  for (const auto& r : records) rows.push_back({r.loc.lon, r.loc.lat, r.examined, r.positive});
  return rows;
}

std::vector<SurveyRecord> records_from_json(const json& rows) {
  std::vector<SurveyRecord> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != 4) throw ParseError("model file: malformed training record");
    out.push_back({{row[0].get<double>(), row[1].get<double>()}, row[2].get<long>(), row[3].get<long>()});
  }
  return out;
}

json fitted_to_json(const FittedModel& model) {
  switch (model.kind()) {
    case ModelKind::Gp: {
      const auto& f = dynamic_cast<const GpModel&>(model).fit();
      json steps = json::array();
      for (const auto& s : f.booster.stages) steps.push_back(s.leaf_value.front());
      return {{"sigma2", f.theta.sigma2}, {"range", f.theta.range}, {"tau2", f.theta.tau2},
              {"base", f.booster.base}, {"steps", steps}, {"rounds_run", f.rounds_run}};
    }
    case ModelKind::Sprf:
      return json::object();
    case ModelKind::Frk: {
      const auto& f = dynamic_cast<const FrkModel&>(model).fit();
      return {{"beta0", f.hyper.beta0}, {"tau", f.hyper.tau}, {"rho", f.hyper.rho},
              {"sigma2_xi", f.hyper.sigma2_xi}};
    }
    case ModelKind::Lgm: {
      const auto& f = dynamic_cast<const LgmModel&>(model).fit();
      return {{"kappa", f.theta.kappa}, {"tau", f.theta.tau}, {"extra", f.theta.extra},
              {"bound_hits", f.bound_hits}};
    }
    case ModelKind::Constant: {
      const auto& c = dynamic_cast<const ConstantModel&>(model);
      return {{"mean", c.mean()}, {"sd", c.sd()}};
    }
  }
  return json::object();
}

std::unique_ptr<FittedModel> restore(const ModelConfig& cfg, const json& h, std::span<const SurveyRecord> records) {
  switch (cfg.kind) {
    case ModelKind::Gp: {
      gp::GpFit f;
      f.theta = {h.at("sigma2").get<double>(), h.at("range").get<double>(), h.at("tau2").get<double>()};
      f.cov = cfg.gp.cov;
      f.cov.variance = f.theta.sigma2;
      f.cov.range = f.theta.range;
      f.vecchia = cfg.gp.vecchia;
      f.train_pts = locations_of(records);
      f.y = prevalences_of(records);
      f.covariates = Eigen::MatrixXd(f.y.size(), 0);
      f.booster.base = h.at("base").get<double>();
      f.intercept = f.booster.base;
      for (double step : h.at("steps")) {
        gp::Booster::Stage s;
        s.tree.nodes.push_back(cart::Node{-1, 0.0, -1, -1, 0});
        s.tree.leaves.emplace_back();
        s.leaf_value = {step};
        f.booster.stages.push_back(std::move(s));
        f.intercept += step;
      }
      f.rounds_run = h.value("rounds_run", static_cast<int>(f.booster.stages.size()));
      f.refresh_cache();
      return std::make_unique<GpModel>(std::move(f));
    }
    case ModelKind::Sprf:
      return std::make_unique<SprfModel>(sprf::fit(records, cfg.sprf));
    case ModelKind::Frk: {
      frk::Hyper hyper;
      hyper.beta0 = h.at("beta0").get<double>();
      hyper.tau = h.at("tau").get<std::vector<double>>();
      hyper.rho = h.at("rho").get<std::vector<double>>();
      hyper.sigma2_xi = h.at("sigma2_xi").get<double>();
      auto basis = frk_basis_for(records, cfg.frk);
      auto f = frk::refit_at(records, basis, cfg.frk, hyper);
      frk::PredictOptions opts;
      opts.n_mc = cfg.frk.n_mc;
      opts.seed = cfg.frk.seed;
      opts.threads = cfg.frk.threads;
      return std::make_unique<FrkModel>(std::move(f), std::move(basis), opts);
    }
    case ModelKind::Lgm: {
      lgm::Theta theta{h.at("kappa").get<double>(), h.at("tau").get<double>(), h.at("extra").get<double>()};
      auto f = lgm::refit_at(records, cfg.lgm, theta);
      f.bound_hits = h.value("bound_hits", std::vector<std::string>{});
      return std::make_unique<LgmModel>(std::move(f));
    }
    case ModelKind::Constant:
      return std::make_unique<ConstantModel>(h.at("mean").get<double>(), h.at("sd").get<double>());
  }
  throw ParseError("model file: unknown model kind");
}

}  // namespace

json model_to_json(const ModelConfig& cfg, const FittedModel& model, std::span<const SurveyRecord> records) {
  return {{"format", kFormatVersion},
          {"kind", to_string(cfg.kind)},
          {"spec", model_config_to_json(cfg)},
          {"fitted", fitted_to_json(model)},
          {"records", records_to_json(records)}};
}

StoredModel model_from_json(const json& j) {
  try {
    if (j.value("format", 0) != kFormatVersion) throw ParseError("model file: unsupported format version");
    StoredModel out;
    const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    std::vector<std::string> problems;
    out.config = model_config_from_json(kind, j.at("spec"), problems);
    if (!problems.empty()) throw ConfigError(problems);
    out.records = records_from_json(j.at("records"));
    out.model = restore(out.config, j.at("fitted"), out.records);
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const FittedModel& model,
                std::span<const SurveyRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(cfg, model, records).dump(2) << '\n';
}

StoredModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace geoprev::app
