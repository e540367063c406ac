#include "geoprev/model.hpp"

#include <cmath>

#include "geoprev/errors.hpp"

namespace geoprev {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Gp: return "gp";
    case ModelKind::Sprf: return "sprf";
    case ModelKind::Frk: return "frk";
    case ModelKind::Lgm: return "lgm";
    case ModelKind::Constant: return "constant";
  }
  return "gp";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gp") return ModelKind::Gp;
  if (s == "sprf") return ModelKind::Sprf;
  if (s == "frk") return ModelKind::Frk;
  if (s == "lgm") return ModelKind::Lgm;
  if (s == "constant") return ModelKind::Constant;
  throw ValidationError("unknown model '" + s + "'");
}

std::vector<PointPrediction> GpModel::predict(std::span<const Location> pts) const {
  std::vector<PointPrediction> out;
  out.reserve(pts.size());
  for (const auto& p : gp::predict(fit_, pts)) out.push_back({p.mean, p.sd});
  return out;
}

std::vector<PointPrediction> SprfModel::predict(std::span<const Location> pts) const {
  std::vector<PointPrediction> out;
  out.reserve(pts.size());
  for (const auto& p : sprf::predict(fit_, pts)) out.push_back({p.median, p.sd});
  return out;
}

std::vector<PointPrediction> FrkModel::predict(std::span<const Location> pts) const {
  std::vector<PointPrediction> out;
  out.reserve(pts.size());
  for (const auto& p : frk::predict_points(fit_, basis_, pts, options_)) out.push_back({p.mean, p.sd});
  return out;
}

std::vector<PointPrediction> LgmModel::predict(std::span<const Location> pts) const {
  std::vector<PointPrediction> out;
  out.reserve(pts.size());
  for (const auto& p : lgm::predict(fit_, pts)) out.push_back({p.median, p.sd});
  return out;
}

std::vector<PointPrediction> ConstantModel::predict(std::span<const Location> pts) const {
  return std::vector<PointPrediction>(pts.size(), PointPrediction{mean_, sd_});
}

frk::BasisSet frk_basis_for(std::span<const SurveyRecord> records, const frk::FrkSpec& spec) {
  BBox box = bounding_box(records);
  // A degenerate box (collinear or single-site data) gets one BAU of extent.
  if (!(box.width() > 0.0)) box = {{box.lo.lon - spec.bau_cell_size, box.lo.lat}, {box.hi.lon + spec.bau_cell_size, box.hi.lat}};
  if (!(box.height() > 0.0)) box = {{box.lo.lon, box.lo.lat - spec.bau_cell_size}, {box.hi.lon, box.hi.lat + spec.bau_cell_size}};
  return frk::place_basis(box, spec.nres, spec.regular, spec.scale_aperture);
}

std::unique_ptr<FittedModel> fit_model(const ModelConfig& cfg, std::span<const SurveyRecord> records) {
  if (records.empty()) throw ValidationError("fit_model: no training records");
  switch (cfg.kind) {
    case ModelKind::Gp:
      return std::make_unique<GpModel>(gp::fit(records, cfg.gp));
    case ModelKind::Sprf:
      return std::make_unique<SprfModel>(sprf::fit(records, cfg.sprf));
    case ModelKind::Frk: {
      auto basis = frk_basis_for(records, cfg.frk);
      auto f = frk::fit(records, basis, cfg.frk);
      frk::PredictOptions opts;
      opts.n_mc = cfg.frk.n_mc;
      opts.seed = cfg.frk.seed;
      opts.threads = cfg.frk.threads;
      return std::make_unique<FrkModel>(std::move(f), std::move(basis), opts);
    }
    case ModelKind::Lgm:
      return std::make_unique<LgmModel>(lgm::fit(records, cfg.lgm));
    case ModelKind::Constant: {
      double mean = 0.0;
      for (const auto& r : records) mean += r.prevalence();
      mean /= static_cast<double>(records.size());
      double ss = 0.0;
      for (const auto& r : records) ss += (r.prevalence() - mean) * (r.prevalence() - mean);
      const double sd = records.size() > 1 ? std::sqrt(ss / static_cast<double>(records.size() - 1)) : 0.0;
      return std::make_unique<ConstantModel>(mean, sd);
    }
  }
  throw ValidationError("fit_model: unknown model kind");
}

}  // namespace geoprev
