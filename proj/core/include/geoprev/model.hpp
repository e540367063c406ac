#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geoprev/frk.hpp"
#include "geoprev/geodata.hpp"
#include "geoprev/gpcore.hpp"
#include "geoprev/lgm.hpp"
#include "geoprev/sprf.hpp"

namespace geoprev {

enum class ModelKind { Gp, Sprf, Frk, Lgm, Constant };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Prevalence point estimate and standard deviation at one location.
struct PointPrediction {
  double estimate = 0.0;
  double sd = 0.0;
};

/// Uniform contract over the fitted models.
class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual ModelKind kind() const = 0;
  virtual std::vector<PointPrediction> predict(std::span<const Location> pts) const = 0;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Gp;
  gp::GpModelSpec gp;
  sprf::SprfSpec sprf;
  frk::FrkSpec frk;
  lgm::LgmSpec lgm;
};

/// Point estimates: clipped GP mean, forest median, FRK Monte Carlo mean and
/// LGM median. The constant model predicts the training mean prevalence with
/// the training sd.
std::unique_ptr<FittedModel> fit_model(const ModelConfig& cfg, std::span<const SurveyRecord> records);

class GpModel final : public FittedModel {
 public:
  explicit GpModel(gp::GpFit fit) : fit_(std::move(fit)) {}
  ModelKind kind() const override { return ModelKind::Gp; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override;
  const gp::GpFit& fit() const { return fit_; }

 private:
  gp::GpFit fit_;
};

class SprfModel final : public FittedModel {
 public:
  explicit SprfModel(sprf::SprfFit fit) : fit_(std::move(fit)) {}
  ModelKind kind() const override { return ModelKind::Sprf; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override;
  const sprf::SprfFit& fit() const { return fit_; }

 private:
  sprf::SprfFit fit_;
};

class FrkModel final : public FittedModel {
 public:
  FrkModel(frk::FrkFit fit, frk::BasisSet basis, frk::PredictOptions options)
      : fit_(std::move(fit)), basis_(std::move(basis)), options_(options) {}
  ModelKind kind() const override { return ModelKind::Frk; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override;
  const frk::FrkFit& fit() const { return fit_; }
  const frk::BasisSet& basis() const { return basis_; }

 private:
  frk::FrkFit fit_;
  frk::BasisSet basis_;
  frk::PredictOptions options_;
};

class LgmModel final : public FittedModel {
 public:
  explicit LgmModel(lgm::LgmFit fit) : fit_(std::move(fit)) {}
  ModelKind kind() const override { return ModelKind::Lgm; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override;
  const lgm::LgmFit& fit() const { return fit_; }

 private:
  lgm::LgmFit fit_;
};

class ConstantModel final : public FittedModel {
 public:
  ConstantModel(double mean, double sd) : mean_(mean), sd_(sd) {}
  ModelKind kind() const override { return ModelKind::Constant; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override;
  double mean() const { return mean_; }
  double sd() const { return sd_; }

 private:
  double mean_;
  double sd_;
};

/// Basis for an FRK fit on `records`.
frk::BasisSet frk_basis_for(std::span<const SurveyRecord> records, const frk::FrkSpec& spec);

}  // namespace geoprev
