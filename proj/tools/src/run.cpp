#include "geoprev_app/run.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "geoprev/errors.hpp"
#include "geoprev/evalkit.hpp"
#include "geoprev/simkit.hpp"
#include "geoprev_app/bench.hpp"
#include "geoprev_app/serialize.hpp"

namespace geoprev::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Model settings for this run: the run seed feeds models whose block leaves
// the seed unset, and threads go only where the model allows them.
ModelConfig effective_model(const RunConfig& cfg, bool inside_cv) {
  ModelConfig m = *cfg.model_config;
  const json& block = cfg.source.contains(to_string(m.kind)) ? cfg.source.at(to_string(m.kind)) : json::object();
  const bool seeded = block.is_object() && block.contains("seed");
  if (!seeded) {
    m.sprf.seed = cfg.seed;
    m.frk.seed = cfg.seed;
  }
  if (cfg.early_stop) m.gp.early_stop = true;
  m.sprf.threads = 1;
  m.lgm.threads = 1;
  m.frk.threads = inside_cv ? 1 : cfg.threads;
  return m;
}

std::vector<SurveyRecord> read_survey(const RunConfig& cfg) {
  if (!cfg.survey) throw ValidationError("no input survey");
  return parse_survey_csv(*cfg.survey);
}

void do_simulate(const RunConfig& cfg, std::ostream& log) {
  const auto& s = cfg.simulate;
  sim::SimConfig sc;
  sc.raster = s.raster ? read_esri_ascii(*s.raster) : sim::two_bump_surface(s.bbox, s.cell_size);
  if (s.count) {
    sc.locations = sim::Uniform{*s.count};
  } else {
    sc.locations = sim::AtPoints{locations_of(parse_survey_csv(*s.points))};
  }
  sc.tests_per_site = s.tests_per_site;
  sc.noise_sd = s.noise_sd;
  sc.seed = cfg.seed;
  const auto res = sim::simulate(sc);
  write_survey_csv(cfg.out_dir / "survey.csv", res.records);

  json dropped = json::array();
  for (const auto& d : res.dropped)
    dropped.push_back({{"index", d.index}, {"lon", d.loc.lon}, {"lat", d.loc.lat}, {"reason", d.reason}});
  json side = {{"seed", cfg.seed},
               {"raster", s.raster ? json(s.raster->string()) : json("two_bump")},
               {"noise_sd", s.noise_sd},
               {"tests_per_site", s.tests_per_site},
               {"records", res.records.size()},
               {"dropped", dropped}};
  write_json(cfg.out_dir / "survey.provenance.json", side);
  log << "simulate: " << res.records.size() << " records, " << res.dropped.size() << " dropped\n";
}

void do_fit(const RunConfig& cfg, std::ostream& log) {
  const auto records = read_survey(cfg);
  const auto mc = effective_model(cfg, false);
  const auto model = fit_model(mc, records);
  save_model(cfg.out_dir / "model.json", mc, *model, records);
  log << "fit: " << to_string(mc.kind) << " on " << records.size() << " records\n";
}

void do_predict(const RunConfig& cfg, std::ostream& log) {
  StoredModel sm;
  if (cfg.model) {
    sm = load_model(*cfg.model);
    sm.config.frk.threads = cfg.threads;
  } else {
    sm.records = read_survey(cfg);
    sm.config = effective_model(cfg, false);
    sm.model = fit_model(sm.config, sm.records);
  }

  Raster grid;
  if (cfg.grid.raster) {
    grid = read_esri_ascii(*cfg.grid.raster);
  } else {
    const BBox box = cfg.grid.bbox ? *cfg.grid.bbox : bounding_box(std::span<const SurveyRecord>(sm.records));
    grid = build_grid(box, cfg.grid.cell_size);
  }
  const auto cells = grid.valid_cells();
  const auto centres = grid.valid_centres();
  const auto pred = sm.model->predict(centres);

  Raster mean(grid.origin(), grid.cell_size(), grid.n_rows(), grid.n_cols());
  Raster sd = mean;
  for (std::size_t r = 0; r < grid.n_rows(); ++r)
    for (std::size_t c = 0; c < grid.n_cols(); ++c) {
      const bool nd = grid.is_nodata(r, c);
      mean.set_nodata(r, c, nd);
      sd.set_nodata(r, c, nd);
    }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    mean.at(cells[i].row, cells[i].col) = pred[i].estimate;
    sd.at(cells[i].row, cells[i].col) = pred[i].sd;
  }
  write_esri_ascii(cfg.out_dir / "mean.asc", mean);
  write_esri_ascii(cfg.out_dir / "sd.asc", sd);
  log << "predict: " << to_string(sm.config.kind) << " at " << cells.size() << " cells\n";
}

json metrics_json(const eval::MetricsCore& m) {
  return {{"count", m.count},
          {"rmse", m.rmse},
          {"pearson", m.pearson ? json(*m.pearson) : json(nullptr)},
          {"prop_abs_error_lt_0.05", m.prop_abs_error[0]},
          {"prop_abs_error_lt_0.1", m.prop_abs_error[1]},
          {"prop_abs_error_lt_0.2", m.prop_abs_error[2]},
          {"within1", m.within1},
          {"within2", m.within2},
          {"within2_exclusive", m.within2_exclusive},
          {"width_mean", m.width_mean},
          {"width_sd", m.width_sd}};
}

void do_cv(const RunConfig& cfg, std::ostream& log) {
  const auto records = read_survey(cfg);
  const auto pts = locations_of(records);
  const auto folds = eval::kmeans_folds(pts, cfg.cv.k, cfg.seed);
  const auto mc = effective_model(cfg, true);
  const auto res = eval::cv_run(records, mc, folds, cfg.threads);
  const auto strata = eval::density_strata(pts);

  std::vector<double> y, yhat, sd;
  std::vector<eval::Stratum> st;
  std::ofstream csv(cfg.out_dir / "records.csv");
  if (!csv) throw Error("cannot write records.csv");
  csv << "record_id,fold,y,yhat,sd,within1,within2,within2_exclusive\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& h = res.records[i];
    const double yi = records[i].prevalence();
    csv << i << ',' << h.fold << ',' << num(yi) << ',';
    if (h.ok) {
      const auto c = eval::interval_coverage(yi, h.prediction, h.sd);
      csv << num(h.prediction) << ',' << num(h.sd) << ',' << int(c.within1) << ',' << int(c.within2) << ','
          << int(c.within2_exclusive) << '\n';
      y.push_back(yi);
      yhat.push_back(h.prediction);
      sd.push_back(h.sd);
      st.push_back(strata[i].stratum);
    } else {
      csv << "nan,nan,,,\n";
    }
  }

  json out = {{"model", to_string(mc.kind)}, {"k", cfg.cv.k}, {"n_records", records.size()},
              {"n_scored", y.size()}};
  json fails = json::array();
  for (const auto& f : res.failures) fails.push_back({{"fold", f.fold}, {"message", f.message}});
  out["failures"] = fails;
  if (y.size() >= 2) {
    const auto rep = eval::metrics(y, yhat, sd, st);
    out["overall"] = metrics_json(rep.overall);
    json strata_json = json::object();
    for (const auto& s : rep.strata) strata_json[eval::to_string(s.stratum)] = metrics_json(s.metrics);
    out["strata"] = strata_json;
  } else {
    out["overall"] = nullptr;
    out["strata"] = json::object();
  }
  write_json(cfg.out_dir / "metrics.json", out);
  log << "cv: " << to_string(mc.kind) << ", " << cfg.cv.k << " folds, " << res.failures.size()
      << " failed\n";
}

void do_bench(const RunConfig& cfg, std::ostream& log) {
  const auto report = bench_scaling(cfg.bench, cfg.seed);
  json j = to_json(report);
  json slopes = json::object();
  for (ModelKind m : cfg.bench.models) {
    const auto fit = loglog_slope(report, m, [](const BenchRun& b) { return b.fit_time_s; });
    const auto wall = loglog_slope(report, m, [](const BenchRun& b) { return b.wall_time_s; });
    slopes[to_string(m)] = {{"fit", fit ? json(*fit) : json(nullptr)}, {"wall", wall ? json(*wall) : json(nullptr)}};
  }
  j["loglog_slopes"] = slopes;
  write_json(cfg.out_dir / "bench.json", j);
  for (const auto& r : report.runs) {
    log << "bench: " << to_string(r.model) << " n=" << r.n_records << ' ' << r.status;
    if (r.status == "ok") log << " wall=" << r.wall_time_s << "s";
    log << '\n';
  }
}

void append_provenance(const RunConfig& cfg) {
  json line = {{"command", to_string(cfg.command)}, {"config_hash", config_hash(cfg.source)},
               {"seed", cfg.seed}, {"threads", cfg.threads}, {"version", kVersion}};
  std::ofstream out(cfg.out_dir / "provenance.jsonl", std::ios::app);
  if (!out) throw Error("cannot write provenance.jsonl");
  out << line.dump() << '\n';
}

}  // namespace

RunConfig load_config(const fs::path& path, Command command, const Overrides& ov) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"--config: cannot read " + path.string()});
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError({"--config: not valid JSON: " + std::string(e.what())});
  }
  if (!j.is_object()) throw ConfigError({"--config: top level must be an object"});
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.threads) j["threads"] = *ov.threads;
  if (ov.early_stop) j["early_stop"] = true;
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig cfg = parse_config(j, command, base);
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  return cfg;
}

void run(const RunConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.out_dir);
  switch (cfg.command) {
    case Command::Simulate: do_simulate(cfg, log); break;
    case Command::Fit: do_fit(cfg, log); break;
    case Command::Predict: do_predict(cfg, log); break;
    case Command::Cv: do_cv(cfg, log); break;
    case Command::Bench: do_bench(cfg, log); break;
  }
  append_provenance(cfg);
}

int run_command(Command command, const fs::path& config, const Overrides& ov, std::ostream& log,
                std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_config(config, command, ov);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return 2;
  }
  try {
    run(cfg, log);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << to_string(command) << " failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace geoprev::app
