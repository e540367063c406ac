#include "geoprev/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "geoprev/errors.hpp"
#include "geoprev/parallel.hpp"

namespace geoprev::eval {

namespace {

double sq_dist(const Location& a, const Location& b) {
  const double dx = a.lon - b.lon, dy = a.lat - b.lat;
  return dx * dx + dy * dy;
}

std::size_t nearest(const Location& p, const std::vector<Location>& c) {
  std::size_t best = 0;
  double bd = sq_dist(p, c[0]);
  for (std::size_t j = 1; j < c.size(); ++j) {
    const double d = sq_dist(p, c[j]);
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return best;
}

struct Clustering {
  std::vector<std::size_t> label;
  std::vector<Location> centres;
  double wss = 0.0;
};

Clustering lloyd(std::span<const Location> pts, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  Clustering c;
  // k-means++ seeding
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  c.centres.push_back(pts[first(rng)]);
  std::vector<double> d2(n);
  while (c.centres.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = sq_dist(pts[i], c.centres[nearest(pts[i], c.centres)]);
      total += d2[i];
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double cum = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      cum += d2[i];
      pick = i;
      if (cum >= target) break;
    }
    c.centres.push_back(pts[pick]);
  }

  c.label.assign(n, k);
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = nearest(pts[i], c.centres);
      if (j != c.label[i]) {
        c.label[i] = j;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sx[c.label[i]] += pts[i].lon;
      sy[c.label[i]] += pts[i].lat;
      ++cnt[c.label[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (cnt[j] > 0) {
        c.centres[j] = {sx[j] / static_cast<double>(cnt[j]), sy[j] / static_cast<double>(cnt[j])};
        continue;
      }
      // Empty cluster: move it to the point farthest from its own centre.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(pts[i], c.centres[c.label[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      c.centres[j] = pts[far];
      c.label[far] = j;
    }
  }
  c.wss = 0.0;
  for (std::size_t i = 0; i < n; ++i) c.wss += sq_dist(pts[i], c.centres[c.label[i]]);
  return c;
}

}  // namespace

FoldAssignment kmeans_folds(std::span<const Location> pts, int k, std::uint64_t seed, int restarts) {
  if (k < 1) throw ValidationError("kmeans_folds: k must be >= 1");
  if (restarts < 1) throw ValidationError("kmeans_folds: restarts must be >= 1");
  std::set<std::pair<double, double>> distinct;
  for (const auto& p : pts) distinct.emplace(p.lon, p.lat);
  if (static_cast<std::size_t>(k) > distinct.size())
    throw ValidationError("kmeans_folds: k exceeds the number of distinct locations");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  Clustering best;
  best.wss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Clustering c = lloyd(pts, static_cast<std::size_t>(k), rng);
    if (c.wss < best.wss) best = std::move(c);
  }
  FoldAssignment out;
  out.centroids = best.centres;
  out.fold.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out.fold[i] = static_cast<int>(nearest(pts[i], out.centroids)) + 1;
  return out;
}

double within_ss(std::span<const Location> pts, const FoldAssignment& folds) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    s += sq_dist(pts[i], folds.centroids[static_cast<std::size_t>(folds.fold[i] - 1)]);
  return s;
}

CvResult cv_run(std::span<const SurveyRecord> records, const ModelFactory& factory,
                const FoldAssignment& folds, unsigned threads) {
  if (folds.fold.size() != records.size()) throw ValidationError("cv_run: fold assignment does not match records");
  const int k = folds.k();
  if (k < 2) throw ValidationError("cv_run: at least 2 folds required");
  CvResult out;
  out.records.resize(records.size());
  out.training.resize(static_cast<std::size_t>(k));
  std::vector<std::optional<FoldFailure>> failure(static_cast<std::size_t>(k));

  parallel::parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t f) {
    const int label = static_cast<int>(f) + 1;
    std::vector<SurveyRecord> train;
    std::vector<Location> test;
    std::vector<std::size_t> test_idx;
    auto& train_idx = out.training[f];
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (folds.fold[i] == label) {
        test.push_back(records[i].loc);
        test_idx.push_back(i);
      } else {
        train.push_back(records[i]);
        train_idx.push_back(i);
      }
    }
    for (auto i : test_idx) out.records[i].fold = label;
    if (test.empty()) return;
    try {
      if (train.empty()) throw ValidationError("empty training set");
      const auto model = factory(train);
      const auto pred = model->predict(test);
      for (std::size_t j = 0; j < test_idx.size(); ++j) {
        auto& r = out.records[test_idx[j]];
        r.prediction = pred[j].estimate;
        r.sd = pred[j].sd;
        r.ok = true;
      }
    } catch (const std::exception& e) {
      failure[f] = FoldFailure{label, e.what()};
      for (auto i : test_idx) {
        out.records[i].prediction = std::numeric_limits<double>::quiet_NaN();
        out.records[i].sd = std::numeric_limits<double>::quiet_NaN();
      }
    }
  });
  for (auto& f : failure)
    if (f) out.failures.push_back(std::move(*f));
  return out;
}

CvResult cv_run(std::span<const SurveyRecord> records, const ModelConfig& config,
                const FoldAssignment& folds, unsigned threads) {
  return cv_run(records, [&config](std::span<const SurveyRecord> train) { return fit_model(config, train); },
                folds, threads);
}

Coverage interval_coverage(double y, double yhat, double sd) {
  if (!(sd >= 0.0)) throw ValidationError("interval_coverage: sd must be >= 0");
  const double lo1 = std::max(0.0, yhat - sd), hi1 = std::min(1.0, yhat + sd);
  const double lo2 = std::max(0.0, yhat - 2.0 * sd), hi2 = std::min(1.0, yhat + 2.0 * sd);
  Coverage c;
  c.within1 = y >= lo1 && y <= hi1;
  c.within2 = y >= lo2 && y <= hi2;
  c.within2_exclusive = c.within2 && !c.within1;
  return c;
}

double interval_width(double yhat, double sd) {
  return std::min(1.0, yhat + 2.0 * sd) - std::max(0.0, yhat - 2.0 * sd);
}

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::Low: return "low";
    case Stratum::Medium: return "medium";
    case Stratum::High: return "high";
  }
  return "high";
}

std::vector<DensityPoint> density_strata(std::span<const Location> pts) {
  const std::size_t n = pts.size();
  if (n < 2) throw ValidationError("density_strata: at least 2 points required");
  auto sample_sd = [&](auto get) {
    double m = 0.0;
    for (const auto& p : pts) m += get(p);
    m /= static_cast<double>(n);
    double s = 0.0;
    for (const auto& p : pts) s += (get(p) - m) * (get(p) - m);
    return std::sqrt(s / static_cast<double>(n - 1));
  };
  const double factor = std::pow(static_cast<double>(n), -1.0 / 6.0);
  double hx = sample_sd([](const Location& p) { return p.lon; }) * factor;
  double hy = sample_sd([](const Location& p) { return p.lat; }) * factor;
  std::vector<DensityPoint> out(n);
  if (!(hx > 0.0) && !(hy > 0.0)) {
    for (auto& d : out) d = {1.0, Stratum::High};
    return out;
  }
  if (!(hx > 0.0)) hx = hy;
  if (!(hy > 0.0)) hy = hx;
  const double norm = 1.0 / (2.0 * std::numbers::pi * hx * hy * static_cast<double>(n));
  std::vector<double> dens(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = (pts[i].lon - pts[j].lon) / hx, dy = (pts[i].lat - pts[j].lat) / hy;
      s += std::exp(-0.5 * (dx * dx + dy * dy));
    }
    dens[i] = s * norm;
  }
  const double mx = *std::max_element(dens.begin(), dens.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dens[i] / mx;
    out[i].density = d;
    out[i].stratum = d <= 0.2 ? Stratum::Low : (d <= 0.4 ? Stratum::Medium : Stratum::High);
  }
  return out;
}

MetricsCore metrics_core(std::span<const double> y, std::span<const double> yhat, std::span<const double> sd) {
  const std::size_t n = y.size();
  if (yhat.size() != n || sd.size() != n) throw ValidationError("metrics: length mismatch");
  MetricsCore m;
  m.count = n;
  if (n == 0) return m;
  const double dn = static_cast<double>(n);
  double se = 0.0, my = 0.0, mp = 0.0, w_sum = 0.0;
  std::size_t hits[3] = {0, 0, 0}, w1 = 0, w2 = 0, w2x = 0;
  std::vector<double> widths(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - yhat[i];
    se += e * e;
    my += y[i];
    mp += yhat[i];
    for (int t = 0; t < 3; ++t)
      if (std::abs(e) < kErrorThresholds[t]) ++hits[t];
    const Coverage c = interval_coverage(y[i], yhat[i], sd[i]);
    w1 += c.within1;
    w2 += c.within2;
    w2x += c.within2_exclusive;
    widths[i] = interval_width(yhat[i], sd[i]);
    w_sum += widths[i];
  }
  m.rmse = std::sqrt(se / dn);
  for (int t = 0; t < 3; ++t) m.prop_abs_error[t] = static_cast<double>(hits[t]) / dn;
  m.within1 = static_cast<double>(w1) / dn;
  m.within2 = static_cast<double>(w2) / dn;
  m.within2_exclusive = static_cast<double>(w2x) / dn;
  m.width_mean = w_sum / dn;
  if (n > 1) {
    double ws = 0.0;
    for (double w : widths) ws += (w - m.width_mean) * (w - m.width_mean);
    m.width_sd = std::sqrt(ws / (dn - 1.0));
  }
  my /= dn;
  mp /= dn;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (y[i] - my) * (yhat[i] - mp);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yhat[i] - mp) * (yhat[i] - mp);
  }
  if (sxx > 0.0 && syy > 0.0) m.pearson = sxy / std::sqrt(sxx * syy);
  return m;
}

MetricsReport metrics(std::span<const double> y, std::span<const double> yhat, std::span<const double> sd,
                      std::span<const Stratum> strata) {
  if (y.size() < 2) throw ValidationError("metrics: at least 2 points required");
  if (!strata.empty() && strata.size() != y.size()) throw ValidationError("metrics: strata length mismatch");
  MetricsReport r;
  r.overall = metrics_core(y, yhat, sd);
  for (Stratum s : {Stratum::Low, Stratum::Medium, Stratum::High}) {
    std::vector<double> ys, ps, ss;
    for (std::size_t i = 0; i < strata.size(); ++i) {
      if (strata[i] != s) continue;
      ys.push_back(y[i]);
      ps.push_back(yhat[i]);
      ss.push_back(sd[i]);
    }
    if (!ys.empty()) r.strata.push_back({s, metrics_core(ys, ps, ss)});
  }
  return r;
}

}  // namespace geoprev::eval
