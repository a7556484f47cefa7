// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "loraflow/closed_form_trace.hpp"
#include "loraflow/error_stats.hpp"
#include "loraflow/gradient_flow.hpp"
#include "loraflow/lora_gd.hpp"
#include "loraflow/spectral_lowrank.hpp"

namespace loraflow {

/// Config file rejected: parse failure or invalid/unknown field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class W0Source { IdentityScaled, Diagonal, GaussianSeeded, File };

/// One experiment run, parsed from a single JSON document. Unknown keys
/// are rejected so typos fail loudly instead of silently using defaults.
struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t n = 4;
  std::size_t m = 4;
  std::size_t r = 1;
  double sigma = 1.0;
  std::vector<double> alphas = {1e-2, 5e-3, 2.5e-3};
  double lambda = 1.0;
  std::size_t k = 1;
  double flow_step = 1e-4;
  double flow_horizon = 2.0;
  std::size_t flow_stride = 10;
  std::size_t trials = 100000;
  W0Source w0_source = W0Source::GaussianSeeded;
  double w0_scale = 1.0;
  std::vector<double> w0_diagonal;
  std::string w0_path;
  std::string out_dir = "runs";
};

inline const std::vector<std::pair<std::string, std::string>>&
experiment_catalog() {
  static const std::vector<std::pair<std::string, std::string>> catalog = {
      {"gd-convergence",
       "alpha sweep: affine-interpolated LoRA GD tracks the gradient flow at O(alpha)"},
      {"trace-flow",
       "trace-squared closed form a(t), p/q trajectory, and its asymptotic minimizer"},
      {"fullrank-flow",
       "full-rank trace-squared flow U(t) against its closed form and limit"},
      {"approx-error",
       "Monte Carlo check of the expected squared relative error (n^2+n-2)/(nr+2)"},
      {"moments",
       "unit-sphere and chi-squared moment identities behind the error formula"},
      {"lowrank-eym",
       "spectrally initialized Frobenius flow converging to the truncated SVD"},
  };
  return catalog;
}

inline std::string list_experiments_text() {
  std::string out;
  for (const auto& [name, blurb] : experiment_catalog()) {
    out += name + "  -  " + blurb + "\n";
  }
  return out;
}

inline std::string list_experiments_json() {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& [name, blurb] : experiment_catalog()) {
    arr.push_back({{"name", name}, {"description", blurb}});
  }
  return arr.dump(2) + "\n";
}

namespace detail {

/// Round-trip-exact double formatting (17 significant digits).
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void require_known_keys(const nlohmann::json& obj,
                               const std::vector<std::string>& known,
                               const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_field(const nlohmann::json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  detail::require_known_keys(
      doc,
      {"experiment", "seed", "n", "m", "r", "sigma", "alpha", "lambda", "k",
       "flow", "trials", "w0", "out"},
      "config");

  ExperimentConfig cfg;
  if (!doc.contains("experiment") || !doc.at("experiment").is_string()) {
    throw ConfigError("field 'experiment' (string) is required");
  }
  cfg.experiment = doc.at("experiment").get<std::string>();
  cfg.seed = detail::get_field<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.n = detail::get_field<std::size_t>(doc, "n", cfg.n);
  cfg.m = detail::get_field<std::size_t>(doc, "m", cfg.m);
  cfg.r = detail::get_field<std::size_t>(doc, "r", cfg.r);
  cfg.sigma = detail::get_field<double>(doc, "sigma", cfg.sigma);
  if (doc.contains("alpha")) {
    if (!doc.at("alpha").is_array() || doc.at("alpha").empty()) {
      throw ConfigError("field 'alpha' must be a non-empty array of step sizes");
    }
    cfg.alphas = doc.at("alpha").get<std::vector<double>>();
  }
  cfg.lambda = detail::get_field<double>(doc, "lambda", cfg.lambda);
  cfg.k = detail::get_field<std::size_t>(doc, "k", cfg.k);
  if (doc.contains("flow")) {
    const auto& flow = doc.at("flow");
    detail::require_known_keys(flow, {"step", "horizon", "stride"}, "'flow'");
    cfg.flow_step = detail::get_field<double>(flow, "step", cfg.flow_step);
    cfg.flow_horizon = detail::get_field<double>(flow, "horizon", cfg.flow_horizon);
    cfg.flow_stride = detail::get_field<std::size_t>(flow, "stride", cfg.flow_stride);
  }
  cfg.trials = detail::get_field<std::size_t>(doc, "trials", cfg.trials);
  if (doc.contains("w0")) {
    const auto& w0 = doc.at("w0");
    detail::require_known_keys(w0, {"source", "scale", "values", "path"}, "'w0'");
    const std::string source = detail::get_field<std::string>(w0, "source", "");
    if (source == "identity-scaled") {
      cfg.w0_source = W0Source::IdentityScaled;
      cfg.w0_scale = detail::get_field<double>(w0, "scale", 1.0);
    } else if (source == "diagonal") {
      cfg.w0_source = W0Source::Diagonal;
      cfg.w0_diagonal = detail::get_field<std::vector<double>>(w0, "values", {});
      if (cfg.w0_diagonal.empty()) {
        throw ConfigError("'w0.values' must be a non-empty array for source 'diagonal'");
      }
    } else if (source == "gaussian-seeded") {
      cfg.w0_source = W0Source::GaussianSeeded;
    } else if (source == "file") {
      cfg.w0_source = W0Source::File;
      cfg.w0_path = detail::get_field<std::string>(w0, "path", "");
      if (cfg.w0_path.empty()) {
        throw ConfigError("'w0.path' is required for source 'file'");
      }
    } else {
      throw ConfigError("'w0.source' must be one of identity-scaled, diagonal, "
                        "gaussian-seeded, file");
    }
  }
  cfg.out_dir = detail::get_field<std::string>(doc, "out", cfg.out_dir);

  const auto& catalog = experiment_catalog();
  const bool known = std::any_of(catalog.begin(), catalog.end(), [&](const auto& e) {
    return e.first == cfg.experiment;
  });
  if (!known) {
    std::string names;
    for (const auto& [name, blurb] : catalog) names += (names.empty() ? "" : ", ") + name;
    throw ConfigError("unknown experiment '" + cfg.experiment +
                      "'; valid names: " + names);
  }
  if (cfg.n == 0 || cfg.m == 0 || cfg.r == 0) {
    throw ConfigError("n, m, r must be positive");
  }
  if (!(cfg.sigma > 0.0)) throw ConfigError("sigma must be positive");
  for (double a : cfg.alphas) {
    if (!(a > 0.0)) throw ConfigError("step sizes in 'alpha' must be positive");
  }
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1]");
  }
  if (cfg.k == 0) throw ConfigError("k must be >= 1");
  if (!(cfg.flow_step > 0.0) || !(cfg.flow_horizon > 0.0) || cfg.flow_stride == 0) {
    throw ConfigError("flow step/horizon must be positive, stride >= 1");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config_json(doc);
}

namespace detail {

// Seed streams: one fixed lane per sampled object so experiments stay
// reproducible when pieces are added or reordered.
constexpr std::uint64_t kW0Stream = 11;
constexpr std::uint64_t kX0Stream = 23;
constexpr std::uint64_t kSphereStream = 37;
constexpr std::uint64_t kChiStream = 41;
constexpr std::uint64_t kSpectralStream = 53;

inline Matrix load_w0_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open w0 file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("w0 file " + path + " line " + std::to_string(line_no) +
                          ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("w0 file " + path + " line " + std::to_string(line_no) +
                        ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) {
    throw ConfigError("w0 file " + path + " is empty");
  }
  Matrix w0(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) w0(i, j) = rows[i][j];
  return w0;
}

inline Matrix make_w0(const ExperimentConfig& cfg) {
  switch (cfg.w0_source) {
    case W0Source::IdentityScaled:
      if (cfg.n != cfg.m) {
        throw ConfigError("identity-scaled w0 requires n == m");
      }
      return cfg.w0_scale * Matrix::identity(cfg.n);
    case W0Source::Diagonal: {
      if (cfg.w0_diagonal.size() > std::min(cfg.n, cfg.m)) {
        throw ConfigError("w0 diagonal longer than min(n, m)");
      }
      Matrix w0(cfg.n, cfg.m);
      for (std::size_t i = 0; i < cfg.w0_diagonal.size(); ++i) {
        w0(i, i) = cfg.w0_diagonal[i];
      }
      return w0;
    }
    case W0Source::GaussianSeeded: {
      RngState rng(derive_seed(cfg.seed, kW0Stream));
      return gaussian_matrix(rng, cfg.n, cfg.m, cfg.sigma);
    }
    case W0Source::File:
      return load_w0_csv(cfg.w0_path);
  }
  throw ConfigError("unreachable w0 source");
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open output file: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) {
      out_ << (i ? "," : "") << header[i];
    }
    out_ << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out_ << (i ? "," : "") << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

struct CheckList {
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  bool all_pass = true;

  void add(const std::string& name, bool pass, nlohmann::ordered_json extra) {
    extra["name"] = name;
    extra["pass"] = pass;
    nlohmann::ordered_json ordered;
    ordered["name"] = extra["name"];
    ordered["pass"] = extra["pass"];
    for (auto it = extra.begin(); it != extra.end(); ++it) {
      if (it.key() != "name" && it.key() != "pass") ordered[it.key()] = it.value();
    }
    items.push_back(ordered);
    all_pass = all_pass && pass;
  }

  void add_leq(const std::string& name, double value, double threshold) {
    add(name, value <= threshold,
        {{"value", value}, {"threshold", threshold}, {"relation", "<="}});
  }

  void add_band(const std::string& name, double value, double lo, double hi) {
    add(name, value >= lo && value <= hi,
        {{"value", value}, {"lo", lo}, {"hi", hi}, {"relation", "in-band"}});
  }

  /// 3-standard-error acceptance with the retry-once policy: on failure the
  /// estimate is recomputed at 10x trials and must pass there.
  void add_mc(const std::string& name, const McEstimate& first, double expected,
              const std::function<McEstimate(std::size_t)>& rerun_at) {
    bool pass = std::abs(first.mean - expected) <= 3.0 * first.std_error;
    bool retried = false;
    McEstimate used = first;
    if (!pass) {
      retried = true;
      used = rerun_at(first.trials * 10);
      pass = std::abs(used.mean - expected) <= 3.0 * used.std_error;
    }
    add(name, pass,
        {{"mean", used.mean},
         {"std_error", used.std_error},
         {"expected", expected},
         {"trials", used.trials},
         {"retried", retried}});
  }
};

inline nlohmann::ordered_json config_echo(const ExperimentConfig& cfg) {
  nlohmann::ordered_json echo;
  echo["experiment"] = cfg.experiment;
  echo["seed"] = cfg.seed;
  echo["n"] = cfg.n;
  echo["m"] = cfg.m;
  echo["r"] = cfg.r;
  echo["sigma"] = cfg.sigma;
  echo["alpha"] = cfg.alphas;
  echo["lambda"] = cfg.lambda;
  echo["k"] = cfg.k;
  echo["flow"] = {{"step", cfg.flow_step},
                  {"horizon", cfg.flow_horizon},
                  {"stride", cfg.flow_stride}};
  echo["trials"] = cfg.trials;
  switch (cfg.w0_source) {
    case W0Source::IdentityScaled:
      echo["w0"] = {{"source", "identity-scaled"}, {"scale", cfg.w0_scale}};
      break;
    case W0Source::Diagonal:
      echo["w0"] = {{"source", "diagonal"}, {"values", cfg.w0_diagonal}};
      break;
    case W0Source::GaussianSeeded:
      echo["w0"] = {{"source", "gaussian-seeded"}};
      break;
    case W0Source::File:
      echo["w0"] = {{"source", "file"}, {"path", cfg.w0_path}};
      break;
  }
  echo["out"] = cfg.out_dir;
  return echo;
}

/// Max over the flow's sample grid (restricted to the log horizon) of the
/// norm gap between the affine interpolation and the flow.
inline double interpolation_sup_deviation(const IterateLog& log,
                                          const Objective& obj,
                                          const GdConfig& gd_cfg,
                                          const ThetaTrajectory& flow) {
  double sup = 0.0;
  const double horizon = log.horizon();
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    const double t = flow.times[i];
    if (t > horizon) break;
    sup = std::max(sup,
                   theta_norm(interpolate_affine(log, t, obj, gd_cfg) - flow.states[i]));
  }
  return sup;
}

inline GdConfig gd_config_for(double alpha, double lambda, std::size_t k,
                              double horizon) {
  GdConfig gd;
  gd.alpha = alpha;
  gd.lambda = lambda;
  gd.k = k;
  // One spare outer iteration so the logged horizon strictly covers `horizon`.
  gd.max_outer_iters = static_cast<std::size_t>(
                           std::ceil(horizon / (alpha * static_cast<double>(k)))) +
                       1;
  gd.stop_grad_norm = 0.0;
  gd.r_prime = 1e6;
  return gd;
}

}  // namespace detail

struct RunResult {
  nlohmann::ordered_json summary;
  bool pass = false;
};

namespace experiments {

inline void gd_convergence(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                           nlohmann::ordered_json& metrics,
                           detail::CheckList& checks) {
  const Matrix w0 = detail::make_w0(cfg);
  const Objective obj(ObjectiveKind::TraceSquaredLowRank, w0);
  RngState x0_rng(derive_seed(cfg.seed, detail::kX0Stream));
  const Matrix x0 = gaussian_matrix(x0_rng, cfg.r, cfg.n, cfg.sigma);
  const ThetaPoint theta0(Matrix::zero(cfg.n, cfg.r), x0);

  const double horizon = cfg.flow_horizon;
  const FlowConfig flow_cfg{cfg.flow_step, horizon, cfg.flow_stride};
  const ThetaTrajectory flow = integrate_lora_flow(obj, theta0, flow_cfg);

  struct Run {
    double alpha;
    double lambda;
    IterateLog log;
    GdConfig gd;
    double deviation;
  };
  std::vector<Run> runs;
  for (double alpha : cfg.alphas) {
    for (double lambda : {0.0, 1.0}) {
      GdConfig gd = detail::gd_config_for(alpha, lambda, cfg.k, horizon);
      IterateLog log = run_lora_gd(obj, theta0, gd);
      const double dev = detail::interpolation_sup_deviation(log, obj, gd, flow);
      runs.push_back(Run{alpha, lambda, std::move(log), gd, dev});
    }
  }

  nlohmann::ordered_json dev_json = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Run& run = runs[i];
    std::string ratio_cell;
    if (i >= 2) {
      const double ratio = runs[i - 2].deviation / run.deviation;
      ratio_cell = detail::fmt_double(ratio);
      checks.add_band("sup-deviation-halves(alpha=" + detail::fmt_double(run.alpha) +
                          ",lambda=" + detail::fmt_double(run.lambda) + ")",
                      ratio, 1.5, 3.0);
    }
    csv.row({detail::fmt_double(run.alpha), detail::fmt_double(run.lambda),
             detail::fmt_double(run.deviation), ratio_cell});
    dev_json.push_back({{"alpha", run.alpha},
                        {"lambda", run.lambda},
                        {"sup_deviation", run.deviation}});
  }
  metrics["interpolation_vs_flow"] = dev_json;

  // Scheme invariance: the lambda=0 and lambda=1 interpolations at T drift
  // apart by O(alpha).
  std::vector<double> scheme_gaps;
  for (std::size_t i = 0; i + 1 < runs.size(); i += 2) {
    const ThetaPoint end0 =
        interpolate_affine(runs[i].log, horizon, obj, runs[i].gd);
    const ThetaPoint end1 =
        interpolate_affine(runs[i + 1].log, horizon, obj, runs[i + 1].gd);
    scheme_gaps.push_back(theta_norm(end0 - end1));
  }
  metrics["scheme_gap_at_T"] = scheme_gaps;
  for (std::size_t i = 1; i < scheme_gaps.size(); ++i) {
    checks.add_band("scheme-gap-halves(alpha=" + detail::fmt_double(cfg.alphas[i]) + ")",
                    scheme_gaps[i - 1] / scheme_gaps[i], 1.5, 3.0);
  }

  // k invariance: k=1 vs k=4 interpolations at T, at the config lambda.
  std::vector<double> k_gaps;
  for (double alpha : cfg.alphas) {
    GdConfig gd1 = detail::gd_config_for(alpha, cfg.lambda, 1, horizon);
    GdConfig gd4 = detail::gd_config_for(alpha, cfg.lambda, 4, horizon);
    IterateLog log1 = run_lora_gd(obj, theta0, gd1);
    IterateLog log4 = run_lora_gd(obj, theta0, gd4);
    k_gaps.push_back(theta_norm(interpolate_affine(log1, horizon, obj, gd1) -
                                interpolate_affine(log4, horizon, obj, gd4)));
  }
  metrics["k_gap_at_T"] = k_gaps;
  for (std::size_t i = 1; i < k_gaps.size(); ++i) {
    checks.add_band("k-gap-halves(alpha=" + detail::fmt_double(cfg.alphas[i]) + ")",
                    k_gaps[i - 1] / k_gaps[i], 1.5, 3.0);
  }
}

inline void trace_flow(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                       nlohmann::ordered_json& metrics, detail::CheckList& checks) {
  const Matrix w0 = detail::make_w0(cfg);
  RngState x0_rng(derive_seed(cfg.seed, detail::kX0Stream));
  const Matrix x0 = gaussian_matrix(x0_rng, cfg.r, cfg.n, cfg.sigma);
  const TraceClosedForm cf(w0, x0);
  const double c = cf.constants().c;
  const double x0_sq = cf.constants().x0_norm_sq;

  const double t_star = tail_horizon(cf, 1e-10);
  const double t_end = std::max(cfg.flow_horizon, t_star);
  const Objective obj(ObjectiveKind::TraceSquaredLowRank, w0);
  const ThetaPoint theta0(Matrix::zero(cfg.n, cfg.r), x0);
  const FlowConfig flow_cfg{cfg.flow_step, t_end, cfg.flow_stride};
  const ThetaTrajectory flow = integrate_lora_flow(obj, theta0, flow_cfg);
  const Matrix limit = limit_product(cf);

  double sup_dev = 0.0;
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    const double t = flow.times[i];
    const ThetaPoint closed = closed_trajectory(cf, t);
    sup_dev = std::max(sup_dev, theta_norm(closed - flow.states[i]));
    const double a = a_of_t(cf, t);
    csv.row({detail::fmt_double(t), detail::fmt_double(a),
             detail::fmt_double(0.5 * a * a),
             detail::fmt_double(frobenius_norm(closed.b * closed.a - limit))});
  }

  metrics["t_star"] = t_star;
  metrics["trace_w0"] = c;
  metrics["trace_limit"] = trace(limit);
  metrics["sup_dev_closed_vs_rk4"] = sup_dev;

  checks.add_leq("a(0)-matches-trace", std::abs(a_of_t(cf, 0.0) - c), 1e-8);
  checks.add_leq("a'(0)-matches-ivp",
                 std::abs(a_prime_of_t(cf, 0.0) + c * x0_sq), 1e-8);
  for (double t : {0.1, 1.0, 3.0}) {
    const double h = 1e-5;
    const double second =
        (a_prime_of_t(cf, t + h) - a_prime_of_t(cf, t - h)) / (2.0 * h);
    checks.add_leq("a-ode-residual(t=" + detail::fmt_double(t) + ")",
                   a_ode_residual(cf, t), 1e-6 * std::max(1.0, std::abs(second)));
  }
  checks.add_leq("closed-form-vs-rk4", sup_dev, 1e-6);
  const ThetaPoint closed_star = closed_trajectory(cf, t_star);
  checks.add_leq("limit-deviation-at-t-star",
                 frobenius_norm(closed_star.b * closed_star.a - limit), 1e-8);
  const ThetaPoint& flow_end = flow.states.back();
  checks.add_leq("rk4-limit-deviation-at-end",
                 frobenius_norm(flow_end.b * flow_end.a - limit), 1e-8);
  checks.add_leq("trace-of-limit", std::abs(trace(limit) - c), 1e-12);
  const double a_star = a_of_t(cf, t_star);
  checks.add_leq("loss-at-t-star", 0.5 * a_star * a_star, 1e-16);
}

inline void fullrank_flow(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                          nlohmann::ordered_json& metrics,
                          detail::CheckList& checks) {
  const Matrix w0 = detail::make_w0(cfg);
  if (w0.rows() != w0.cols()) throw ConfigError("fullrank-flow requires square w0");
  const Matrix u0 = Matrix::zero(w0.rows(), w0.cols());
  const double n = static_cast<double>(w0.rows());
  const double horizon = std::max(cfg.flow_horizon, full_rank_tail_horizon(w0, u0, 1e-10));

  const Objective obj(ObjectiveKind::TraceSquaredFullRank, w0);
  const FlowConfig flow_cfg{cfg.flow_step, horizon, cfg.flow_stride};
  const MatrixTrajectory flow = integrate_full_rank_flow(obj, u0, flow_cfg);
  const Matrix limit = full_rank_limit(w0, u0);

  const double trace_w0 = trace(w0);
  const double residual0 = trace(w0 - u0);
  double sup_dev = 0.0;
  double sup_trace_gap = 0.0;
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    const double t = flow.times[i];
    const Matrix closed = full_rank_solution(w0, u0, t);
    const double dev = frobenius_norm(flow.states[i] - closed);
    sup_dev = std::max(sup_dev, dev);
    const double expected_trace = trace_w0 - std::exp(-n * t) * residual0;
    sup_trace_gap =
        std::max(sup_trace_gap, std::abs(trace(flow.states[i]) - expected_trace));
    csv.row({detail::fmt_double(t), detail::fmt_double(trace(flow.states[i])),
             detail::fmt_double(dev),
             detail::fmt_double(frobenius_norm(flow.states[i] - limit))});
  }

  metrics["horizon"] = horizon;
  metrics["trace_w0"] = trace_w0;
  metrics["trace_limit"] = trace(limit);
  checks.add_leq("closed-form-vs-rk4", sup_dev, 1e-8);
  checks.add_leq("trace-recursion", sup_trace_gap, 1e-9);
  checks.add_leq("closed-limit-deviation",
                 frobenius_norm(full_rank_solution(w0, u0, horizon) - limit), 1e-8);
  checks.add_leq("rk4-limit-deviation",
                 frobenius_norm(flow.states.back() - limit), 1e-8);
  const Matrix expected_limit = (trace_w0 / n) * Matrix::identity(w0.rows());
  checks.add_leq("limit-is-average-trace-identity",
                 frobenius_norm(limit - expected_limit), 1e-12);
  checks.add_leq("loss-at-horizon", value(obj, flow.states.back()), 1e-16);
}

inline void approx_error(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                         nlohmann::ordered_json& metrics,
                         detail::CheckList& checks) {
  ErrorStatsConfig stats;
  stats.n = cfg.n;
  stats.r = cfg.r;
  stats.trials = cfg.trials;
  stats.sigma = cfg.sigma;
  stats.seed = cfg.seed;
  stats.validate();
  if (stats.r > stats.n) throw ConfigError("approx-error requires r <= n");

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    RngState rng(derive_seed(cfg.seed, trial));
    const Matrix x0 = gaussian_matrix(rng, cfg.r, cfg.n, cfg.sigma);
    const double e = relative_error_exact(x0, cfg.n);
    csv.row({std::to_string(trial), detail::fmt_double(e), detail::fmt_double(e * e)});
  }

  const RelErrorEstimates est = mc_rel_error_estimates(stats);
  const double formula = expected_sq_rel_error(cfg.n, cfg.r);
  metrics["mc_mean_sq"] = est.squared.mean;
  metrics["mc_se_sq"] = est.squared.std_error;
  metrics["formula"] = formula;
  metrics["mc_mean"] = est.unsquared.mean;
  metrics["mc_se"] = est.unsquared.std_error;
  metrics["jensen_bound"] = jensen_bound(cfg.n, cfg.r);

  checks.add_mc("sq-rel-error-matches-formula", est.squared, formula,
                [&](std::size_t more) {
                  ErrorStatsConfig big = stats;
                  big.trials = more;
                  return mc_expected_sq_rel_error(big);
                });
  checks.add("jensen-bound-holds",
             jensen_bound(cfg.n, cfg.r) >=
                 est.unsquared.mean - 3.0 * est.unsquared.std_error,
             {{"bound", jensen_bound(cfg.n, cfg.r)},
              {"mc_mean", est.unsquared.mean},
              {"mc_se", est.unsquared.std_error}});
}

inline void moments(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                    nlohmann::ordered_json& metrics, detail::CheckList& checks) {
  const std::size_t dim = cfg.n * cfg.r;
  const std::uint64_t sphere_seed = derive_seed(cfg.seed, detail::kSphereStream);
  const std::uint64_t chi_seed = derive_seed(cfg.seed, detail::kChiStream);
  const SphereMoments sphere = sphere_moments(dim, cfg.trials, sphere_seed);
  const ChiSqMoments chi = chi_sq_moments(dim, cfg.trials, chi_seed);
  const double d = static_cast<double>(dim);

  struct Row {
    std::string name;
    McEstimate est;
    double expected;
    std::function<McEstimate(std::size_t)> rerun;
  };
  std::vector<Row> rows = {
      {"sphere-E[z1^2]", sphere.second, 1.0 / d,
       [&](std::size_t t) { return sphere_moments(dim, t, sphere_seed).second; }},
      {"sphere-E[z1^4]", sphere.fourth, 3.0 / (d * (d + 2.0)),
       [&](std::size_t t) { return sphere_moments(dim, t, sphere_seed).fourth; }},
      {"sphere-E[z1^2 z2^2]", sphere.cross_squares, 1.0 / (d * (d + 2.0)),
       [&](std::size_t t) {
         return sphere_moments(dim, t, sphere_seed).cross_squares;
       }},
  };
  if (sphere.distinct_product.has_value()) {
    rows.push_back({"sphere-E[z1 z2 z3 z4]", *sphere.distinct_product, 0.0,
                    [&](std::size_t t) {
                      return *sphere_moments(dim, t, sphere_seed).distinct_product;
                    }});
  } else {
    metrics["distinct_product_omitted"] = true;
  }
  rows.push_back({"chisq-E[rho^2]", chi.second, d, [&](std::size_t t) {
                    return chi_sq_moments(dim, t, chi_seed).second;
                  }});
  rows.push_back({"chisq-E[rho^4]", chi.fourth, d * (d + 2.0),
                  [&](std::size_t t) { return chi_sq_moments(dim, t, chi_seed).fourth; }});

  metrics["dim"] = dim;
  for (const Row& row : rows) {
    checks.add_mc(row.name, row.est, row.expected, row.rerun);
    const auto& recorded = checks.items.back();
    csv.row({row.name, detail::fmt_double(recorded["mean"].get<double>()),
             detail::fmt_double(recorded["std_error"].get<double>()),
             detail::fmt_double(row.expected),
             recorded["pass"].get<bool>() ? "1" : "0",
             recorded["retried"].get<bool>() ? "1" : "0"});
  }
}

inline void lowrank_eym(const ExperimentConfig& cfg, detail::CsvWriter& csv,
                        nlohmann::ordered_json& metrics, detail::CheckList& checks) {
  const Matrix w0 = detail::make_w0(cfg);
  const std::uint64_t seed = derive_seed(cfg.seed, detail::kSpectralStream);
  const FlowConfig flow_cfg{cfg.flow_step, cfg.flow_horizon, cfg.flow_stride};
  const FlowVsEymReport report = flow_vs_eym(w0, cfg.r, cfg.sigma, seed, flow_cfg);

  const SpectralInit init = spectral_initialize(w0, cfg.r, cfg.sigma, seed);
  double max_scalar_gap = 0.0;
  for (std::size_t i = 0; i < cfg.r; ++i) {
    const ScalarDyn dyn(init.svd.sigma[i], init.x_tilde_diag[i]);
    // Scalar channel cross-check: the 1x1 matrix flow is the channel ODE.
    const Objective channel(ObjectiveKind::FrobeniusLowRank,
                            Matrix(1, 1, {init.svd.sigma[i]}));
    const ThetaPoint channel0(Matrix::zero(1, 1),
                              Matrix(1, 1, {init.x_tilde_diag[i]}));
    const FlowConfig scalar_cfg{1e-4, 3.0, 100};
    const ThetaTrajectory channel_flow =
        integrate_lora_flow(channel, channel0, scalar_cfg);
    double gap = 0.0;
    for (std::size_t s = 0; s < channel_flow.times.size(); ++s) {
      const double yx = channel_flow.states[s].b(0, 0) * channel_flow.states[s].a(0, 0);
      gap = std::max(gap,
                     std::abs(yx - scalar_product_of_t(dyn, channel_flow.times[s])));
    }
    max_scalar_gap = std::max(max_scalar_gap, gap);
    const double product = scalar_product_of_t(dyn, report.t_star);
    csv.row({std::to_string(i), detail::fmt_double(init.svd.sigma[i]),
             detail::fmt_double(init.x_tilde_diag[i]), detail::fmt_double(product),
             detail::fmt_double(std::abs(product - init.svd.sigma[i]))});
  }

  metrics["t_star"] = report.t_star;
  metrics["eym_loss"] = report.eym_loss;
  metrics["ode_loss"] = report.ode_loss;
  metrics["closed_loss"] = report.closed_loss;
  metrics["spectral_gap_separated"] = report.spectral_gap_separated;
  metrics["ode_product_dev"] = report.ode_product_dev;
  metrics["closed_product_dev"] = report.closed_product_dev;

  checks.add_leq("ode-product-matches-truncation", report.ode_product_dev, 1e-5);
  checks.add_leq("ode-loss-matches-eym",
                 std::abs(report.ode_loss - report.eym_loss), 1e-8);
  checks.add_leq("closed-product-matches-truncation", report.closed_product_dev,
                 1e-8);
  checks.add_leq("scalar-closed-form-vs-rk4", max_scalar_gap, 1e-6);
}

}  // namespace experiments

/// Executes one experiment: writes <out>/<experiment>.csv and
/// <out>/summary.json, returns the summary and the overall pass flag.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);

  static const std::vector<std::pair<std::string, std::vector<std::string>>>
      csv_headers = {
          {"gd-convergence", {"alpha", "lambda", "sup_deviation", "ratio_to_previous_alpha"}},
          {"trace-flow", {"t", "a", "loss", "dev_from_limit"}},
          {"fullrank-flow", {"t", "trace_u", "dev_from_closed", "dev_from_limit"}},
          {"approx-error", {"trial", "rel_error", "sq_rel_error"}},
          {"moments", {"moment", "estimate", "std_error", "expected", "pass", "retried"}},
          {"lowrank-eym", {"channel", "s0", "x0", "product_at_t_star", "gap_to_s0"}},
      };
  const auto header_it =
      std::find_if(csv_headers.begin(), csv_headers.end(),
                   [&](const auto& h) { return h.first == cfg.experiment; });
  if (header_it == csv_headers.end()) {
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
  }

  detail::CsvWriter csv(fs::path(cfg.out_dir) / (cfg.experiment + ".csv"),
                        header_it->second);
  nlohmann::ordered_json metrics;
  detail::CheckList checks;

  if (cfg.experiment == "gd-convergence") {
    experiments::gd_convergence(cfg, csv, metrics, checks);
  } else if (cfg.experiment == "trace-flow") {
    experiments::trace_flow(cfg, csv, metrics, checks);
  } else if (cfg.experiment == "fullrank-flow") {
    experiments::fullrank_flow(cfg, csv, metrics, checks);
  } else if (cfg.experiment == "approx-error") {
    experiments::approx_error(cfg, csv, metrics, checks);
  } else if (cfg.experiment == "moments") {
    experiments::moments(cfg, csv, metrics, checks);
  } else {
    experiments::lowrank_eym(cfg, csv, metrics, checks);
  }

  const auto elapsed = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();

  RunResult result;
  result.summary["experiment"] = cfg.experiment;
  result.summary["config"] = detail::config_echo(cfg);
  result.summary["metrics"] = metrics;
  result.summary["checks"] = checks.items;
  result.summary["pass"] = checks.all_pass;
  result.summary["wall_time_ms"] = elapsed;
  result.pass = checks.all_pass;

  std::ofstream summary_out(fs::path(cfg.out_dir) / "summary.json",
                            std::ios::binary);
  summary_out << result.summary.dump(2) << "\n";
  return result;
}

}  // namespace loraflow
