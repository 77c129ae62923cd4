#include "distillkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace dk {

std::string to_string(TimingMode mode) { return mode == TimingMode::Forward ? "forward" : "beam"; }

TimingMode parse_timing_mode(const std::string& text) {
  if (text == "forward") return TimingMode::Forward;
  if (text == "beam") return TimingMode::Beam;
  throw std::invalid_argument("unknown timing mode '" + text + "'");
}

void ConfigRanges::validate() const {
  auto check = [](const std::vector<int>& v, const char* name, int lo) {
    if (v.empty()) throw std::invalid_argument(std::string("empty range for ") + name);
    for (int x : v) {
      if (x < lo) throw std::invalid_argument(std::string("invalid value in range for ") + name);
    }
  };
  check(enc_layers, "enc_layers", 0);
  check(dec_layers, "dec_layers", 1);
  check(d_model, "d_model", 1);
  check(ffn_dim, "ffn_dim", 1);
  for (int d : d_model) {
    if (n_heads < 1 || d % n_heads != 0) throw std::invalid_argument("every d_model must be divisible by n_heads");
  }
}

std::vector<ModelConfig> sample_configs(const ConfigRanges& ranges, int count, std::uint64_t seed) {
  ranges.validate();
  if (count < 1) throw std::invalid_argument("sample_configs: count must be at least 1");
  std::mt19937_64 rng(seed);
  auto pick = [&rng](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<ModelConfig> out;
  for (int i = 0; i < count; ++i) {
    ModelConfig c;
    c.vocab_size = ranges.vocab_size;
    c.n_heads = ranges.n_heads;
    c.max_positions = ranges.max_positions;
    c.enc_layers = pick(ranges.enc_layers);
    c.dec_layers = pick(ranges.dec_layers);
    c.d_model = pick(ranges.d_model);
    c.ffn_dim = pick(ranges.ffn_dim);
    c.validate();
    out.push_back(c);
  }
  return out;
}

std::size_t estimated_memory_bytes(const ModelConfig& c, const TimingOptions& o) {
  const auto params = static_cast<std::size_t>(count_params(c));
  const std::size_t len = static_cast<std::size_t>(std::max(o.source_len, o.target_len + 1));
  const std::size_t width = static_cast<std::size_t>(std::max(c.d_model, c.ffn_dim));
  const std::size_t layers = static_cast<std::size_t>(c.enc_layers + c.dec_layers + 1);
  // ~16 live activations of len x width per layer, attention maps, logits
  const std::size_t per_run = layers * (16 * len * width + static_cast<std::size_t>(c.n_heads) * len * len) +
                              len * static_cast<std::size_t>(c.vocab_size);
  return 4 * (params + per_run * static_cast<std::size_t>(std::max(o.beam_size, 1)));
}

TimingRecord time_model(const ModelConfig& config, TimingMode mode, const TimingOptions& o) {
  config.validate();
  if (o.reps < 3) throw std::invalid_argument("time_model: reps must be at least 3");
  if (o.warmups < 0 || o.batch < 1 || o.source_len < 1 || o.target_len < 1 || o.beam_size < 1) {
    throw std::invalid_argument("time_model: invalid options");
  }
  if (o.source_len > config.max_positions || o.target_len + 1 > config.max_positions) {
    throw std::invalid_argument("time_model: input lengths exceed max_positions");
  }
  const std::size_t need = estimated_memory_bytes(config, o);
  if (need > o.memory_budget_bytes) {
    throw ResourceError("time_model: configuration needs ~" + std::to_string(need) + " bytes, budget is " +
                        std::to_string(o.memory_budget_bytes));
  }

  const Seq2SeqModel<float> model = make_model<float>(config, o.seed);
  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> token(kReservedTokens, config.vocab_size - 1);
  std::vector<std::vector<int>> sources, labels;
  for (int b = 0; b < o.batch; ++b) {
    std::vector<int> s(static_cast<std::size_t>(o.source_len)), t(static_cast<std::size_t>(o.target_len));
    for (auto& x : s) x = token(rng);
    for (auto& x : t) x = token(rng);
    sources.push_back(std::move(s));
    labels.push_back(with_eos(std::move(t)));
  }
  BeamParams beam;
  beam.beam_size = o.beam_size;
  beam.max_len = o.target_len;
  beam.min_len = o.target_len;

  volatile float sink = 0.0f;
  auto run_once = [&] {
    for (int b = 0; b < o.batch; ++b) {
      const auto i = static_cast<std::size_t>(b);
      if (mode == TimingMode::Forward) {
        Graph<float> g(false);
        sink = sink + forward_teacher_forced(g, model, sources[i], labels[i]).logits.value()(0, 0);
      } else {
        sink = sink + static_cast<float>(beam_search(model, sources[i], beam).size());
      }
    }
  };
  for (int w = 0; w < o.warmups; ++w) run_once();
  std::vector<double> ms;
  for (int r = 0; r < o.reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  const double median = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return {config.enc_layers, config.dec_layers, config.d_model, config.ffn_dim, mode, o.batch,
          std::max(median, 1e-6)};
}

double RegressionFit::coefficient(const std::string& name) const {
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    if (predictors[i] == name) return coefficients[i];
  }
  throw std::out_of_range("no predictor named " + name);
}

std::string RegressionFit::to_text() const {
  std::string out;
  char buf[128];
  out += std::string("response=") + (log_time ? "log_median_ms" : "median_ms") + '\n';
  out += "n=" + std::to_string(n) + '\n';
  std::snprintf(buf, sizeof buf, "intercept=%.10g\n", intercept);
  out += buf;
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s=%.10g\n", predictors[i].c_str(), coefficients[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "r_squared=%.10g\n", r_squared);
  out += buf;
  return out;
}

RegressionFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (static_cast<Eigen::Index>(names.size()) != p) throw std::invalid_argument("fit_ols: one name per column");
  if (y.size() != n) throw std::invalid_argument("fit_ols: response length mismatch");
  if (n < p + 2) throw std::invalid_argument("fit_ols: need at least predictors + 2 records");
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("fit_ols: non-finite input");

  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  // scale columns so the rank test is unit-free
  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (Eigen::Index j = 0; j <= p; ++j) {
    if (scale(j) == 0.0) scale(j) = 1.0;
  }
  const Eigen::MatrixXd As = A * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(As);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(As);
    lu.setThreshold(1e-10);
    const Eigen::MatrixXd kernel = lu.kernel();
    std::string cols;
    for (Eigen::Index j = 0; j <= p; ++j) {
      if (kernel.row(j).cwiseAbs().maxCoeff() > 1e-8) {
        if (!cols.empty()) cols += ", ";
        cols += j == 0 ? "intercept" : names[static_cast<std::size_t>(j - 1)];
      }
    }
    throw std::invalid_argument("fit_ols: design matrix is rank deficient; collinear columns: " + cols);
  }
  const Eigen::VectorXd beta = scale.cwiseInverse().asDiagonal() * qr.solve(y);

  RegressionFit fit;
  fit.predictors = names;
  fit.intercept = beta(0);
  for (Eigen::Index j = 1; j <= p; ++j) fit.coefficients.push_back(beta(j));
  fit.n = static_cast<std::size_t>(n);
  const Eigen::VectorXd resid = y - A * beta;
  const double ss_tot = (y.array() - y.mean()).square().sum();
  const double ss_res = resid.squaredNorm();
  fit.r_squared = ss_tot > 0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return fit;
}

RegressionFit fit_ols(std::span<const TimingRecord> records, bool log_time, const std::vector<std::string>& predictors) {
  auto column = [](const TimingRecord& r, const std::string& name) -> double {
    if (name == "enc_layers") return r.enc_layers;
    if (name == "dec_layers") return r.dec_layers;
    if (name == "d_model") return r.d_model;
    if (name == "ffn_dim") return r.ffn_dim;
    throw std::invalid_argument("fit_ols: unknown predictor '" + name + "'");
  };
  const auto n = static_cast<Eigen::Index>(records.size());
  const auto p = static_cast<Eigen::Index>(predictors.size());
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = column(r, predictors[static_cast<std::size_t>(j)]);
    if (!(r.median_ms > 0)) throw std::invalid_argument("fit_ols: median_ms must be positive");
    y(i) = log_time ? std::log(r.median_ms) : r.median_ms;
  }
  RegressionFit fit = fit_ols(X, y, predictors);
  fit.log_time = log_time;
  return fit;
}

std::vector<SpeedupRow> speedup_report(const TimingRecord& baseline, std::span<const TimingRecord> others) {
  std::vector<SpeedupRow> out;
  for (const auto& r : others) {
    if (r.mode != baseline.mode || r.batch != baseline.batch) {
      throw std::invalid_argument("speedup_report: mode or batch differs from the baseline");
    }
    out.push_back({r, baseline.median_ms / r.median_ms});
  }
  return out;
}

std::string timing_csv(std::span<const TimingRecord> records) {
  std::string out = "enc_layers,dec_layers,d_model,ffn_dim,mode,batch,median_ms\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%s,%d,%.6f\n", r.enc_layers, r.dec_layers, r.d_model, r.ffn_dim,
                  to_string(r.mode).c_str(), r.batch, r.median_ms);
    out += buf;
  }
  return out;
}

}  // namespace dk
