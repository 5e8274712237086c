#include "medrl/ratio_optimizer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace medrl::bo {

double kernel(std::span<const double> x, std::span<const double> x2, const KernelHyper& h) {
  if (x.size() != x2.size()) throw std::invalid_argument("kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - x2[i]) * (x[i] - x2[i]);
  return h.signal_var * std::exp(-d2 / (2.0 * h.length_scale * h.length_scale));
}

std::vector<double> log_space(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> v(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(a + (b - a) * static_cast<double>(i) / (n - 1));
  v.front() = lo;
  v.back() = hi;
  return v;
}

HyperGrid HyperGrid::standard() {
  return {log_space(0.05, 2.0, 8), log_space(0.1, 10.0, 5), log_space(1e-6, 1e-2, 5)};
}

HyperGrid HyperGrid::fixed(const KernelHyper& h) {
  return {{h.length_scale}, {h.signal_var}, {h.noise_var}};
}

std::vector<KernelHyper> HyperGrid::points() const {
  std::vector<KernelHyper> out;
  for (double l : length_scales)
    for (double s : signal_vars)
      for (double n : noise_vars) out.push_back({s, l, n});
  return out;
}

namespace {

constexpr double kMaxJitter = 1e-4;

void check_obs(std::span<const Observation> obs) {
  if (obs.size() < 2) throw std::invalid_argument("gpr_fit: need at least 2 observations");
  const std::size_t d = obs.front().x.size();
  for (const auto& o : obs) {
    if (o.x.size() != d) throw std::invalid_argument("gpr_fit: inconsistent input dimension");
    if (!std::isfinite(o.y)) throw std::invalid_argument("gpr_fit: non-finite observation");
  }
}

}  // namespace

GprModel gpr_condition(std::span<const Observation> obs, const KernelHyper& h) {
  check_obs(obs);
  if (!(h.signal_var > 0.0 && h.length_scale > 0.0 && h.noise_var >= 0.0)) {
    throw std::invalid_argument("gpr: invalid hyperparameters");
  }
  const auto n = static_cast<Eigen::Index>(obs.size());
  const auto d = static_cast<Eigen::Index>(obs.front().x.size());
  GprModel m;
  m.hyper = h;
  m.X.resize(n, d);
  m.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m.X(i, j) = obs[i].x[j];
    m.y(i) = obs[i].y;
  }
  m.prior_mean = m.y.mean();

  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel(obs[i].x, obs[j].x, h);

  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += h.noise_var + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      const Eigen::MatrixXd L = llt.matrixL();
      ok = (L.diagonal().array() > 0.0).all() && L.allFinite();
      if (ok) {
        m.L = L;
        m.jitter = jitter;
        break;
      }
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > kMaxJitter * (1.0 + 1e-9)) {
      throw std::runtime_error("gpr: covariance not positive definite after jitter 1e-4");
    }
  }
  const Eigen::VectorXd yc = m.y.array() - m.prior_mean;
  const Eigen::VectorXd z = m.L.triangularView<Eigen::Lower>().solve(yc);
  m.alpha = m.L.transpose().triangularView<Eigen::Upper>().solve(z);
  m.log_marginal_likelihood = -0.5 * yc.dot(m.alpha) - m.L.diagonal().array().log().sum() -
                              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return m;
}

GprModel gpr_fit(std::span<const Observation> obs, const HyperGrid& grid) {
  check_obs(obs);
  const auto pts = grid.points();
  if (pts.empty()) throw std::invalid_argument("gpr_fit: empty hyperparameter grid");
  std::optional<GprModel> best;
  std::string last_error;
  for (const auto& h : pts) {
    try {
      GprModel m = gpr_condition(obs, h);
      if (!best || m.log_marginal_likelihood > best->log_marginal_likelihood) best = std::move(m);
    } catch (const std::runtime_error& e) {
      last_error = e.what();
    }
  }
  if (!best) throw std::runtime_error("gpr_fit: no grid point factorized: " + last_error);
  return *best;
}

Prediction gpr_predict(const GprModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.X.cols()) {
    throw std::invalid_argument("gpr_predict: dimension mismatch");
  }
  const Eigen::Index n = model.X.rows();
  Eigen::VectorXd ks(n);
  std::vector<double> row(x.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < model.X.cols(); ++j) row[j] = model.X(i, j);
    ks(i) = kernel(row, x, model.hyper);
  }
  Prediction p;
  p.mean = model.prior_mean + ks.dot(model.alpha);
  const Eigen::VectorXd v = model.L.triangularView<Eigen::Lower>().solve(ks);
  const double var = model.hyper.signal_var - v.squaredNorm();
  p.variance = var < 1e-12 * model.hyper.signal_var ? 0.0 : var;
  return p;
}

double expected_improvement(double mean, double sigma, double best_y) {
  const double diff = mean - best_y;
  if (!(sigma > 0.0)) return std::max(diff, 0.0);
  const double z = diff / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(diff * cdf + sigma * pdf, 0.0);
}

double expected_improvement(const GprModel& model, std::span<const double> x, double best_y) {
  const auto p = gpr_predict(model, x);
  return expected_improvement(p.mean, std::sqrt(p.variance), best_y);
}

bool on_simplex(std::span<const double> r, double tol) {
  if (r.empty()) return false;
  double s = 0.0;
  for (double v : r) {
    if (!(v >= -tol)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

Ratio dirichlet_point(Rng& rng, std::size_t tasks) {
  if (tasks == 0) throw std::invalid_argument("dirichlet_point: need at least one task");
  Ratio r(tasks);
  double s = 0.0;
  for (double& v : r) {
    v = rng.exponential();
    s += v;
  }
  for (double& v : r) v /= s;
  return r;
}

Proposal propose_next(const GprModel& model, double best_y, std::size_t n_candidates,
                      std::uint64_t seed, int parallelism) {
  if (n_candidates == 0) throw std::invalid_argument("propose_next: need at least one candidate");
  const auto tasks = static_cast<std::size_t>(model.X.cols());
  Proposal p;
  Rng rng(seed);
  p.candidates.reserve(n_candidates);
  for (std::size_t i = 0; i < n_candidates; ++i) p.candidates.push_back(dirichlet_point(rng, tasks));
  p.candidate_ei.resize(n_candidates);
  parallel_for(n_candidates, parallelism, [&](std::size_t i) {
    p.candidate_ei[i] = expected_improvement(model, p.candidates[i], best_y);
  });
  std::size_t arg = 0;
  for (std::size_t i = 1; i < n_candidates; ++i) {
    if (p.candidate_ei[i] > p.candidate_ei[arg]) arg = i;
  }
  p.x = p.candidates[arg];
  p.ei = p.candidate_ei[arg];
  return p;
}

BoResult optimize(const Objective& objective, const BoConfig& config) {
  if (config.init_n < 2 || config.budget < config.init_n) {
    throw std::invalid_argument("optimize: need budget >= init_n >= 2");
  }
  if (config.tasks < 1) throw std::invalid_argument("optimize: need at least one task");
  BoResult res;
  std::vector<Observation> obs;
  double best = std::numeric_limits<double>::quiet_NaN();
  Rng init_rng(derive_seed(config.seed, std::string_view("init")));

  for (std::size_t it = 1; it <= config.budget; ++it) {
    Ratio x;
    if (it <= config.init_n || obs.size() < 2) {
      x = dirichlet_point(init_rng, config.tasks);
    } else {
      const GprModel model = gpr_fit(obs, config.grid);
      x = propose_next(model, best, config.n_candidates, derive_seed(config.seed, it),
                       config.parallelism)
              .x;
    }
    TraceRow row;
    row.iteration = it;
    row.x = x;
    try {
      const double y = objective(x);
      if (!std::isfinite(y)) throw std::runtime_error("objective returned a non-finite value");
      row.y = y;
      obs.push_back({x, y});
      if (std::isnan(best) || y > best) {
        best = y;
        res.best = {x, y};
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      row.y = std::numeric_limits<double>::quiet_NaN();
      ++res.failures;
    }
    row.best_so_far = best;
    res.trace.push_back(std::move(row));
  }
  if (obs.empty()) throw std::runtime_error("optimize: every objective evaluation failed");
  return res;
}

std::string trace_csv(const BoResult& result) {
  std::ostringstream out;
  const std::size_t t = result.trace.empty() ? 0 : result.trace.front().x.size();
  out << "iteration";
  for (std::size_t i = 1; i <= t; ++i) out << ",r_" << i;
  out << ",y,best_so_far\n";
  for (const auto& row : result.trace) {
    out << row.iteration;
    for (double v : row.x) out << ',' << fmt_double(v, 9);
    out << ',' << fmt_double(row.y, 9) << ',' << fmt_double(row.best_so_far, 9) << '\n';
  }
  return out.str();
}

double weighted_overall_score(std::span<const double> scores, std::span<const double> weights) {
  if (scores.size() != weights.size()) {
    throw std::invalid_argument("weighted_overall_score: length mismatch");
  }
  if (!on_simplex(weights)) throw std::invalid_argument("weighted_overall_score: weights off simplex");
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) s += scores[i] * weights[i];
  return s;
}

}  // namespace medrl::bo
