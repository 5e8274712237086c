#pragma once

// Gaussian-process Bayesian optimization of task sampling ratios on the
// probability simplex: squared-exponential kernel, grid-selected
// hyperparameters, expected-improvement acquisition over Dirichlet draws.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "medrl/common.hpp"

namespace medrl::bo {

using Ratio = std::vector<double>;

struct Observation {
  Ratio x;
  double y = 0.0;
};

struct KernelHyper {
  double signal_var = 1.0;    // sigma_f^2
  double length_scale = 0.3;  // l
  double noise_var = 1e-6;    // sigma_n^2
};

// sigma_f^2 * exp(-|x - x'|^2 / (2 l^2)). Throws on dimension mismatch.
double kernel(std::span<const double> x, std::span<const double> x2, const KernelHyper& h);

struct HyperGrid {
  std::vector<double> length_scales;
  std::vector<double> signal_vars;
  std::vector<double> noise_vars;

  // l in [0.05, 2] (8 pts), sigma_f^2 in [0.1, 10] (5), sigma_n^2 in [1e-6, 1e-2] (5),
  // all log-spaced.
  static HyperGrid standard();
  static HyperGrid fixed(const KernelHyper& h);
  std::vector<KernelHyper> points() const;
};

std::vector<double> log_space(double lo, double hi, std::size_t n);

struct GprModel {
  KernelHyper hyper;
  Eigen::MatrixXd X;  // n x d
  Eigen::VectorXd y;
  double prior_mean = 0.0;  // mean of observed y
  double jitter = 0.0;      // diagonal added on top of noise_var
  Eigen::MatrixXd L;        // lower Cholesky factor of K + (noise + jitter) I
  Eigen::VectorXd alpha;    // (K + s I)^-1 (y - prior_mean)
  double log_marginal_likelihood = 0.0;
};

// Factorizes with the given hyperparameters. Jitter escalates from 0 through
// 1e-10 ... 1e-4; throws std::runtime_error if still not positive definite.
GprModel gpr_condition(std::span<const Observation> obs, const KernelHyper& h);

// Grid search over log marginal likelihood; ties keep the first grid point.
GprModel gpr_fit(std::span<const Observation> obs, const HyperGrid& grid = HyperGrid::standard());

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Latent posterior; variance clipped at 0 and snapped to 0 below
// 1e-12 * sigma_f^2.
Prediction gpr_predict(const GprModel& model, std::span<const double> x);

// Maximization form. Returns max(mu - best, 0) when sigma == 0.
double expected_improvement(double mean, double sigma, double best_y);
double expected_improvement(const GprModel& model, std::span<const double> x, double best_y);

bool on_simplex(std::span<const double> r, double tol = 1e-9);
// Uniform point on the (T-1)-simplex via normalized exponentials.
Ratio dirichlet_point(Rng& rng, std::size_t tasks);

struct Proposal {
  Ratio x;
  double ei = 0.0;
  std::vector<Ratio> candidates;
  std::vector<double> candidate_ei;
};

// Scores n Dirichlet(1,...,1) draws by EI and returns the argmax (first on ties).
Proposal propose_next(const GprModel& model, double best_y, std::size_t n_candidates,
                      std::uint64_t seed, int parallelism = 1);

struct BoConfig {
  std::size_t tasks = 4;
  std::size_t budget = 40;
  std::size_t init_n = 8;
  std::size_t n_candidates = 2000;
  std::uint64_t seed = 0;
  HyperGrid grid = HyperGrid::standard();
  int parallelism = 1;
};

struct TraceRow {
  std::size_t iteration = 0;  // 1-based evaluation index
  Ratio x;
  double y = 0.0;             // NaN when the objective failed
  double best_so_far = 0.0;   // NaN until the first success
  bool failed = false;
  std::string error;
};

struct BoResult {
  Observation best;
  std::vector<TraceRow> trace;
  std::size_t failures = 0;
};

using Objective = std::function<double(const Ratio&)>;

// init_n Dirichlet evaluations, then fit/propose/evaluate until `budget`
// evaluations are spent. A throwing or non-finite objective consumes budget
// and is recorded as failed.
BoResult optimize(const Objective& objective, const BoConfig& config);

// iteration,r_1..r_T,y,best_so_far
std::string trace_csv(const BoResult& result);

// Dot product; weights must lie on the simplex and match the score length.
double weighted_overall_score(std::span<const double> scores, std::span<const double> weights);

}  // namespace medrl::bo
