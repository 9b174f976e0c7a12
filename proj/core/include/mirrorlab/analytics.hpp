#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mirrorlab/lattice.hpp"
#include "mirrorlab/walks.hpp"

namespace mirrorlab {

struct EstimateWithCI {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t n = 0;

  /// |value - target| <= k * std_error
  bool within(double target, double k) const;
};

/// Streaming mean and variance (Chan et al. merge). The delete-one jackknife
/// standard error of a sample mean equals s / sqrt(n), which is what
/// std_error() returns.
class Moments {
 public:
  void add(double x);
  void merge(const Moments& other);

  std::int64_t n() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;  // unbiased, 0 for n < 2
  double std_error() const;
  EstimateWithCI estimate() const { return {mean_, std_error(), n_}; }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// rho = 1 - p (2d - 2) / (2d - 1): one-step velocity correlation of the
/// driving walk.
double driving_rho(int dim, double p);

/// Per-coordinate second moment of the driving walk at time t,
/// [(1+rho)/(1-rho) t - 2 rho (1 - rho^t)/(1-rho)^2] / d. Returns t^2/d at p = 0.
double driving_variance_closed_form(int dim, double p, std::int64_t t);

/// (2d - 1)/(d - 1).
double diffusion_target(int dim);

/// 2p E(1 + N)^2 with N ~ Bin(T, p): 2p (1 + 3pT - p^2 T + p^2 T^2).
double markov_coupling_reference(double p, std::int64_t horizon);

/// V . W for unit lattice directions.
int velocity_dot(Direction a, Direction b);

struct MsdSeries {
  int dim = 0;
  std::vector<std::int64_t> times;
  std::vector<Moments> msd;                       // ||X(t)||_2^2
  std::vector<std::vector<Moments>> coord_mean;   // [time][axis] X_j(t)
  std::vector<std::vector<Moments>> coord_second; // [time][axis] X_j(t)^2
  std::int64_t trials = 0;
};

/// Sample moments over runs that share their sample times. Throws
/// UsageError with fewer than 2 runs or mismatched sample times.
MsdSeries msd_estimate(std::span<const TrajectorySummary> runs, int dim);

/// Velocity series V(0), V(1), ... of one trajectory.
using VelocitySeries = std::vector<Direction>;

/// E[V(0) . V(k)] for k = 0 .. max_lag, one product per series and lag.
std::vector<EstimateWithCI> velocity_autocorrelation(std::span<const VelocitySeries> series,
                                                     std::int64_t max_lag);

/// Shared knobs of the Monte Carlo estimators. Trial i uses the stream keyed
/// by derive_trial_seed(master_seed, i).
struct MonteCarlo {
  std::int64_t trials = 1;
  std::uint64_t master_seed = 0;
  int threads = 1;
};

/// Driving walks from e1, composed with a uniform signed axis permutation,
/// sampled at `times`.
MsdSeries driving_msd(int dim, double p, std::span<const std::int64_t> times,
                      const MonteCarlo& mc, std::vector<TrajectorySummary>* runs_out = nullptr);

/// Driving-walk autocorrelation estimates for lags 0 .. max_lag.
std::vector<EstimateWithCI> driving_autocorrelation(int dim, double p, std::int64_t max_lag,
                                                    const MonteCarlo& mc);

struct DiffusionEstimate {
  EstimateWithCI estimate;       // (p/T) E||X(T)||^2, regenerated walk
  double target = 0.0;
  EstimateWithCI unregenerated;  // same, over trials with tau_clo > T
  std::int64_t closed_trials = 0;
  MsdSeries series;
};

/// Regenerated coupled walk from e1, sampled at powers of two and T.
DiffusionEstimate diffusion_constant_estimate(int dim, double p, std::int64_t horizon,
                                              const MonteCarlo& mc,
                                              std::vector<TrajectorySummary>* runs_out = nullptr);

/// Endpoint moments of X*(T): the regenerated walk from e1 composed with a
/// uniform signed axis permutation.
MsdSeries isotropic_endpoint(int dim, double p, std::int64_t horizon, const MonteCarlo& mc);

struct CouplingEstimate {
  EstimateWithCI agreement;     // P(X(t) = X~(t) for all t <= T)
  EstimateWithCI disagreement;
  double markov_reference = 0.0;
};

/// `agree_out`, if given, receives the per-trial agreement flags.
CouplingEstimate coupling_agreement(int dim, double p, std::int64_t horizon,
                                    const MonteCarlo& mc,
                                    std::vector<std::uint8_t>* agree_out = nullptr);

struct RecouplingEstimate {
  EstimateWithCI rate;  // P(V(t) = V~(t) | fresh, V(t-1) != V~(t-1), t in T)
  double reference = 0.0;  // (2d - 2)/(2d - 1)
};

RecouplingEstimate recoupling_rate(int dim, double p, std::int64_t horizon, const MonteCarlo& mc);

struct ClosingEstimate {
  EstimateWithCI closed;  // P(tau_clo <= horizon), non-regenerated quenched walk
  double reference = 0.0; // p^(1/3)
};

ClosingEstimate closing_probability(int dim, double p, std::int64_t horizon, const MonteCarlo& mc);

struct H1Row {
  std::int64_t t = 0;
  Site center;
  std::int64_t hits = 0;
  std::int64_t n = 0;
  double empirical = 0.0;  // P(||X(t) - z||_inf <= 1/p)
  double bound = 0.0;      // (pt)^(-d/2) p^(-eps) e^((ln t)^(1/3))
  bool vacuous = false;    // bound >= 1
  double tail = 1.0;       // P(Bin(n, bound) >= hits)
  bool flagged = false;    // tail below the Bonferroni level
};

struct H2Row {
  std::int64_t s = 0;
  std::int64_t t = 0;
  double threshold = 0.0;  // ln^8(1/p) sqrt((t - s)/p)
  std::int64_t hits = 0;   // trials with ||X(t) - X(s)||_2 >= threshold
  std::int64_t n = 0;
  double empirical = 0.0;
  double bound = 0.0;      // exp(-2 ln^2 p)
  bool vacuous = false;    // threshold > t - s
  double tail = 1.0;
  bool flagged = false;
};

struct AuditTable {
  std::vector<H1Row> h1;
  std::vector<H2Row> h2;
  double alpha = 0.05;
  std::int64_t tests = 0;  // Bonferroni multiplicity
  std::int64_t flagged = 0;
};

/// H1 per (sample time, occupied grid cell of side 2 ceil(1/p)) and H2 per
/// pair of sample times, each with an exact binomial tail test at level
/// alpha / tests.
AuditTable h1_h2_audit(std::span<const TrajectorySummary> runs, int dim, double p,
                       double alpha = 0.05);

struct BallProbabilityRow {
  std::int64_t r = 0;
  double sup_probability = 0.0;  // max over centres z in rZ^d of P(||S - z||_inf <= r)
  double reference = 0.0;        // r^d n^(-d/2)
  double ratio = 0.0;
};

/// Empirical sup-ball probabilities of the endpoint samples. Centres range
/// over the grid r Z^d (Z^d for r = 1). Throws UsageError on an empty sample
/// or r < 1.
std::vector<BallProbabilityRow> ball_probability_profile(std::span<const Site> endpoints,
                                                         int dim, std::int64_t n,
                                                         std::span<const std::int64_t> radii);

/// Endpoints of n-fold sums of independent driving-walk segments of
/// `segment` steps, each rotated by its own uniform signed axis permutation.
std::vector<Site> segment_sum_endpoints(int dim, double p, std::int64_t segment, std::int64_t n,
                                        const MonteCarlo& mc);

}  // namespace mirrorlab
