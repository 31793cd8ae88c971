#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "actlab/activations.hpp"
#include "actlab/normalization.hpp"

namespace actlab::analysis {

enum class ClaimStatus { kPass, kFail, kUntestable };

/// How `measured` is compared against `reference`.
enum class Comparison {
  kApprox,   // |measured - reference| <= tolerance
  kAtMost,   // measured <= reference + tolerance
  kAtLeast,  // measured >= reference - tolerance
};

struct ClaimResult {
  std::string id;
  std::string description;
  double measured = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  Comparison comparison = Comparison::kApprox;
  ClaimStatus status = ClaimStatus::kFail;
};

ClaimResult make_claim(std::string id, std::string description, double measured, double reference, double tolerance,
                       Comparison comparison);
ClaimResult untestable_claim(std::string id, std::string description);

std::string_view status_name(ClaimStatus status);

/// Largest |gelu_tanh - gelu_exact| on [-10,10], measured once by an
/// independent high-precision evaluation and frozen here.
inline constexpr double kTanhApproxErrorBound = 4.733e-4;
/// Largest |gelu_derivative_tanh - gelu_derivative_exact| on the same grid.
inline constexpr double kTanhDerivativeErrorBound = 8.685e-4;
/// Term-wise derivative bound: 0.241 + 1.
inline constexpr double kLipschitzBound = 1.241;

struct Minimum {
  double x = 0.0;
  double value = 0.0;
};

/// Minimizer of gelu_tanh: bisection on the sign change of its derivative
/// over [-2, 0], to |dx| < 1e-12. Throws InternalError if the bracket does
/// not straddle a sign change.
Minimum find_minimum(const GeluConstants& constants = {});

std::vector<ClaimResult> limit_checks(const GeluConstants& constants = {});

struct GridMax {
  double value = 0.0;
  double at = 0.0;
};

/// max |gelu_derivative_exact| over lo, lo + step, ..., hi.
GridMax derivative_sup(double lo, double hi, double step);

/// max |x phi(x)|, the first term of the exact derivative.
GridMax first_term_sup(double lo, double hi, double step);

/// max |gelu_tanh - gelu_exact| and the same for their derivatives.
GridMax approximation_error(double lo, double hi, double step, const GeluConstants& constants = {});
GridMax derivative_approximation_error(double lo, double hi, double step, const GeluConstants& constants = {});

enum class GeluForm { kTanh, kExact };

/// Worst |f(x) - f(y)| / |x - y| over n random pairs in [-range, range]^2
/// (ratio 0 when x == y); passes iff it stays within `bound`.
ClaimResult lipschitz_check(std::size_t n_pairs, double range, double bound, std::uint64_t seed,
                            GeluForm form = GeluForm::kExact, const GeluConstants& constants = {});

/// phi(x) (2 - x^2), the closed-form second derivative of x Phi(x).
double second_derivative(double x);

/// Max deviation of second_derivative from central second differences of
/// gelu_exact with step h, over the grid.
GridMax second_derivative_fd_error(double lo, double hi, double step, double h);

/// Normalizes `batch` with `norm` (train mode), then checks
/// max GELU(z'') <= max |z''|.
ClaimResult composition_bound_check(NormLayer<double>& norm, const Tensor<double>& batch,
                                    const GeluConstants& constants = {});

struct GrowthTrace {
  std::vector<double> unnormalized;  // max |z'_j| per layer
  std::vector<double> normalized;    // max |z''_j| per layer
  std::vector<double> linear_bound;  // |W_j| |z_{j-1}| + |b_j| (infinity norms)
};

/// Composes `depth` width-16 linear layers whose weights are `scale` times a
/// random signed permutation, with and without layer normalization between
/// them, starting from an all-ones input.
GrowthTrace unnormalized_growth_demo(std::size_t depth, double scale, std::uint64_t seed = 0, double bias_scale = 0.0);

struct AnalysisOptions {
  double grid_lo = -10.0;
  double grid_hi = 10.0;
  double grid_step = 1e-4;
  std::size_t lipschitz_pairs = 1'000'000;
  std::size_t composition_batches = 100;
  std::uint64_t seed = 0;
  GeluConstants constants{};
};

/// The full claims suite, in a fixed order.
std::vector<ClaimResult> run_claims(const AnalysisOptions& options = {});

bool all_pass(const std::vector<ClaimResult>& claims);

/// CSV: claim_id,measured,reference,tolerance,status
void write_claims_csv(std::ostream& os, const std::vector<ClaimResult>& claims);
void write_claims_text(std::ostream& os, const std::vector<ClaimResult>& claims);

}  // namespace actlab::analysis
