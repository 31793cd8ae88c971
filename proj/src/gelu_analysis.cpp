#include "actlab/gelu_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace actlab::analysis {

namespace {

// Visits lo, lo + step, ..., hi without accumulating rounding in x.
template <typename F>
void sweep(double lo, double hi, double step, F&& f) {
  if (!(step > 0.0) || hi < lo) throw ParameterError("grid sweep needs step > 0 and lo <= hi");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5));
  for (std::size_t i = 0; i <= count; ++i) f(lo + static_cast<double>(i) * step);
}

template <typename F>
GridMax grid_max(double lo, double hi, double step, F&& f) {
  GridMax best{-std::numeric_limits<double>::infinity(), lo};
  sweep(lo, hi, step, [&](double x) {
    const double v = f(x);
    if (v > best.value) best = {v, x};
  });
  return best;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

ClaimResult make_claim(std::string id, std::string description, double measured, double reference, double tolerance,
                       Comparison comparison) {
  ClaimResult r{std::move(id), std::move(description), measured, reference, tolerance, comparison, ClaimStatus::kFail};
  bool ok = false;
  switch (comparison) {
    case Comparison::kApprox:
      ok = std::abs(measured - reference) <= tolerance;
      break;
    case Comparison::kAtMost:
      ok = measured <= reference + tolerance;
      break;
    case Comparison::kAtLeast:
      ok = measured >= reference - tolerance;
      break;
  }
  r.status = ok && std::isfinite(measured) ? ClaimStatus::kPass : ClaimStatus::kFail;
  return r;
}

ClaimResult untestable_claim(std::string id, std::string description) {
  ClaimResult r;
  r.id = std::move(id);
  r.description = std::move(description);
  r.measured = std::numeric_limits<double>::quiet_NaN();
  r.reference = std::numeric_limits<double>::quiet_NaN();
  r.status = ClaimStatus::kUntestable;
  return r;
}

std::string_view status_name(ClaimStatus status) {
  switch (status) {
    case ClaimStatus::kPass:
      return "pass";
    case ClaimStatus::kFail:
      return "fail";
    case ClaimStatus::kUntestable:
      return "untestable";
  }
  return "fail";
}

Minimum find_minimum(const GeluConstants& constants) {
  double lo = -2.0, hi = 0.0;
  const auto d = [&](double x) { return gelu_derivative_tanh(x, constants); };
  if (!(d(lo) < 0.0 && d(hi) > 0.0)) {
    throw InternalError("find_minimum: derivative does not change sign on [-2, 0]");
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (d(mid) < 0.0 ? lo : hi) = mid;
  }
  const double x = 0.5 * (lo + hi);
  return {x, gelu_tanh(x, constants)};
}

std::vector<ClaimResult> limit_checks(const GeluConstants& constants) {
  std::vector<ClaimResult> out;
  out.push_back(make_claim("limit_negative_infinity", "|GELU(-20)| vanishes", std::abs(gelu_tanh(-20.0, constants)),
                           0.0, 1e-9, Comparison::kAtMost));
  out.push_back(make_claim("limit_positive_infinity", "|GELU(20) - 20| vanishes",
                           std::abs(gelu_tanh(20.0, constants) - 20.0), 0.0, 1e-9, Comparison::kAtMost));
  out.push_back(make_claim("lower_bound_at_minimizer", "GELU(-0.75) >= -0.175", gelu_tanh(-0.75, constants), -0.17,
                           0.005, Comparison::kAtLeast));
  return out;
}

GridMax derivative_sup(double lo, double hi, double step) {
  return grid_max(lo, hi, step, [](double x) { return std::abs(gelu_derivative_exact(x)); });
}

GridMax first_term_sup(double lo, double hi, double step) {
  return grid_max(lo, hi, step, [](double x) { return std::abs(x * normal_pdf(x)); });
}

GridMax approximation_error(double lo, double hi, double step, const GeluConstants& constants) {
  return grid_max(lo, hi, step, [&](double x) { return std::abs(gelu_tanh(x, constants) - gelu_exact(x)); });
}

GridMax derivative_approximation_error(double lo, double hi, double step, const GeluConstants& constants) {
  return grid_max(lo, hi, step,
                  [&](double x) { return std::abs(gelu_derivative_tanh(x, constants) - gelu_derivative_exact(x)); });
}

ClaimResult lipschitz_check(std::size_t n_pairs, double range, double bound, std::uint64_t seed, GeluForm form,
                            const GeluConstants& constants) {
  if (n_pairs == 0) throw ParameterError("lipschitz_check: need at least one pair");
  if (!(bound > 0.0)) throw ParameterError("lipschitz_check: bound must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  const auto f = [&](double x) { return form == GeluForm::kExact ? gelu_exact(x) : gelu_tanh(x, constants); };
  double worst = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const double x = dist(rng);
    const double y = dist(rng);
    if (x == y) continue;
    worst = std::max(worst, std::abs(f(x) - f(y)) / std::abs(x - y));
  }
  const std::string name = form == GeluForm::kExact ? "exact" : "tanh";
  return make_claim("lipschitz_" + name, "|GELU(x)-GELU(y)| <= 1.241 |x-y| over random pairs (" + name + " form)",
                    worst, bound, 1e-9, Comparison::kAtMost);
}

double second_derivative(double x) { return normal_pdf(x) * (2.0 - x * x); }

GridMax second_derivative_fd_error(double lo, double hi, double step, double h) {
  return grid_max(lo, hi, step, [h](double x) {
    const double fd = (gelu_exact(x + h) - 2.0 * gelu_exact(x) + gelu_exact(x - h)) / (h * h);
    return std::abs(fd - second_derivative(x));
  });
}

ClaimResult composition_bound_check(NormLayer<double>& norm, const Tensor<double>& batch,
                                    const GeluConstants& constants) {
  if (batch.size() == 0) throw ContractError("composition_bound_check: empty batch");
  const auto z = normalize(batch, norm, Mode::kTrain).output;
  double k = 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (double v : z.data()) {
    k = std::max(k, std::abs(v));
    top = std::max(top, gelu_tanh(v, constants));
  }
  return make_claim("composition_bound_" + std::string(norm_name(norm.kind)),
                    "max GELU(N(z)) - max|N(z)| <= 0 (" + std::string(norm_name(norm.kind)) + " norm)", top - k, 0.0,
                    1e-6, Comparison::kAtMost);
}

GrowthTrace unnormalized_growth_demo(std::size_t depth, double scale, std::uint64_t seed, double bias_scale) {
  if (depth == 0) throw ParameterError("unnormalized_growth_demo: depth must be >= 1");
  constexpr std::size_t kWidth = 16;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bias_dist(-bias_scale, bias_scale);
  std::bernoulli_distribution sign(0.5);

  struct Layer {
    std::vector<std::size_t> perm;
    std::vector<double> sign, bias;
  };
  std::vector<Layer> layers(depth);
  for (auto& l : layers) {
    l.perm.resize(kWidth);
    std::iota(l.perm.begin(), l.perm.end(), std::size_t{0});
    std::shuffle(l.perm.begin(), l.perm.end(), rng);
    l.sign.resize(kWidth);
    l.bias.resize(kWidth);
    for (auto& s : l.sign) s = sign(rng) ? scale : -scale;
    for (auto& b : l.bias) b = bias_scale > 0.0 ? bias_dist(rng) : 0.0;
  }
  const auto apply = [](const Layer& l, const std::vector<double>& z) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = l.sign[i] * z[l.perm[i]] + l.bias[i];
    return out;
  };
  const auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  GrowthTrace trace;
  std::vector<double> plain(kWidth, 1.0);
  std::vector<double> normed(kWidth, 1.0);
  auto ln = NormLayer<double>::layer({kWidth});
  for (const auto& l : layers) {
    const double w_norm = inf_norm(l.sign);
    const double b_norm = inf_norm(l.bias);
    trace.linear_bound.push_back(w_norm * inf_norm(plain) + b_norm);
    plain = apply(l, plain);
    trace.unnormalized.push_back(inf_norm(plain));

    auto zn = normalize(Tensor<double>({1, kWidth}, apply(l, normed)), ln, Mode::kTrain).output;
    normed = zn.storage();
    trace.normalized.push_back(inf_norm(normed));
  }
  return trace;
}

std::vector<ClaimResult> run_claims(const AnalysisOptions& o) {
  const auto& c = o.constants;
  std::vector<ClaimResult> out;

  const Minimum m = find_minimum(c);
  out.push_back(make_claim("minimum_location", "argmin GELU ~ -0.75", m.x, -0.75, 0.02, Comparison::kApprox));
  out.push_back(make_claim("minimum_value", "min GELU ~ -0.17", m.value, -0.17, 0.005, Comparison::kApprox));
  out.push_back(make_claim("minimum_stationary", "|GELU'(x*)| = 0", std::abs(gelu_derivative_tanh(m.x, c)), 0.0, 1e-6,
                           Comparison::kAtMost));
  out.push_back(make_claim("minimum_local", "GELU(x* +- 1e-3) > GELU(x*)",
                           std::min(gelu_tanh(m.x - 1e-3, c), gelu_tanh(m.x + 1e-3, c)) - m.value, 0.0, 0.0,
                           Comparison::kAtLeast));

  for (auto& r : limit_checks(c)) out.push_back(std::move(r));

  const GridMax lowest = grid_max(o.grid_lo, o.grid_hi, o.grid_step, [&](double x) { return -gelu_tanh(x, c); });
  out.push_back(make_claim("lower_bound_grid", "GELU(x) >= -0.175 on the grid", -lowest.value, -0.17, 0.005,
                           Comparison::kAtLeast));
  const GridMax above_x = grid_max(0.0, o.grid_hi, o.grid_step, [&](double x) { return gelu_tanh(x, c) - x; });
  out.push_back(make_claim("upper_bound_x_nonnegative", "GELU(x) <= x for x >= 0", above_x.value, 0.0, 1e-9,
                           Comparison::kAtMost));
  const GridMax above_relu =
      grid_max(o.grid_lo, o.grid_hi, o.grid_step, [&](double x) { return gelu_tanh(x, c) - std::max(x, 0.0); });
  out.push_back(make_claim("upper_bound_max_x_0", "GELU(x) <= max(x, 0) everywhere", above_relu.value, 0.0, 1e-9,
                           Comparison::kAtMost));

  std::size_t nonnegative = 0;
  sweep(-10.0, -0.76, o.grid_step, [&](double x) { nonnegative += gelu_derivative_tanh(x, c) >= 0.0 ? 1 : 0; });
  out.push_back(make_claim("negative_derivative_region", "GELU'(x) < 0 for all x < -0.76 (count of violations)",
                           static_cast<double>(nonnegative), 0.0, 0.0, Comparison::kApprox));

  const GridMax sup = derivative_sup(o.grid_lo, o.grid_hi, o.grid_step);
  out.push_back(
      make_claim("derivative_bound", "sup |GELU'| <= 1.241", sup.value, kLipschitzBound, 1e-9, Comparison::kAtMost));
  out.push_back(make_claim("derivative_sup_value", "sup |GELU'| ~ 1.129 (grid)", sup.value, 1.129, 0.002,
                           Comparison::kApprox));
  out.push_back(make_claim("derivative_sup_location", "argmax |GELU'| ~ sqrt(2)", sup.at, std::numbers::sqrt2,
                           std::max(o.grid_step, 1e-3), Comparison::kApprox));
  const GridMax term = first_term_sup(o.grid_lo, o.grid_hi, o.grid_step);
  out.push_back(make_claim("first_term_max", "max |x phi(x)| ~ 0.241", term.value, 0.241, 0.001, Comparison::kApprox));
  out.push_back(make_claim("first_term_location", "max |x phi(x)| at |x| = 1", std::abs(term.at), 1.0,
                           std::max(o.grid_step, 1e-3), Comparison::kApprox));

  const ClaimResult lip_exact =
      lipschitz_check(o.lipschitz_pairs, 10.0, kLipschitzBound, o.seed, GeluForm::kExact, c);
  out.push_back(lip_exact);
  out.push_back(lipschitz_check(o.lipschitz_pairs, 10.0, kLipschitzBound, o.seed + 1, GeluForm::kTanh, c));
  out.push_back(make_claim("lipschitz_ratio_matches_sup", "worst secant slope ~ sup |GELU'|", lip_exact.measured,
                           sup.value, 0.002, Comparison::kApprox));

  const GridMax fd2 = second_derivative_fd_error(-5.0, 5.0, std::max(o.grid_step, 1e-3), 1e-3);
  out.push_back(make_claim("second_derivative_closed_form", "phi(x)(2-x^2) vs central differences on [-5,5]",
                           fd2.value, 0.0, 1e-5, Comparison::kAtMost));
  const double h = 1e-4;
  const double fd_origin = (gelu_derivative_exact(h) - gelu_derivative_exact(-h)) / (2.0 * h);
  out.push_back(make_claim("second_derivative_origin", "GELU''(0) = 2/sqrt(2 pi)", fd_origin,
                           2.0 / std::sqrt(2.0 * std::numbers::pi), 1e-5, Comparison::kApprox));
  out.push_back(make_claim("second_derivative_inflection", "GELU''(+-sqrt 2) = 0",
                           std::max(std::abs(second_derivative(std::numbers::sqrt2)),
                                    std::abs(second_derivative(-std::numbers::sqrt2))),
                           0.0, 1e-12, Comparison::kAtMost));
  out.push_back(make_claim("second_derivative_concave_tail", "GELU''(3) < 0", second_derivative(3.0), 0.0, 0.0,
                           Comparison::kAtMost));

  const GridMax approx = approximation_error(o.grid_lo, o.grid_hi, o.grid_step, c);
  out.push_back(make_claim("tanh_approximation_error", "max |GELU_tanh - GELU_exact| on [-10,10]", approx.value,
                           kTanhApproxErrorBound, 0.0, Comparison::kAtMost));
  const GridMax dapprox = derivative_approximation_error(o.grid_lo, o.grid_hi, o.grid_step, c);
  out.push_back(make_claim("tanh_derivative_error", "max |GELU_tanh' - GELU_exact'| on [-10,10]", dapprox.value,
                           2.0 * kTanhDerivativeErrorBound, 0.0, Comparison::kAtMost));

  // Composition bound over random batches for each normalization kind.
  for (NormKind kind : {NormKind::kBatch, NormKind::kLayer, NormKind::kGroup}) {
    ClaimResult worst;
    bool first = true;
    for (std::size_t b = 0; b < o.composition_batches; ++b) {
      std::mt19937_64 rng(o.seed + 1000 + b);
      std::uniform_real_distribution<double> shift(-5.0, 5.0), spread(0.1, 10.0);
      auto batch = random_normal<double>({8, 4, 2, 2}, rng, spread(rng), shift(rng));
      NormLayer<double> layer = kind == NormKind::kBatch   ? NormLayer<double>::batch(4)
                                : kind == NormKind::kLayer ? NormLayer<double>::layer({4, 2, 2})
                                                           : NormLayer<double>::group(4, 2);
      ClaimResult r = composition_bound_check(layer, batch, c);
      if (first || r.measured > worst.measured) worst = r;
      first = false;
    }
    worst.description += ", worst of " + std::to_string(o.composition_batches) + " batches";
    out.push_back(worst);
  }

  const GrowthTrace growth = unnormalized_growth_demo(5, 2.0, o.seed);
  double min_ratio = growth.unnormalized[0];
  for (std::size_t i = 1; i < growth.unnormalized.size(); ++i) {
    min_ratio = std::min(min_ratio, growth.unnormalized[i] / growth.unnormalized[i - 1]);
  }
  out.push_back(make_claim("growth_without_normalization", "per-layer growth of max|z'| with |W| = 2, 5 layers",
                           min_ratio, 2.0, 1e-9, Comparison::kAtLeast));
  const double normed_max = *std::max_element(growth.normalized.begin(), growth.normalized.end());
  out.push_back(make_claim("bounded_with_normalization", "max|z''| stays below sqrt(d-1), d = 16", normed_max,
                           std::sqrt(15.0), 1e-9, Comparison::kAtMost));

  out.push_back(untestable_claim("holder_exponent_above_one",
                                 "Holder continuity with exponent in (1,2] on R: not testable as stated (forces a "
                                 "constant function); the exponent-1 case is the Lipschitz rows"));
  return out;
}

bool all_pass(const std::vector<ClaimResult>& claims) {
  return std::none_of(claims.begin(), claims.end(), [](const auto& c) { return c.status == ClaimStatus::kFail; });
}

void write_claims_csv(std::ostream& os, const std::vector<ClaimResult>& claims) {
  os << "claim_id,measured,reference,tolerance,status\n";
  for (const auto& c : claims) {
    os << c.id << ',' << fmt(c.measured) << ',' << fmt(c.reference) << ',' << fmt(c.tolerance) << ','
       << status_name(c.status) << '\n';
  }
}

void write_claims_text(std::ostream& os, const std::vector<ClaimResult>& claims) {
  std::size_t passed = 0, failed = 0, untestable = 0;
  for (const auto& c : claims) {
    const char* op = c.comparison == Comparison::kApprox ? "~" : (c.comparison == Comparison::kAtMost ? "<=" : ">=");
    char line[512];
    if (c.status == ClaimStatus::kUntestable) {
      std::snprintf(line, sizeof line, "[%-10s] %-32s %s\n", "UNTESTABLE", c.id.c_str(), c.description.c_str());
    } else {
      std::snprintf(line, sizeof line, "[%-10s] %-32s measured %-16s %s %-14s (tol %s)  %s\n",
                    c.status == ClaimStatus::kPass ? "PASS" : "FAIL", c.id.c_str(), fmt(c.measured).c_str(), op,
                    fmt(c.reference).c_str(), fmt(c.tolerance).c_str(), c.description.c_str());
    }
    os << line;
    passed += c.status == ClaimStatus::kPass;
    failed += c.status == ClaimStatus::kFail;
    untestable += c.status == ClaimStatus::kUntestable;
  }
  os << passed << " passed, " << failed << " failed, " << untestable << " not testable\n";
}

}  // namespace actlab::analysis
