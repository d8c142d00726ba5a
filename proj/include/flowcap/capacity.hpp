#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowcap/density.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/quadrature.hpp"
#include "flowcap/special.hpp"

namespace flowcap {

// Radially symmetric multivariate Student-t (nu degrees of freedom, isotropic
// scale). Heavy tails make it the default importance proposal for the
// per-flow progress integrals.
class StudentTRadial final : public Density {
public:
    StudentTRadial(int dim, double scale, double nu = 4.0)
        : dim_(dim), scale_(scale), nu_(nu) {
        if (dim_ < 1) throw ContractViolation("StudentTRadial: dim must be >= 1");
        if (!(scale_ > 0.0) || !(nu_ > 0.0))
            throw ContractViolation("StudentTRadial: scale and nu must be positive");
        log_norm_ = std::lgamma(0.5 * (nu_ + dim_)) - std::lgamma(0.5 * nu_) -
                    0.5 * dim_ * std::log(nu_ * pi);
    }

    int dim() const override { return dim_; }

    double log_density(const Vec& z) const override {
        const double q = z.squaredNorm() / (scale_ * scale_ * nu_);
        return log_norm_ - 0.5 * (nu_ + dim_) * std::log1p(q) -
               dim_ * std::log(scale_);
    }

    Vec grad_log_density(const Vec& z) const override {
        const double s2nu = scale_ * scale_ * nu_;
        return -(nu_ + dim_) / (s2nu + z.squaredNorm()) * z;
    }

    Vec sample(Rng& rng) const override {
        const Vec g = rng.normal_vec(dim_);
        const double w = rng.chisq(static_cast<int>(nu_));
        return scale_ * std::sqrt(nu_ / std::max(w, 1e-300)) * g;
    }

    double scale() const { return scale_; }

private:
    int dim_;
    double scale_;
    double nu_;
    double log_norm_;
};

// Scale for the default proposal: half the radius at which p's log-density
// has dropped 40 nats below its value at the origin. Falls back to 10 when
// no such drop is found along the first axis.
inline double proposal_scale_for(const Density& p) {
    const Vec origin = Vec::Zero(p.dim());
    const double l0 = p.log_density(origin);
    Vec probe = Vec::Zero(p.dim());
    for (double r = 1.0; r <= 1048576.0; r *= 2.0) {
        probe[0] = r;
        const double lr = p.log_density(probe);
        if (!std::isfinite(l0) || lr < l0 - 40.0) return std::max(r / 2.0, 1.0);
    }
    return 10.0;
}

struct LhatEstimate {
    double value = 0.0;
    double stderr_est = 0.0;
    double max_term = 0.0; // largest single importance-weighted contribution
    std::size_t n = 0;
};

// Importance-sampling estimate of the per-flow progress bound
// integral |det J_f(z) p(f(z)) - p(z)| dz. Deterministic per seed. An empty
// stack integrates |p - p| and returns exactly zero.
inline LhatEstimate lhat_monte_carlo(const Density& p, const FlowStack& f,
                                     const Density& proposal, std::size_t n,
                                     std::uint64_t seed) {
    if (n < 2) throw ContractViolation("lhat_monte_carlo: need n >= 2");
    if (proposal.dim() != p.dim())
        throw ContractViolation("lhat_monte_carlo: proposal dimension mismatch");
    Rng rng(seed);
    double sum = 0.0;
    double sumsq = 0.0;
    double max_term = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec z = proposal.sample(rng);
        const double lq = proposal.log_density(z);
        const double t0 = p.log_density(z);
        double t1;
        if (f.empty()) {
            t1 = t0;
        } else {
            const auto [y, lad] = f.forward_with_log_det(z);
            t1 = p.log_density(y) + lad;
        }
        double term = 0.0;
        const double hi = std::max(t0, t1);
        if (std::isfinite(hi) && t0 != t1) {
            const double delta = std::abs(t1 - t0);
            const double factor = std::isfinite(delta) ? -std::expm1(-delta) : 1.0;
            term = std::exp(hi - lq) * factor;
        }
        if (!std::isfinite(term))
            throw CoverageError("lhat_monte_carlo: proposal fails to cover the integrand");
        sum += term;
        sumsq += term * term;
        max_term = std::max(max_term, term);
    }
    LhatEstimate est;
    est.n = n;
    est.value = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq / static_cast<double>(n) - est.value * est.value);
    est.stderr_est = std::sqrt(var / static_cast<double>(n));
    est.max_term = max_term;
    return est;
}

inline LhatEstimate lhat_monte_carlo(const Density& p, const FlowStack& f, std::size_t n,
                                     std::uint64_t seed) {
    const StudentTRadial proposal(p.dim(), proposal_scale_for(p));
    return lhat_monte_carlo(p, f, proposal, n, seed);
}

struct HouseholderBound {
    double ratio_bound = 0.0; // (lmax/lmin)^{d/2} - 1, the flow-independent bound
    double det_bound = 0.0;   // (lmax^{d/2} - lmin^{d/2}) / sqrt(det), tighter
};

// Closed-form bound on the progress any single Householder flow can make on
// N(0, cov), from the eigenvalue spread of the covariance.
inline HouseholderBound householder_lhat_bound(double lmax, double lmin, double log_det,
                                               int d) {
    if (!(lmin > 0.0) || !(lmax >= lmin))
        throw ContractViolation("householder_lhat_bound: need 0 < lmin <= lmax");
    HouseholderBound b;
    const double half_d = 0.5 * static_cast<double>(d);
    b.ratio_bound = std::expm1(half_d * (std::log(lmax) - std::log(lmin)));
    const double a = half_d * std::log(lmax) - 0.5 * log_det;
    const double c = half_d * (std::log(lmin) - std::log(lmax));
    b.det_bound = std::exp(a) * (-std::expm1(c));
    return b;
}

inline HouseholderBound householder_lhat_bound(const Mat& cov) {
    if (cov.rows() != cov.cols() || cov.rows() == 0)
        throw ContractViolation("householder_lhat_bound: covariance must be square");
    if (!cov.isApprox(cov.transpose(), 1e-12))
        throw ContractViolation("householder_lhat_bound: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.info() != Eigen::Success)
        throw NumericFailure("householder_lhat_bound: eigendecomposition failed");
    const Vec lam = es.eigenvalues();
    if (!(lam.minCoeff() > 0.0))
        throw ContractViolation("householder_lhat_bound: covariance must be positive definite");
    return householder_lhat_bound(lam.maxCoeff(), lam.minCoeff(),
                                  lam.array().log().sum(), static_cast<int>(cov.rows()));
}

struct LocalPlanarTerms {
    double term1 = 0.0; // regularized lower incomplete gamma P(d/tau, d^tau)
    double term2 = 0.0; // exact-Theta tail integral ratio
};

// The two integral terms controlling the locality bound for planar flows on
// the flat-core radial density. All gamma arithmetic runs in log space.
inline LocalPlanarTerms local_planar_terms(int d, double tau) {
    if (d <= 2) throw ContractViolation("local_planar_terms: need d > 2");
    if (!(tau > 0.0 && tau < 1.0))
        throw ContractViolation("local_planar_terms: need tau in (0,1)");
    LocalPlanarTerms t;
    const double a = static_cast<double>(d) / tau;
    const double x = std::pow(static_cast<double>(d), tau);
    t.term1 = std::exp(log_gamma_p(a, x));

    // term2 = Theta_exact * [int_{d}^inf e^{-r^tau} r^{d-2} log(1+r) dr]
    //                      / [int_0^inf e^{-r^tau} r^{d-1} dr]
    // with s = r^tau: numerator = (1/tau) int_{d^tau}^inf e^{-s} s^{m-1}
    // log(1+s^{1/tau}) ds, m = (d-1)/tau; denominator = Gamma(d/tau)/tau.
    const double m = (static_cast<double>(d) - 1.0) / tau;
    const double lo = std::max(x, m - 45.0 * std::sqrt(m));
    const double hi = m + 45.0 * std::sqrt(m);
    if (!(lo < hi))
        throw NumericFailure("local_planar_terms: degenerate integration window");
    const double log_Is = integrate_gl_log(
        [&](double s) {
            return -s + (m - 1.0) * std::log(s) +
                   std::log(std::log1p(std::pow(s, 1.0 / tau)));
        },
        lo, hi, 15, 40);
    const double log_theta =
        std::lgamma(0.5 * d) - 0.5 * std::log(pi) - std::lgamma(0.5 * (d - 1.0));
    t.term2 = std::exp(log_theta + log_Is - std::lgamma(a));
    if (!std::isfinite(t.term1) || !std::isfinite(t.term2))
        throw NumericFailure("local_planar_terms: result overflowed despite log space");
    return t;
}

// Flow-independent bound on the progress a c_h-local planar flow can make on
// the flat-core radial density, clipped at the trivial l1 diameter 2.
inline double local_planar_lhat_bound(int d, double tau, double c_h) {
    if (!(c_h >= 0.0)) throw ContractViolation("local_planar_lhat_bound: need c_h >= 0");
    if (c_h == 0.0) return 0.0;
    const LocalPlanarTerms t = local_planar_terms(d, tau);
    const double hinge = c_h * (t.term1 + 2.0 * t.term2);
    const double laplacian = (1.0 + c_h) * c_h * tau *
                             std::pow(static_cast<double>(d), -(1.0 / tau - 1.0));
    return std::min(2.0, hinge + laplacian);
}

// Depth lower bound T >= (||p - q||_1 - eps) / sup-over-flows Lhat.
inline double depth_lower_bound(double l1_pq, double eps, double lhat_sup) {
    if (!(eps >= 0.0)) throw ContractViolation("depth_lower_bound: eps must be >= 0");
    if (!(lhat_sup > 0.0))
        throw ContractViolation(
            "depth_lower_bound: lhat_sup must be positive (bound is unbounded)");
    return std::max(0.0, (l1_pq - eps) / lhat_sup);
}

enum class CapacityFamily { householder, local_planar };

struct ScalingRow {
    int d = 0;
    double lhat_bound = 0.0;
    double depth_lb = 0.0;
};

struct ScalingStudyResult {
    std::vector<ScalingRow> rows;
    double slope = 0.0; // least-squares log-log slope of depth_lb vs d
};

struct ScalingParams {
    double kappa = 1.0;   // householder: |S_ij| = d^{-(2+kappa)}
    double tau = 0.5;     // local_planar: flat-core exponent
    double c_h = 2.0;     // local_planar: locality constant
    double numerator = 0.5; // l1 - eps in the depth bound
};

// Depth lower bound across dimensions with its log-log slope. The householder
// family uses sigma = I + d^{-(2+kappa)} * ones (lmax = 1 + d^{-(1+kappa)},
// lmin = 1, det = lmax); local_planar uses the flat-core bound.
inline ScalingStudyResult scaling_study(CapacityFamily family, const std::vector<int>& dims,
                                        const ScalingParams& params = {}) {
    if (dims.size() < 3) throw ContractViolation("scaling_study: need >= 3 dimensions");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        if (!(dims[i] < dims[i + 1]))
            throw ContractViolation("scaling_study: dims must be ascending");
    ScalingStudyResult out;
    for (int d : dims) {
        ScalingRow row;
        row.d = d;
        if (family == CapacityFamily::householder) {
            const double off = std::pow(static_cast<double>(d), -(1.0 + params.kappa));
            const double lmax = 1.0 + off;
            row.lhat_bound = householder_lhat_bound(lmax, 1.0, std::log1p(off), d).ratio_bound;
        } else {
            row.lhat_bound = local_planar_lhat_bound(d, params.tau, params.c_h);
        }
        row.depth_lb = depth_lower_bound(params.numerator, 0.0, row.lhat_bound);
        out.rows.push_back(row);
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(out.rows.size());
    for (const ScalingRow& r : out.rows) {
        const double x = std::log(static_cast<double>(r.d));
        const double y = std::log(r.depth_lb);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return out;
}

} // namespace flowcap
