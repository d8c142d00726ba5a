#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowcap/densities/mixture.hpp"
#include "flowcap/densities/product.hpp"
#include "flowcap/flow_stack.hpp"

namespace flowcap {

struct ResidualEntry {
    Vec z;
    double residual = 0.0;
    bool excluded = false;
    std::string reason;
};

struct ResidualReport {
    std::vector<ResidualEntry> entries;
    std::size_t excluded = 0;
    double max_residual = 0.0;
    bool vacuous = false;
    std::string note;

    void add(Vec z, double r) {
        entries.push_back({std::move(z), r, false, {}});
        max_residual = std::max(max_residual, r);
    }
    void exclude(Vec z, std::string reason) {
        entries.push_back({std::move(z), 0.0, true, std::move(reason)});
        ++excluded;
    }
};

namespace detail {

// Gradient of the pushforward log-density at f(z), walked forward from
// grad log q(z); also returns the trajectory so hinge proximity can be
// checked layer by layer.
inline Vec pushforward_grad_forward(const FlowStack& stack, const Density& q, const Vec& z0,
                                    std::vector<Vec>* trajectory = nullptr) {
    Vec z = z0;
    Vec g = q.grad_log_density(z0);
    if (trajectory) trajectory->push_back(z);
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const FlowLayer& layer = stack.layer(i);
        g = layer.solve_jac_transpose(z, g - layer.grad_log_det_jacobian(z));
        z = layer.forward(z);
        if (trajectory) trajectory->push_back(z);
    }
    return g;
}

inline bool near_relu_hinge(const FlowLayer& layer, const Vec& z, double margin,
                            std::string& why) {
    if (layer.layer_kind() == LayerKind::planar) {
        const auto& pl = static_cast<const PlanarLayer&>(layer);
        const double t = pl.w().dot(z) + pl.b();
        if (std::abs(t) <= margin * (1.0 + z.norm())) {
            why = "activation hyperplane proximity";
            return true;
        }
        return false;
    }
    const auto& sl = static_cast<const SylvesterLayer&>(layer);
    const Vec t = sl.B().transpose() * z + sl.bias();
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        if (std::abs(t[j]) <= margin * (1.0 + z.norm())) {
            why = "activation hyperplane proximity (unit " + std::to_string(j) + ")";
            return true;
        }
    }
    return false;
}

} // namespace detail

// Residual of the transport identity J_f(z)^T grad log p(f(z)) = grad log q(z)
// for a ReLU stack, with p the pushforward of q. Points within margin of any
// activation hyperplane along their trajectory are excluded; elsewhere the
// log-det factor is locally constant and the residual must vanish.
inline ResidualReport residual_relu(const FlowStack& stack, const Density& q,
                                    const std::vector<Vec>& points, double margin = 1e-8) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const LayerKind k = stack.layer(i).layer_kind();
        const bool relu =
            (k == LayerKind::planar &&
             static_cast<const PlanarLayer&>(stack.layer(i)).nonlinearity().is_relu()) ||
            (k == LayerKind::sylvester &&
             static_cast<const SylvesterLayer&>(stack.layer(i)).nonlinearity().is_relu());
        if (!relu)
            throw ContractViolation("residual_relu: layer " + std::to_string(i) +
                                    " is not a ReLU planar/Sylvester layer");
    }
    ResidualReport report;
    for (const Vec& z0 : points) {
        std::vector<Vec> traj;
        bool skip = false;
        std::string why;
        {
            Vec z = z0;
            for (std::size_t i = 0; i < stack.size() && !skip; ++i) {
                if (detail::near_relu_hinge(stack.layer(i), z, margin, why)) {
                    why += " at layer " + std::to_string(i);
                    skip = true;
                    break;
                }
                z = stack.layer(i).forward(z);
            }
        }
        if (skip) {
            report.exclude(z0, why);
            continue;
        }
        traj.clear();
        const Vec gp = detail::pushforward_grad_forward(stack, q, z0, &traj);
        Vec pulled = gp;
        for (std::size_t i = stack.size(); i-- > 0;)
            pulled = stack.layer(i).apply_jac_transpose(traj[i], pulled);
        report.add(z0, (pulled - q.grad_log_density(z0)).norm());
    }
    return report;
}

// Residual of the smooth-stack span condition: grad log p(f(z)) - grad log q(z)
// must lie in the span of the layers' hinge matrices (w vectors for planar,
// B columns for Sylvester). Reports the norm of the projection onto the
// orthogonal complement. Vacuous once the spans cover the whole space.
inline ResidualReport residual_span(const FlowStack& stack, const Density& q,
                                    const std::vector<Vec>& points) {
    const int d = stack.empty() ? q.dim() : stack.dim();
    Eigen::Index total_cols = 0;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const LayerKind k = stack.layer(i).layer_kind();
        if (k == LayerKind::planar) {
            if (!static_cast<const PlanarLayer&>(stack.layer(i)).nonlinearity().smooth)
                throw ContractViolation("residual_span: layer " + std::to_string(i) +
                                        " must use a smooth nonlinearity");
            total_cols += 1;
        } else if (k == LayerKind::sylvester) {
            if (!static_cast<const SylvesterLayer&>(stack.layer(i)).nonlinearity().smooth)
                throw ContractViolation("residual_span: layer " + std::to_string(i) +
                                        " must use a smooth nonlinearity");
            total_cols += static_cast<const SylvesterLayer&>(stack.layer(i)).B().cols();
        } else {
            throw ContractViolation("residual_span: layer " + std::to_string(i) +
                                    " is not planar/Sylvester");
        }
    }

    ResidualReport report;
    if (total_cols >= d) {
        report.vacuous = true;
        report.note = "flow dimensions sum to " + std::to_string(total_cols) +
                      " >= d = " + std::to_string(d) + "; complement may be empty";
    }
    Mat Ball = Mat::Zero(d, std::max<Eigen::Index>(total_cols, 1));
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        if (stack.layer(i).layer_kind() == LayerKind::planar) {
            Ball.col(col++) = static_cast<const PlanarLayer&>(stack.layer(i)).w();
        } else {
            const auto& B = static_cast<const SylvesterLayer&>(stack.layer(i)).B();
            Ball.block(0, col, d, B.cols()) = B;
            col += B.cols();
        }
    }

    // Orthonormal basis of span{columns}^perp via full QR: columns of Q beyond
    // the numerical rank.
    Eigen::ColPivHouseholderQR<Mat> qr(Ball);
    qr.setThreshold(1e-9);
    const Eigen::Index rank = stack.empty() ? 0 : qr.rank();
    if (rank >= d) {
        report.vacuous = true;
        if (report.note.empty())
            report.note = "hinge directions span the whole space; complement is empty";
    }
    Mat Qfull = Mat(qr.householderQ());
    const Mat N = Qfull.rightCols(d - std::min<Eigen::Index>(rank, d));

    for (const Vec& z0 : points) {
        if (report.vacuous) {
            report.add(z0, 0.0);
            continue;
        }
        const Vec gp = detail::pushforward_grad_forward(stack, q, z0);
        const Vec diff = gp - q.grad_log_density(z0);
        report.add(z0, (N.transpose() * diff).norm());
    }
    return report;
}

// Residual of the single-radial-flow condition: beta(r) grad log p(f(z)) -
// grad log q(z) must be parallel to z - z0. Reports the orthogonal component's
// norm; points at the flow center are excluded.
inline ResidualReport residual_radial(const RadialLayer& layer, const Density& q,
                                      const std::vector<Vec>& points, double margin = 1e-12) {
    FlowStack stack;
    stack.add<RadialLayer>(layer);
    ResidualReport report;
    for (const Vec& z : points) {
        const Vec dvec = z - layer.z0();
        const double r = dvec.norm();
        if (r <= margin * (1.0 + layer.z0().norm())) {
            report.exclude(z, "at the flow center");
            continue;
        }
        const Vec gp = detail::pushforward_grad_forward(stack, q, z);
        const Vec comb = layer.beta(r) * gp - q.grad_log_density(z);
        const Vec unit = dvec / r;
        report.add(z, (comb - unit * unit.dot(comb)).norm());
    }
    return report;
}

struct ConstancyReport {
    double max_deviation = 0.0;
    Mat mean;
    std::size_t n_points = 0;
};

namespace detail {

// Responsibility-weighted covariance of the component means at z.
inline Mat posterior_mean_cov(const Mixture& mix, const std::vector<Vec>& means,
                              const Vec& z) {
    const std::vector<double> r = mix.responsibilities(z);
    const auto d = means.front().size();
    Vec m = Vec::Zero(d);
    Mat s = Mat::Zero(d, d);
    for (std::size_t i = 0; i < means.size(); ++i) {
        m += r[i] * means[i];
        s += r[i] * means[i] * means[i].transpose();
    }
    return s - m * m.transpose();
}

} // namespace detail

// Evaluates the shared-covariance mixture-of-Gaussians matching condition on
// a ball: the matrix G(z) = A^T S_p^{-1} Cov_{r_p(Az+b)}(mu_p) S_p^{-1} A -
// S_q^{-1} Cov_{r_q(z)}(mu_q) S_q^{-1} must be constant in z for a transport
// affine on that region to exist. Reports the max entrywise deviation from
// the mean over n sampled points.
inline ConstancyReport mog_condition(const SharedCovMixture& p, const SharedCovMixture& q,
                                     const Mat& A, const Vec& b, const Vec& center,
                                     double radius, std::size_t n = 100,
                                     std::uint64_t seed = 20260818) {
    if (p.means.empty() || q.means.empty())
        throw ContractViolation("mog_condition: mixtures must be nonempty");
    const auto d = q.means.front().size();
    if (A.rows() != d || A.cols() != d || b.size() != d || center.size() != d)
        throw ContractViolation("mog_condition: dimension mismatch");
    Eigen::PartialPivLU<Mat> lu(A);
    if (std::abs(lu.determinant()) <= 1e-12 * std::pow(A.cwiseAbs().maxCoeff(),
                                                       static_cast<double>(d)))
        throw ContractViolation("mog_condition: A must be invertible");

    const Mixture pm = p.to_mixture();
    const Mixture qm = q.to_mixture();
    const Mat sp_inv = p.cov.llt().solve(Mat::Identity(d, d));
    const Mat sq_inv = q.cov.llt().solve(Mat::Identity(d, d));

    Rng rng(seed);
    std::vector<Mat> gs;
    gs.reserve(n);
    Mat mean = Mat::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec z = rng.in_ball(center, radius);
        const Mat cov_p = detail::posterior_mean_cov(pm, p.means, A * z + b);
        const Mat cov_q = detail::posterior_mean_cov(qm, q.means, z);
        Mat g = A.transpose() * sp_inv * cov_p * sp_inv * A - sq_inv * cov_q * sq_inv;
        mean += g;
        gs.push_back(std::move(g));
    }
    mean /= static_cast<double>(n);
    ConstancyReport report;
    report.mean = mean;
    report.n_points = n;
    for (const Mat& g : gs)
        report.max_deviation = std::max(report.max_deviation,
                                        (g - mean).cwiseAbs().maxCoeff());
    return report;
}

// Residual of the product-density matching condition: with tilde-gradient
// (g'/g applied coordinatewise), r_q tgrad(z) - r_p A^T tgrad(Az+b) must
// vanish identically for a transport affine on the region to exist.
inline ResidualReport prod_condition(const Func1D& g, double r_p, double r_q, const Mat& A,
                                     const Vec& b, const std::vector<Vec>& points) {
    ResidualReport report;
    auto tgrad = [&](const Vec& x) {
        Vec out(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = g.value(x[i]);
            if (!(v > 0.0))
                throw ContractViolation("prod_condition: g nonpositive at coordinate " +
                                        std::to_string(i));
            out[i] = g.deriv(x[i]) / v;
        }
        return out;
    };
    for (const Vec& z : points) {
        const Vec lhs = r_q * tgrad(z);
        const Vec rhs = r_p * (A.transpose() * tgrad(A * z + b));
        report.add(z, (lhs - rhs).norm());
    }
    return report;
}

enum class FlowFamily { planar_smooth, sylvester_smooth, radial, relu_sylvester };

inline const char* flow_family_name(FlowFamily f) {
    switch (f) {
        case FlowFamily::planar_smooth: return "planar-smooth";
        case FlowFamily::sylvester_smooth: return "sylvester-smooth";
        case FlowFamily::radial: return "radial";
        case FlowFamily::relu_sylvester: return "relu-sylvester";
    }
    return "?";
}

struct FeasibilityVerdict {
    std::string family;
    bool ruled_out = false;
    std::string witness;
};

// Necessary-condition screen for transporting N(0, sigma_q) to N(0, sigma_p)
// with a single flow of the given family. ruled_out only when the family's
// covariance condition is violated beyond the relative tolerance.
inline FeasibilityVerdict gaussian_feasibility(const Mat& sigma_q, const Mat& sigma_p,
                                               FlowFamily family, int m = 0,
                                               double tol = 1e-9) {
    const auto d = sigma_q.rows();
    if (sigma_p.rows() != d || sigma_q.cols() != d || sigma_p.cols() != d || d == 0)
        throw ContractViolation("gaussian_feasibility: dimension mismatch");
    auto check_spd = [&](const Mat& S, const char* name) {
        if (!S.isApprox(S.transpose(), 1e-12))
            throw ContractViolation(std::string("gaussian_feasibility: ") + name +
                                    " must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
            throw ContractViolation(std::string("gaussian_feasibility: ") + name +
                                    " must be positive definite");
    };
    check_spd(sigma_q, "sigma_q");
    check_spd(sigma_p, "sigma_p");

    FeasibilityVerdict v;
    v.family = flow_family_name(family);
    if (family == FlowFamily::sylvester_smooth) v.family += "(" + std::to_string(m) + ")";

    switch (family) {
        case FlowFamily::planar_smooth: {
            const Mat diff = sigma_q - sigma_p;
            Eigen::JacobiSVD<Mat> svd(diff);
            const double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
            const double cutoff = tol * std::max(smax, sigma_q.norm() + sigma_p.norm());
            int rank = 0;
            for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
                if (svd.singularValues()[i] > cutoff) ++rank;
            v.ruled_out = rank > 1;
            v.witness = "rank(sigma_q - sigma_p) = " + std::to_string(rank);
            return v;
        }
        case FlowFamily::sylvester_smooth: {
            if (!(m >= 1 && m < d))
                throw ContractViolation("gaussian_feasibility: need 1 <= m < d");
            const Mat qi = sigma_q.llt().solve(Mat::Identity(d, d));
            const Mat pi = sigma_p.llt().solve(Mat::Identity(d, d));
            Mat diff = qi - pi;
            diff = 0.5 * (diff + diff.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Mat> es(diff);
            const Vec lam = es.eigenvalues(); // ascending
            const double cutoff = tol * std::max(lam.cwiseAbs().maxCoeff(),
                                                 qi.norm() + pi.norm());
            int negatives = 0;
            int positives = 0;
            for (Eigen::Index i = 0; i < d; ++i) {
                if (lam[i] < -cutoff) ++negatives;
                if (lam[i] > cutoff) ++positives;
            }
            const int rank = negatives + positives;
            v.ruled_out = negatives > m || positives > m || rank > 2 * m;
            v.witness = "inertia of sigma_q^{-1} - sigma_p^{-1}: " +
                        std::to_string(negatives) + " negative, " +
                        std::to_string(positives) + " positive eigenvalues (rank " +
                        std::to_string(rank) + ", limit " + std::to_string(m) +
                        " each and 2m total)";
            return v;
        }
        case FlowFamily::radial: {
            const double dev = (sigma_q - sigma_p).cwiseAbs().maxCoeff();
            const double cutoff =
                tol * std::max(sigma_q.cwiseAbs().maxCoeff(), sigma_p.cwiseAbs().maxCoeff());
            v.ruled_out = dev > cutoff;
            v.witness = "max |sigma_q - sigma_p| = " + std::to_string(dev);
            return v;
        }
        case FlowFamily::relu_sylvester: {
            v.ruled_out = false;
            v.witness = "no covariance obstruction for ReLU Sylvester flows";
            return v;
        }
    }
    throw ContractViolation("gaussian_feasibility: unknown family");
}

} // namespace flowcap
