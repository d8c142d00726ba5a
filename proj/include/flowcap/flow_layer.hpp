#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "flowcap/errors.hpp"
#include "flowcap/nonlinearity.hpp"
#include "flowcap/quadrature.hpp"
#include "flowcap/rng.hpp"

namespace flowcap {

enum class LayerKind { planar, sylvester, radial, householder };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::planar: return "planar";
    case LayerKind::sylvester: return "sylvester";
    case LayerKind::radial: return "radial";
    case LayerKind::householder: return "householder";
    }
    return "?";
}

// One invertible map R^d -> R^d with closed-form Jacobian actions.
class FlowLayer {
public:
    virtual ~FlowLayer() = default;

    virtual LayerKind layer_kind() const = 0;
    virtual int dim() const = 0;
    virtual Vec forward(const Vec& z) const = 0;
    virtual Vec inverse(const Vec& y) const = 0;
    virtual double log_det_jacobian(const Vec& z) const = 0;
    virtual Vec grad_log_det_jacobian(const Vec& z) const = 0;
    // J(z)^T x
    virtual Vec apply_jac_transpose(const Vec& z, const Vec& x) const = 0;
    // (J(z)^T)^{-1} x
    virtual Vec solve_jac_transpose(const Vec& z, const Vec& x) const = 0;
    virtual Mat jacobian(const Vec& z) const = 0;
    virtual std::unique_ptr<FlowLayer> clone() const = 0;
};

class PlanarLayer final : public FlowLayer {
public:
    PlanarLayer(Vec u, Vec w, double b, Nonlinearity h)
        : u_(std::move(u)), w_(std::move(w)), b_(b), h_(std::move(h)) {
        if (u_.size() != w_.size() || u_.size() == 0)
            throw ContractViolation("PlanarLayer: u and w must share a positive dimension");
        c_ = u_.dot(w_);
        const double worst = 1.0 + std::min(c_ * h_.deriv_lo, c_ * h_.deriv_hi);
        if (!(worst > 1e-9))
            throw InvertibilityViolation(
                "PlanarLayer: 1 + u.w h' can reach " + std::to_string(worst));
    }

    // 1D convenience.
    PlanarLayer(double u, double w, double b, Nonlinearity h)
        : PlanarLayer(scalar_vec(u), scalar_vec(w), b, std::move(h)) {}

    LayerKind layer_kind() const override { return LayerKind::planar; }
    int dim() const override { return static_cast<int>(u_.size()); }

    Vec forward(const Vec& z) const override { return z + u_ * h_.h(w_.dot(z) + b_); }

    Vec inverse(const Vec& y) const override {
        const double t = w_.dot(y) + b_;
        if (u_.isZero(0.0)) return y;
        if (c_ == 0.0) return y - u_ * h_.h(t);
        if (h_.is_relu()) {
            if (t <= 0.0) return y;
            return y - u_ * (t / (1.0 + c_));
        }
        const double s = solve_preactivation(t);
        return y - u_ * h_.h(s);
    }

    double log_det_jacobian(const Vec& z) const override {
        const double factor = c_ * h_.dh(w_.dot(z) + b_);
        if (!(factor > -1.0))
            throw InvertibilityViolation("PlanarLayer: det factor " +
                                         std::to_string(1.0 + factor) + " is not positive");
        return std::log1p(factor);
    }

    Vec grad_log_det_jacobian(const Vec& z) const override {
        const double s = w_.dot(z) + b_;
        if (h_.is_relu()) {
            if (std::abs(s) < 1e-8 * (1.0 + z.norm()))
                throw NonSmoothPoint("PlanarLayer: point lies on the activation hyperplane");
            return Vec::Zero(dim());
        }
        const double dp = h_.dh(s);
        return (c_ * h_.d2h(s) / (1.0 + c_ * dp)) * w_;
    }

    Vec apply_jac_transpose(const Vec& z, const Vec& x) const override {
        const double dp = h_.dh(w_.dot(z) + b_);
        return x + w_ * (dp * u_.dot(x));
    }

    Vec solve_jac_transpose(const Vec& z, const Vec& x) const override {
        const double dp = h_.dh(w_.dot(z) + b_);
        return x - w_ * (dp * u_.dot(x) / (1.0 + c_ * dp));
    }

    Mat jacobian(const Vec& z) const override {
        return Mat::Identity(dim(), dim()) + h_.dh(w_.dot(z) + b_) * (u_ * w_.transpose());
    }

    std::unique_ptr<FlowLayer> clone() const override {
        return std::make_unique<PlanarLayer>(*this);
    }

    const Vec& u() const { return u_; }
    const Vec& w() const { return w_; }
    double b() const { return b_; }
    const Nonlinearity& nonlinearity() const { return h_; }
    double u_dot_w() const { return c_; }

private:
    static Vec scalar_vec(double x) {
        Vec v(1);
        v[0] = x;
        return v;
    }

    // Solve s + (u.w) h(s) = t for the preactivation s of the source point.
    double solve_preactivation(double t) const {
        double lo;
        double hi;
        if (h_.bounded) {
            const double e1 = c_ * h_.h_lo;
            const double e2 = c_ * h_.h_hi;
            lo = t - std::max(e1, e2) - 1e-9 * (1.0 + std::abs(t));
            hi = t - std::min(e1, e2) + 1e-9 * (1.0 + std::abs(t));
        } else {
            double half = 1.0 + std::abs(t);
            lo = t - half;
            hi = t + half;
            auto psi = [&](double s) { return s + c_ * h_.h(s) - t; };
            for (int i = 0; i < 200 && psi(lo) > 0.0; ++i) {
                half *= 2.0;
                lo = t - half;
            }
            for (int i = 0; i < 200 && psi(hi) < 0.0; ++i) {
                half *= 2.0;
                hi = t + half;
            }
        }
        const auto res = solve_bracketed_newton(
            [&](double s) { return s + c_ * h_.h(s) - t; },
            [&](double s) { return 1.0 + c_ * h_.dh(s); }, lo, hi, t, 1e-14, 100);
        if (!res.converged)
            throw NumericFailure("PlanarLayer: inverse solve did not converge in 100 iterations");
        return res.x;
    }

    Vec u_;
    Vec w_;
    double b_;
    Nonlinearity h_;
    double c_ = 0.0;
};

class SylvesterLayer final : public FlowLayer {
public:
    SylvesterLayer(Mat A, Mat B, Vec b, Nonlinearity h)
        : A_(std::move(A)), B_(std::move(B)), b_(std::move(b)), h_(std::move(h)) {
        if (A_.rows() != B_.rows() || A_.cols() != B_.cols() || A_.rows() == 0)
            throw ContractViolation("SylvesterLayer: A and B must share shape d x m");
        if (b_.size() != A_.cols())
            throw ContractViolation("SylvesterLayer: bias must have length m");
        if (!(A_.cols() < A_.rows()))
            throw ContractViolation("SylvesterLayer: need m < d");
        C_ = B_.transpose() * A_;
        const Eigen::JacobiSVD<Mat> svd(C_);
        C_norm2_ = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
        if (h_.is_relu()) {
            if (rank() > 12)
                throw ContractViolation(
                    "SylvesterLayer: ReLU inversion enumerates 2^m patterns; m capped at 12");
            const int m = rank();
            for (int mask = 0; mask < (1 << m); ++mask) {
                Mat M = Mat::Identity(m, m);
                for (int i = 0; i < m; ++i)
                    if (mask & (1 << i)) M += C_.col(i) * Mat::Identity(m, m).row(i);
                const double det = M.partialPivLu().determinant();
                if (!(det > 1e-12))
                    throw InvertibilityViolation(
                        "SylvesterLayer: det(I + C diag(pattern)) is not positive for some "
                        "activation pattern");
            }
        } else {
            const double sup = std::max(std::abs(h_.deriv_lo), std::abs(h_.deriv_hi));
            if (!(sup * C_norm2_ <= 1.0 - 1e-9))
                throw InvertibilityViolation(
                    "SylvesterLayer: sup|h'| * ||B^T A||_2 = " +
                    std::to_string(sup * C_norm2_) + " must stay below 1");
        }
    }

    LayerKind layer_kind() const override { return LayerKind::sylvester; }
    int dim() const override { return static_cast<int>(A_.rows()); }
    int rank() const { return static_cast<int>(A_.cols()); }

    Vec forward(const Vec& z) const override {
        const Vec t = B_.transpose() * z + b_;
        return z + A_ * apply_h(t);
    }

    Vec inverse(const Vec& y) const override {
        const Vec r = B_.transpose() * y + b_;
        const Vec t = h_.is_relu() ? invert_relu(r) : invert_smooth(r);
        return y - A_ * apply_h(t);
    }

    double log_det_jacobian(const Vec& z) const override {
        const Vec t = B_.transpose() * z + b_;
        const Mat M = Mat::Identity(rank(), rank()) + apply_dh(t).asDiagonal() * C_;
        const double det = M.partialPivLu().determinant();
        if (!(det > 0.0))
            throw InvertibilityViolation("SylvesterLayer: det factor " + std::to_string(det) +
                                         " is not positive");
        return std::log(det);
    }

    Vec grad_log_det_jacobian(const Vec& z) const override {
        const Vec t = B_.transpose() * z + b_;
        if (h_.is_relu()) {
            const double margin = 1e-8 * (1.0 + z.norm());
            for (int i = 0; i < t.size(); ++i)
                if (std::abs(t[i]) < margin)
                    throw NonSmoothPoint("SylvesterLayer: point lies on activation hyperplane " +
                                         std::to_string(i));
            return Vec::Zero(dim());
        }
        const int m = rank();
        const Mat M = Mat::Identity(m, m) + apply_dh(t).asDiagonal() * C_;
        const Mat CMinv = C_ * M.inverse();
        Vec g(m);
        for (int j = 0; j < m; ++j) g[j] = h_.d2h(t[j]) * CMinv(j, j);
        return B_ * g;
    }

    Vec apply_jac_transpose(const Vec& z, const Vec& x) const override {
        const Vec t = B_.transpose() * z + b_;
        return x + B_ * (apply_dh(t).cwiseProduct(A_.transpose() * x));
    }

    Vec solve_jac_transpose(const Vec& z, const Vec& x) const override {
        const Vec t = B_.transpose() * z + b_;
        const Vec dp = apply_dh(t);
        const int m = rank();
        const Mat K = Mat::Identity(m, m) + C_.transpose() * dp.asDiagonal();
        const Vec w = K.partialPivLu().solve(A_.transpose() * x);
        return x - B_ * dp.cwiseProduct(w);
    }

    Mat jacobian(const Vec& z) const override {
        const Vec t = B_.transpose() * z + b_;
        return Mat::Identity(dim(), dim()) + A_ * apply_dh(t).asDiagonal() * B_.transpose();
    }

    std::unique_ptr<FlowLayer> clone() const override {
        return std::make_unique<SylvesterLayer>(*this);
    }

    const Mat& A() const { return A_; }
    const Mat& B() const { return B_; }
    const Vec& bias() const { return b_; }
    const Nonlinearity& nonlinearity() const { return h_; }
    const Mat& coupling() const { return C_; }
    double coupling_norm2() const { return C_norm2_; }

private:
    Vec apply_h(const Vec& t) const {
        Vec out(t.size());
        for (int i = 0; i < t.size(); ++i) out[i] = h_.h(t[i]);
        return out;
    }

    Vec apply_dh(const Vec& t) const {
        Vec out(t.size());
        for (int i = 0; i < t.size(); ++i) out[i] = h_.dh(t[i]);
        return out;
    }

    // Newton on F(t) = t + C h(t) - r with a fixed-point fallback; the
    // invertibility guard makes t -> r - C h(t) a contraction.
    Vec invert_smooth(const Vec& r) const {
        const int m = rank();
        Vec t = r;
        const double tol = 1e-13 * (1.0 + r.lpNorm<Eigen::Infinity>());
        for (int it = 0; it < 100; ++it) {
            const Vec F = t + C_ * apply_h(t) - r;
            if (F.lpNorm<Eigen::Infinity>() <= tol) return t;
            const Mat JF = Mat::Identity(m, m) + C_ * apply_dh(t).asDiagonal();
            const Vec t_newton = t - JF.partialPivLu().solve(F);
            const Vec F_newton = t_newton + C_ * apply_h(t_newton) - r;
            if (F_newton.lpNorm<Eigen::Infinity>() < F.lpNorm<Eigen::Infinity>())
                t = t_newton;
            else
                t = r - C_ * apply_h(t);
        }
        throw NumericFailure("SylvesterLayer: inverse solve did not converge in 100 iterations");
    }

    // Enumerate ReLU activation patterns; the guard guarantees a unique
    // consistent one.
    Vec invert_relu(const Vec& r) const {
        const int m = rank();
        const double slack = 1e-12 * (1.0 + r.lpNorm<Eigen::Infinity>());
        for (int mask = 0; mask < (1 << m); ++mask) {
            Mat M = Mat::Identity(m, m);
            for (int i = 0; i < m; ++i)
                if (mask & (1 << i)) M += C_.col(i) * Mat::Identity(m, m).row(i);
            const Vec t = M.partialPivLu().solve(r);
            bool ok = true;
            for (int i = 0; i < m && ok; ++i) {
                if (mask & (1 << i))
                    ok = t[i] >= -slack;
                else
                    ok = t[i] <= slack;
            }
            if (ok) return t;
        }
        throw NumericFailure("SylvesterLayer: no consistent ReLU activation pattern found");
    }

    Mat A_;
    Mat B_;
    Vec b_;
    Nonlinearity h_;
    Mat C_;
    double C_norm2_ = 0.0;
};

class RadialLayer final : public FlowLayer {
public:
    RadialLayer(double a, double b, Vec z0) : a_(a), b_(b), z0_(std::move(z0)) {
        if (!(a_ > 0.0)) throw InvertibilityViolation("RadialLayer: need a > 0");
        if (!(a_ + b_ > 0.0))
            throw InvertibilityViolation("RadialLayer: need 1 + b/a > 0");
        if (z0_.size() == 0) throw ContractViolation("RadialLayer: empty center");
    }

    LayerKind layer_kind() const override { return LayerKind::radial; }
    int dim() const override { return static_cast<int>(z0_.size()); }

    Vec forward(const Vec& z) const override {
        const Vec d = z - z0_;
        return z + (b_ / (a_ + d.norm())) * d;
    }

    Vec inverse(const Vec& y) const override {
        const Vec d = y - z0_;
        const double s = d.norm();
        if (s == 0.0) return z0_;
        const double B2 = a_ + b_ - s;
        double r;
        if (B2 <= 0.0)
            r = 0.5 * (-B2 + std::sqrt(B2 * B2 + 4.0 * a_ * s));
        else
            r = 2.0 * a_ * s / (std::sqrt(B2 * B2 + 4.0 * a_ * s) + B2);
        r -= (r * (a_ + r + b_) / (a_ + r) - s) / eta(r);
        r = std::max(r, 0.0);
        return z0_ + (r / s) * d;
    }

    double log_det_jacobian(const Vec& z) const override {
        const double r = (z - z0_).norm();
        return (dim() - 1) * std::log(beta(r)) + std::log(eta(r));
    }

    Vec grad_log_det_jacobian(const Vec& z) const override {
        const Vec d = z - z0_;
        const double r = d.norm();
        if (b_ == 0.0) return Vec::Zero(dim());
        if (r < 1e-13 * (1.0 + z0_.norm()))
            throw NonSmoothPoint("RadialLayer: log-det gradient undefined at the center");
        const double ar = a_ + r;
        const double beta_p = -b_ / (ar * ar);
        const double eta_p = -2.0 * a_ * b_ / (ar * ar * ar);
        const double coef = (dim() - 1) * beta_p / beta(r) + eta_p / eta(r);
        return (coef / r) * d;
    }

    Vec apply_jac_transpose(const Vec& z, const Vec& x) const override {
        const Vec d = z - z0_;
        const double r = d.norm();
        if (r == 0.0) return (1.0 + b_ / a_) * x;
        return beta(r) * x - rank_coef(r) * d * d.dot(x);
    }

    Vec solve_jac_transpose(const Vec& z, const Vec& x) const override {
        const Vec d = z - z0_;
        const double r = d.norm();
        if (r == 0.0) return x / (1.0 + b_ / a_);
        const double bet = beta(r);
        return x / bet + (rank_coef(r) / (bet * eta(r))) * d * d.dot(x);
    }

    Mat jacobian(const Vec& z) const override {
        const Vec d = z - z0_;
        const double r = d.norm();
        if (r == 0.0) return (1.0 + b_ / a_) * Mat::Identity(dim(), dim());
        return beta(r) * Mat::Identity(dim(), dim()) - rank_coef(r) * (d * d.transpose());
    }

    std::unique_ptr<FlowLayer> clone() const override {
        return std::make_unique<RadialLayer>(*this);
    }

    double a() const { return a_; }
    double b() const { return b_; }
    const Vec& z0() const { return z0_; }
    double beta(double r) const { return 1.0 + b_ / (a_ + r); }
    double eta(double r) const { return 1.0 + a_ * b_ / ((a_ + r) * (a_ + r)); }

private:
    double rank_coef(double r) const { return b_ / ((a_ + r) * (a_ + r) * r); }

    double a_;
    double b_;
    Vec z0_;
};

class HouseholderLayer final : public FlowLayer {
public:
    explicit HouseholderLayer(Vec v) : v_(std::move(v)) {
        if (v_.size() == 0) throw ContractViolation("HouseholderLayer: empty vector");
        if (std::abs(v_.norm() - 1.0) > 1e-12)
            throw ContractViolation("HouseholderLayer: v must be a unit vector within 1e-12");
    }

    LayerKind layer_kind() const override { return LayerKind::householder; }
    int dim() const override { return static_cast<int>(v_.size()); }

    Vec forward(const Vec& z) const override { return z - 2.0 * v_ * v_.dot(z); }
    Vec inverse(const Vec& y) const override { return forward(y); }

    double log_det_jacobian(const Vec&) const override { return 0.0; }

    Vec grad_log_det_jacobian(const Vec&) const override { return Vec::Zero(dim()); }

    Vec apply_jac_transpose(const Vec&, const Vec& x) const override {
        return x - 2.0 * v_ * v_.dot(x);
    }

    Vec solve_jac_transpose(const Vec&, const Vec& x) const override {
        return x - 2.0 * v_ * v_.dot(x);
    }

    Mat jacobian(const Vec&) const override {
        return Mat::Identity(dim(), dim()) - 2.0 * (v_ * v_.transpose());
    }

    std::unique_ptr<FlowLayer> clone() const override {
        return std::make_unique<HouseholderLayer>(*this);
    }

    const Vec& v() const { return v_; }

private:
    Vec v_;
};

} // namespace flowcap
