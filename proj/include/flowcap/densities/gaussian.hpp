#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "flowcap/density.hpp"

namespace flowcap {

class Gaussian1D final : public Density {
public:
    Gaussian1D(double mu, double sigma) : mu_(mu), sigma_(sigma) {
        if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu))
            throw ContractViolation("Gaussian1D: need finite mu and sigma > 0");
    }

    int dim() const override { return 1; }

    double log_density(const Vec& z) const override {
        const double t = (z[0] - mu_) / sigma_;
        return -0.5 * t * t - std::log(sigma_) - 0.5 * ln_2pi;
    }

    Vec grad_log_density(const Vec& z) const override {
        Vec g(1);
        g[0] = -(z[0] - mu_) / (sigma_ * sigma_);
        return g;
    }

    Vec sample(Rng& rng) const override {
        Vec z(1);
        z[0] = mu_ + sigma_ * rng.normal();
        return z;
    }

    double cdf1(double x) const override { return norm_cdf((x - mu_) / sigma_); }

    double quantile1(double u) const override {
        return mu_ + sigma_ * norm_quantile(u);
    }

    double mu() const { return mu_; }
    double sigma() const { return sigma_; }

private:
    double mu_;
    double sigma_;
};

class Gaussian final : public Density {
public:
    Gaussian(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
        const auto d = mean_.size();
        if (cov_.rows() != d || cov_.cols() != d)
            throw ContractViolation("Gaussian: covariance shape does not match mean");
        if (!cov_.isApprox(cov_.transpose(), 1e-12))
            throw ContractViolation("Gaussian: covariance must be symmetric");
        llt_.compute(cov_);
        if (llt_.info() != Eigen::Success)
            throw ContractViolation("Gaussian: covariance must be positive definite");
        log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }

    static Gaussian standard(int d) { return Gaussian(Vec::Zero(d), Mat::Identity(d, d)); }

    int dim() const override { return static_cast<int>(mean_.size()); }

    double log_density(const Vec& z) const override {
        const Vec r = z - mean_;
        const double quad = r.dot(llt_.solve(r));
        return -0.5 * (dim() * ln_2pi + log_det_ + quad);
    }

    Vec grad_log_density(const Vec& z) const override { return -llt_.solve(z - mean_); }

    Vec sample(Rng& rng) const override {
        return mean_ + llt_.matrixL() * rng.normal_vec(dim());
    }

    const Vec& mean() const { return mean_; }
    const Mat& cov() const { return cov_; }
    double log_det_cov() const { return log_det_; }
    Vec solve_cov(const Vec& r) const { return llt_.solve(r); }

private:
    Vec mean_;
    Mat cov_;
    Eigen::LLT<Mat> llt_;
    double log_det_ = 0.0;
};

} // namespace flowcap
