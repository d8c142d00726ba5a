#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "flowcap/flow_stack.hpp"

namespace flowcap {

// Two ReLU planar layers composing exactly to z -> (I + u w^T) z. Requires
// 1 + u.w > 0 so the hinge half-spaces stay aligned under the map.
inline FlowStack rank_one_gadget(const Vec& u, const Vec& w) {
    if (u.size() != w.size() || u.size() == 0)
        throw ContractViolation("rank_one_gadget: u and w must share a nonzero dimension");
    const double c = u.dot(w);
    if (!(1.0 + c > 0.0))
        throw HypothesisViolation("rank_one_gadget: need 1 + u.w > 0, got 1 + " +
                                  std::to_string(c));
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(u, w, 0.0, Nonlinearity::relu()));
    stack.add<PlanarLayer>(PlanarLayer(-u, -w, 0.0, Nonlinearity::relu()));
    return stack;
}

struct LinearCompileResult {
    FlowStack stack;
    std::size_t planar_count = 0;
    std::size_t householder_count = 0;
    Vec shift;                     // affine part, applied outside the stack
    std::size_t split_factors = 0; // elementary factors split to satisfy the guard
    bool pivoted = false;          // signed-permutation (LUP) path taken
    std::string note;
};

namespace detail {

// Doolittle LU without pivoting. Returns false when a pivot falls below tol
// in magnitude.
inline bool lu_nopivot(const Mat& A, Mat& L, Mat& U, double tol) {
    const auto d = A.rows();
    L = Mat::Identity(d, d);
    U = Mat::Zero(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index j = k; j < d; ++j) {
            double s = A(k, j);
            for (Eigen::Index i = 0; i < k; ++i) s -= L(k, i) * U(i, j);
            U(k, j) = s;
        }
        if (!(std::abs(U(k, k)) > tol)) return false;
        for (Eigen::Index i = k + 1; i < d; ++i) {
            double s = A(i, k);
            for (Eigen::Index j = 0; j < k; ++j) s -= L(i, j) * U(j, k);
            L(i, k) = s / U(k, k);
        }
    }
    return true;
}

// Emits gadget layers realizing the elementary factor I + u e_k^T. A factor
// whose diagonal entry 1 + u[k] is positive but below 1e-6 is split into
// (I + a e_k^T)(I + beta e_k e_k^T) with 1 + beta = sqrt(1 + u[k]) so both
// parts clear the invertibility guard.
inline void emit_elementary(FlowStack& stack, const Vec& u, Eigen::Index k,
                            std::size_t& planar_count, std::size_t& split_factors) {
    if (u.isZero(0.0)) return;
    const auto d = u.size();
    Vec e = Vec::Zero(d);
    e[k] = 1.0;
    const double pivot = 1.0 + u[k];
    if (pivot > 1e-6) {
        stack.append(rank_one_gadget(u, e));
        planar_count += 2;
        return;
    }
    if (!(pivot > 0.0))
        throw HypothesisViolation(
            "compile_linear: elementary factor has nonpositive determinant " +
            std::to_string(pivot));
    const double root = std::sqrt(pivot);
    Vec b = Vec::Zero(d);
    b[k] = root - 1.0;
    Vec a = u;
    a[k] -= root - 1.0;
    a /= root;
    stack.append(rank_one_gadget(b, e));
    stack.append(rank_one_gadget(a, e));
    planar_count += 4;
    ++split_factors;
}

// Greedy Householder decomposition of an orthogonal matrix: reflect column j
// onto e_j until Q becomes the identity. Returned vectors are in stack
// (application) order: the first one acts on z first.
inline std::vector<Vec> reflections_for_orthogonal(Mat Q, double tol = 1e-12) {
    const auto d = Q.rows();
    std::vector<Vec> vs;
    for (Eigen::Index j = 0; j < d; ++j) {
        Vec col = Q.col(j);
        col[j] -= 1.0;
        const double nrm = col.norm();
        if (nrm <= tol) continue;
        Vec v = col / nrm;
        Q -= v * (2.0 * (v.transpose() * Q));
        vs.push_back(std::move(v));
    }
    std::reverse(vs.begin(), vs.end());
    return vs;
}

} // namespace detail

// Compiles an invertible linear map z -> A z into ReLU planar gadgets.
// A positive-pivot LU regrouped as A = (L D')(D'^{-1} U) with
// D' = diag(pivot_1 .. pivot_{d-1}, 1) yields exactly 2(d-1) elementary
// factors, hence 4d-4 planar layers; if that factorization does not exist, a
// signed permutation is peeled off first and realized as d Householder
// reflections.
inline LinearCompileResult compile_linear(const Mat& A) {
    const auto d = A.rows();
    if (d == 0 || A.cols() != d) throw ContractViolation("compile_linear: A must be square");
    const double scale = A.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) throw ContractViolation("compile_linear: matrix is singular");
    Eigen::FullPivLU<Mat> full(A);
    if (std::abs(full.determinant()) <= 1e-12 * std::pow(scale, static_cast<double>(d)))
        throw ContractViolation("compile_linear: matrix is singular");

    LinearCompileResult out;
    out.shift = Vec::Zero(d);

    // The pivot regroup below needs d >= 2; one dimension is a direct gadget.
    if (d == 1) {
        const double a = A(0, 0);
        if (a < 0.0) {
            out.stack.add<HouseholderLayer>(HouseholderLayer(Vec::Ones(1)));
            out.householder_count = 1;
            out.pivoted = true;
        }
        const double mag = std::abs(a);
        if (mag != 1.0) {
            Vec u(1), w(1);
            u[0] = mag - 1.0;
            w[0] = 1.0;
            out.stack.append(rank_one_gadget(u, w));
            out.planar_count = 2;
        }
        out.note = "one-dimensional scaling gadget";
        return out;
    }

    const double pivot_tol = 1e-9 * scale;
    Mat L, U;
    std::vector<Vec> reflections;
    if (!detail::lu_nopivot(A, L, U, pivot_tol) || (U.diagonal().array() <= 0.0).any()) {
        // Peel off Q so that Q^T A has a positive-pivot LU: partial-pivot LU
        // gives P A = L U, and flipping the rows with negative pivots makes
        // them positive. Q = P^T D_sign is orthogonal.
        Eigen::PartialPivLU<Mat> plu(A);
        const Mat P = plu.permutationP();
        const Mat PA = P * A;
        Mat L2, U2;
        if (!detail::lu_nopivot(PA, L2, U2, pivot_tol))
            throw NumericFailure("compile_linear: pivoted factorization still degenerate");
        Vec signs(d);
        for (Eigen::Index i = 0; i < d; ++i) signs[i] = U2(i, i) > 0.0 ? 1.0 : -1.0;
        const Mat Q = P.transpose() * Mat(signs.asDiagonal());
        const Mat work = signs.asDiagonal() * PA;
        if (!detail::lu_nopivot(work, L, U, pivot_tol))
            throw NumericFailure("compile_linear: sign-fixed factorization degenerate");
        reflections = detail::reflections_for_orthogonal(Q);
        // A product of k reflections has determinant (-1)^k, so k already has
        // the right parity; pad with cancelling pairs up to d when possible.
        Vec pad = Vec::Zero(d);
        pad[0] = 1.0;
        while (reflections.size() + 2 <= static_cast<std::size_t>(d)) {
            reflections.push_back(pad);
            reflections.push_back(pad);
        }
        if (reflections.size() != static_cast<std::size_t>(d))
            out.note = "permutation parity admits " + std::to_string(reflections.size()) +
                       " reflections, not " + std::to_string(d);
        out.pivoted = true;
    }

    // Regroup the pivots: L' = L diag(p_1..p_{d-1}, 1) keeps its last column
    // trivial, U' = diag(p_1..p_{d-1}, 1)^{-1} U keeps its first column
    // trivial, so each side contributes d-1 elementary factors.
    const Vec piv = U.diagonal();
    Mat Lp = L;
    Mat Up = U;
    for (Eigen::Index k = 0; k + 1 < d; ++k) {
        Lp.col(k) *= piv[k];
        Up.row(k) /= piv[k];
    }

    // z -> A z applies U' factors first (columns 2..d in increasing order),
    // then L' factors (columns d-1..1 in decreasing order).
    for (Eigen::Index k = 1; k < d; ++k) {
        Vec u = Vec::Zero(d);
        for (Eigen::Index i = 0; i < k; ++i) u[i] = Up(i, k);
        u[k] = Up(k, k) - 1.0;
        detail::emit_elementary(out.stack, u, k, out.planar_count, out.split_factors);
    }
    for (Eigen::Index k = d - 2; k >= 0; --k) {
        Vec u = Vec::Zero(d);
        u[k] = Lp(k, k) - 1.0;
        for (Eigen::Index i = k + 1; i < d; ++i) u[i] = Lp(i, k);
        detail::emit_elementary(out.stack, u, k, out.planar_count, out.split_factors);
    }

    for (const Vec& v : reflections) {
        out.stack.add<HouseholderLayer>(HouseholderLayer(v));
        ++out.householder_count;
    }
    return out;
}

// Compiles the linear map pushing N(0, sigma_q) onto N(0, sigma_p):
// M = V_p L_p^{1/2} L_q^{-1/2} V_q^T with descending eigenpairs and
// largest-component-positive eigenvector signs.
inline LinearCompileResult gaussian_bridge(const Mat& sigma_q, const Mat& sigma_p) {
    const auto d = sigma_q.rows();
    if (sigma_p.rows() != d || sigma_q.cols() != d || sigma_p.cols() != d || d == 0)
        throw ContractViolation("gaussian_bridge: dimension mismatch");
    auto eig_desc = [](const Mat& S, Mat& V, Vec& lam) {
        if (!S.isApprox(S.transpose(), 1e-12))
            throw ContractViolation("gaussian_bridge: covariance must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        if (es.info() != Eigen::Success)
            throw NumericFailure("gaussian_bridge: eigendecomposition failed");
        if (!(es.eigenvalues().minCoeff() > 0.0))
            throw ContractViolation("gaussian_bridge: covariance must be positive definite");
        const auto n = S.rows();
        V.resize(n, n);
        lam.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            lam[i] = es.eigenvalues()[n - 1 - i];
            Vec v = es.eigenvectors().col(n - 1 - i);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v[arg] < 0.0) v = -v;
            V.col(i) = v;
        }
    };
    Mat Vq, Vp;
    Vec lq, lp;
    eig_desc(sigma_q, Vq, lq);
    eig_desc(sigma_p, Vp, lp);
    const Mat M = Vp * lp.cwiseSqrt().asDiagonal() *
                  lq.cwiseSqrt().cwiseInverse().asDiagonal() * Vq.transpose();
    if (M.isApprox(Mat::Identity(d, d), 1e-12)) {
        LinearCompileResult out;
        out.shift = Vec::Zero(d);
        out.note = "identity transport";
        return out;
    }
    return compile_linear(M);
}

} // namespace flowcap
