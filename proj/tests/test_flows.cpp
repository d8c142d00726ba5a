#include <catch2/catch_amalgamated.hpp>

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/flow_layer.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/quadrature.hpp"

using namespace flowcap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Mat numeric_jacobian(const FlowLayer& layer, const Vec& z, double h = 1e-6) {
    const auto d = z.size();
    Mat J(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        Vec hi = z, lo = z;
        hi[j] += h;
        lo[j] -= h;
        J.col(j) = (layer.forward(hi) - layer.forward(lo)) / (2.0 * h);
    }
    return J;
}

void check_layer_calculus(const FlowLayer& layer, const Vec& z) {
    const Mat J = layer.jacobian(z);
    const Mat Jn = numeric_jacobian(layer, z);
    CHECK_THAT((J - Jn).norm(), WithinAbs(0.0, 1e-5 * (1.0 + J.norm())));
    CHECK_THAT(layer.log_det_jacobian(z),
               WithinAbs(std::log(std::abs(J.determinant())), 1e-8));

    Vec x = Vec::LinSpaced(z.size(), 0.3, 1.1);
    CHECK_THAT((layer.apply_jac_transpose(z, x) - J.transpose() * x).norm(),
               WithinAbs(0.0, 1e-10 * (1.0 + x.norm())));
    CHECK_THAT((layer.solve_jac_transpose(z, layer.apply_jac_transpose(z, x)) - x).norm(),
               WithinAbs(0.0, 1e-9 * (1.0 + x.norm())));
}

} // namespace

TEST_CASE("planar layers round trip and differentiate") {
    Rng rng(101);
    for (const char* name : {"relu", "tanh", "sigmoid", "arctan"}) {
        for (int d : {1, 2, 4, 8}) {
            for (int rep = 0; rep < 20; ++rep) {
                const Vec u = 0.7 * rng.normal_vec(d);
                const Vec w = 0.7 * rng.normal_vec(d);
                const double b = rng.uniform(-1.0, 1.0);
                if (1.0 + u.dot(w) <= 1e-6) continue;
                PlanarLayer layer(u, w, b, Nonlinearity::by_name(name));
                const Vec z = 2.0 * rng.normal_vec(d);
                Vec y;
                try {
                    y = layer.forward(z);
                } catch (const InvertibilityViolation&) {
                    continue;
                }
                const Vec back = layer.inverse(y);
                CHECK_THAT((back - z).norm(), WithinAbs(0.0, 1e-9 * (1.0 + z.norm())));
                try {
                    check_layer_calculus(layer, z);
                } catch (const NonSmoothPoint&) {
                }
            }
        }
    }
}

TEST_CASE("planar invertibility guard rejects collapsing parameters") {
    Vec u(2), w(2);
    u << -2.0, 0.0;
    w << 1.0, 0.0; // 1 + u.w = -1
    CHECK_THROWS_AS(PlanarLayer(u, w, 0.0, Nonlinearity::relu()), InvertibilityViolation);
}

TEST_CASE("planar relu derivative is exact on both sides of the hinge") {
    PlanarLayer layer(0.5, 1.0, -1.0, Nonlinearity::relu());
    Vec below(1), above(1);
    below << 0.0;
    above << 2.0;
    CHECK_THAT(layer.log_det_jacobian(below), WithinAbs(0.0, 1e-15));
    CHECK_THAT(layer.log_det_jacobian(above), WithinRel(std::log(1.5), 1e-12));
    Vec on(1);
    on << 1.0;
    CHECK_THROWS_AS(layer.grad_log_det_jacobian(on), NonSmoothPoint);
}

TEST_CASE("sylvester layers round trip for smooth and relu activations") {
    Rng rng(202);
    for (const bool relu : {false, true}) {
        for (int d : {3, 4, 8}) {
            const int m = d / 2;
            for (int rep = 0; rep < 15; ++rep) {
                const Mat A = 0.3 * Mat::NullaryExpr(d, m, [&](Eigen::Index, Eigen::Index) {
                    return rng.normal();
                });
                const Mat B = 0.3 * Mat::NullaryExpr(d, m, [&](Eigen::Index, Eigen::Index) {
                    return rng.normal();
                });
                const Vec b = rng.normal_vec(m);
                std::unique_ptr<SylvesterLayer> layer;
                try {
                    layer = std::make_unique<SylvesterLayer>(
                        A, B, b, relu ? Nonlinearity::relu() : Nonlinearity::tanh_fn());
                } catch (const InvertibilityViolation&) {
                    continue;
                }
                const Vec z = 2.0 * rng.normal_vec(d);
                const Vec y = layer->forward(z);
                CHECK_THAT((layer->inverse(y) - z).norm(),
                           WithinAbs(0.0, 1e-9 * (1.0 + z.norm())));
                try {
                    check_layer_calculus(*layer, z);
                } catch (const NonSmoothPoint&) {
                }
            }
        }
    }
    CHECK_THROWS_AS(SylvesterLayer(Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Zero(2),
                                   Nonlinearity::tanh_fn()),
                    ContractViolation); // needs m < d
}

TEST_CASE("sylvester guard rejects overwhelming coupling") {
    Mat A = Mat::Zero(3, 1), B = Mat::Zero(3, 1);
    A(0, 0) = -2.0;
    B(0, 0) = 1.0; // C = -2, sup |h'| * ||C|| = 2 > 1
    CHECK_THROWS_AS(SylvesterLayer(A, B, Vec::Zero(1), Nonlinearity::tanh_fn()),
                    InvertibilityViolation);
}

TEST_CASE("radial layers invert through the closed-form radius solve") {
    Rng rng(303);
    for (int d : {1, 2, 4, 8, 16}) {
        for (int rep = 0; rep < 25; ++rep) {
            const double a = std::exp(rng.uniform(-1.0, 1.0));
            const double b = rng.uniform(-0.9, 3.0) * a;
            const Vec z0 = rng.normal_vec(d);
            const RadialLayer layer(a, b, z0);
            const Vec z = z0 + 3.0 * rng.normal_vec(d);
            const Vec y = layer.forward(z);
            CHECK_THAT((layer.inverse(y) - z).norm(), WithinAbs(0.0, 1e-9 * (1.0 + z.norm())));
            check_layer_calculus(layer, z);
        }
    }
    CHECK_THROWS_AS(RadialLayer(-1.0, 0.0, Vec::Zero(2)), InvertibilityViolation);
    CHECK_THROWS_AS(RadialLayer(1.0, -1.5, Vec::Zero(2)), InvertibilityViolation);
}

TEST_CASE("radial beta and eta factors match their definitions") {
    const RadialLayer layer(1.0, 0.5, Vec::Zero(2));
    const double r = 2.0;
    CHECK_THAT(layer.beta(r), WithinRel(1.0 + 0.5 / 3.0, 1e-14));
    CHECK_THAT(layer.eta(r), WithinRel(1.0 + 1.0 * 0.5 / 9.0, 1e-14));
    Vec z(2);
    z << 2.0, 0.0;
    const Mat J = layer.jacobian(z);
    CHECK_THAT(std::exp(layer.log_det_jacobian(z)),
               WithinRel(std::pow(layer.beta(r), 1.0) * layer.eta(r), 1e-11));
    CHECK_THAT(J.determinant(), WithinRel(layer.beta(r) * layer.eta(r), 1e-11));
}

TEST_CASE("householder layers are volume-preserving involutions") {
    Rng rng(404);
    for (int d : {2, 4, 8, 16}) {
        const Vec v = rng.unit_vec(d);
        const HouseholderLayer layer(v);
        const Vec z = rng.normal_vec(d);
        CHECK_THAT((layer.forward(layer.forward(z)) - z).norm(),
                   WithinAbs(0.0, 1e-12 * (1.0 + z.norm())));
        CHECK(layer.log_det_jacobian(z) == 0.0);
        CHECK_THAT((layer.inverse(z) - layer.forward(z)).norm(), WithinAbs(0.0, 1e-13));
        check_layer_calculus(layer, z);
    }
    Vec bad = Vec::Zero(3);
    bad[0] = 0.9;
    CHECK_THROWS_AS(HouseholderLayer(bad), ContractViolation);
}

TEST_CASE("flow stacks compose, clone, and reject dimension mismatches") {
    FlowStack stack;
    stack.add(PlanarLayer(0.5, 1.0, 0.0, Nonlinearity::tanh_fn()));
    stack.add(RadialLayer(1.0, 0.5, Vec::Zero(1)));
    CHECK(stack.size() == 2);
    CHECK(stack.dim() == 1);
    CHECK_THROWS_AS(stack.add(HouseholderLayer(Vec::Ones(2).normalized())),
                    ContractViolation);

    Vec z(1);
    z << 0.7;
    const auto [y, lad] = stack.forward_with_log_det(z);
    CHECK_THAT((stack.inverse(y) - z).norm(), WithinAbs(0.0, 1e-10));

    const FlowStack copy = stack;
    CHECK(copy.size() == 2);
    CHECK(copy.forward(z) == stack.forward(z));
}

TEST_CASE("pushforward density integrates to one and matches the recursion") {
    const auto base = std::make_shared<Gaussian1D>(0.0, 1.0);
    FlowStack stack;
    stack.add(PlanarLayer(0.8, 1.0, 0.2, Nonlinearity::tanh_fn()));
    stack.add(PlanarLayer(-0.4, 0.9, -0.1, Nonlinearity::sigmoid()));

    const PushforwardDensity1D push(base, stack);
    const double mass =
        integrate_adaptive([&](double x) { return push.density1(x); }, -12.0, 12.0, 1e-11);
    CHECK_THAT(mass, WithinAbs(1.0, 1e-8));

    Vec z(1);
    z << 0.4;
    const Vec y = stack.forward(z);
    const Vec g = stack.pushforward_grad_log_density(*base, y);
    const double h = 1e-6;
    Vec yh = y;
    yh[0] += h;
    Vec yl = y;
    yl[0] -= h;
    const double fd = (stack.pushforward_log_density(*base, yh) -
                       stack.pushforward_log_density(*base, yl)) /
                      (2.0 * h);
    CHECK_THAT(g[0], WithinAbs(fd, 1e-5));
}
