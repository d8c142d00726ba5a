#include <catch2/catch_amalgamated.hpp>

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/mixture.hpp"
#include "flowcap/rng.hpp"
#include "flowcap/topology.hpp"

using namespace flowcap;
using Catch::Matchers::ContainsSubstring;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

FlowStack relu_planar_stack_2d() {
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(v2(0.5, -0.3), v2(0.4, 0.2), 0.1, Nonlinearity::relu()));
    stack.add<PlanarLayer>(PlanarLayer(v2(-0.2, 0.6), v2(0.3, -0.5), -0.2, Nonlinearity::relu()));
    stack.add<PlanarLayer>(PlanarLayer(v2(0.3, 0.3), v2(-0.2, 0.4), 0.05, Nonlinearity::relu()));
    return stack;
}

DensityPtr four_peak_mog() {
    SharedCovMixture m;
    m.weights = {0.25, 0.25, 0.25, 0.25};
    m.means = {v2(2.0, 2.0), v2(2.0, -2.0), v2(-2.0, 2.0), v2(-2.0, -2.0)};
    m.cov = 0.3 * Mat::Identity(2, 2);
    return std::make_shared<Mixture>(m.to_mixture());
}

} // namespace

TEST_CASE("relu transport identity holds away from activation hyperplanes") {
    const FlowStack stack = relu_planar_stack_2d();
    const DensityPtr q = four_peak_mog();

    Rng rng(31);
    std::vector<Vec> points;
    for (int i = 0; i < 25; ++i) points.push_back(1.5 * rng.normal_vec(2));
    // A point placed exactly on the first layer's hyperplane must be excluded.
    const Vec w0 = v2(0.4, 0.2);
    points.push_back(Vec(-0.1 / w0.squaredNorm() * w0));

    const ResidualReport report = residual_relu(stack, *q, points);
    CHECK(report.excluded >= 1);
    CHECK(report.max_residual < 1e-10);
    bool saw_reason = false;
    for (const auto& e : report.entries)
        if (e.excluded &&
            e.reason.find("activation hyperplane proximity") != std::string::npos)
            saw_reason = true;
    CHECK(saw_reason);
}

TEST_CASE("relu residual check covers relu sylvester layers") {
    Mat A(3, 2), B(3, 2);
    A << 0.2, 0.0, 0.0, 0.2, 0.1, 0.1;
    B << 0.3, 0.1, 0.0, 0.2, 0.1, 0.0;
    Vec bias(2);
    bias << 0.1, -0.2;
    FlowStack stack;
    stack.add<SylvesterLayer>(SylvesterLayer(A, B, bias, Nonlinearity::relu()));

    const auto q = std::make_shared<Gaussian>(Vec::Zero(3), Mat::Identity(3, 3));
    Rng rng(32);
    std::vector<Vec> points;
    for (int i = 0; i < 20; ++i) points.push_back(rng.normal_vec(3));
    const ResidualReport report = residual_relu(stack, *q, points);
    CHECK(report.max_residual < 1e-10);
}

TEST_CASE("relu residual check rejects smooth layers") {
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(v2(0.5, 0.0), v2(0.5, 0.0), 0.0, Nonlinearity::tanh_fn()));
    const auto q = std::make_shared<Gaussian>(Vec::Zero(2), Mat::Identity(2, 2));
    CHECK_THROWS_WITH(residual_relu(stack, *q, {v2(0.0, 0.0)}),
                      ContainsSubstring("layer 0"));
}

TEST_CASE("smooth-stack gradient difference stays in the hinge span") {
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(v2(0.9, -0.6), v2(0.7, 0.4), 0.3, Nonlinearity::tanh_fn()));
    const auto q = std::make_shared<Gaussian>(Vec::Zero(2), Mat::Identity(2, 2));
    Rng rng(33);
    std::vector<Vec> points;
    for (int i = 0; i < 30; ++i) points.push_back(rng.normal_vec(2));
    const ResidualReport report = residual_span(stack, *q, points);
    CHECK_FALSE(report.vacuous);
    CHECK(report.max_residual < 1e-9);
}

TEST_CASE("smooth sylvester spans add their hinge columns") {
    Mat A(4, 2), B(4, 2);
    A << 0.2, 0.0, 0.0, 0.15, 0.1, 0.05, 0.0, 0.1;
    B << 0.25, 0.0, 0.1, 0.2, 0.0, 0.1, 0.05, 0.0;
    Vec bias(2);
    bias << 0.2, -0.1;
    FlowStack stack;
    stack.add<SylvesterLayer>(SylvesterLayer(A, B, bias, Nonlinearity::tanh_fn()));

    const auto q = std::make_shared<Gaussian>(Vec::Zero(4), Mat::Identity(4, 4));
    Rng rng(34);
    std::vector<Vec> points;
    for (int i = 0; i < 20; ++i) points.push_back(rng.normal_vec(4));
    const ResidualReport report = residual_span(stack, *q, points);
    CHECK_FALSE(report.vacuous);
    CHECK(report.max_residual < 1e-9);
}

TEST_CASE("span check turns vacuous when hinge directions fill the space") {
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(v2(0.3, 0.0), v2(1.0, 0.0), 0.0, Nonlinearity::tanh_fn()));
    stack.add<PlanarLayer>(PlanarLayer(v2(0.0, 0.3), v2(0.0, 1.0), 0.0, Nonlinearity::tanh_fn()));
    const auto q = std::make_shared<Gaussian>(Vec::Zero(2), Mat::Identity(2, 2));
    const ResidualReport report = residual_span(stack, *q, {v2(0.5, -0.5)});
    CHECK(report.vacuous);
    CHECK_FALSE(report.note.empty());
    CHECK(report.max_residual == 0.0);
}

TEST_CASE("radial combination is parallel to the center offset") {
    Vec z0(3);
    z0 << 0.3, -0.2, 0.1;
    const RadialLayer layer(1.0, 0.8, z0);
    const auto q = std::make_shared<Gaussian>(Vec::Zero(3), Mat::Identity(3, 3));
    Rng rng(35);
    std::vector<Vec> points;
    for (int i = 0; i < 30; ++i) points.push_back(rng.normal_vec(3));
    points.push_back(z0);

    const ResidualReport report = residual_radial(layer, *q, points);
    CHECK(report.excluded == 1);
    CHECK(report.entries.back().reason == "at the flow center");
    CHECK(report.max_residual < 1e-10);
}

TEST_CASE("mixture matching condition is constant under exact affine transport") {
    SharedCovMixture q;
    q.weights = {0.4, 0.6};
    q.means = {v2(0.0, 0.0), v2(2.0, 1.0)};
    q.cov = Mat(2, 2);
    q.cov << 1.0, 0.2, 0.2, 0.8;

    Mat A(2, 2);
    A << 1.5, 0.3, -0.2, 1.1;
    Vec b = v2(0.5, -1.0);

    SharedCovMixture p;
    p.weights = q.weights;
    for (const Vec& m : q.means) p.means.push_back(A * m + b);
    p.cov = A * q.cov * A.transpose();

    const ConstancyReport exact = mog_condition(p, q, A, b, v2(1.0, 0.5), 2.0, 80);
    CHECK(exact.n_points == 80);
    CHECK(exact.max_deviation < 1e-10);

    SharedCovMixture p_bad = p;
    p_bad.means[1] += v2(0.5, 0.0);
    const ConstancyReport broken = mog_condition(p_bad, q, A, b, v2(1.0, 0.5), 2.0, 80);
    CHECK(broken.max_deviation > 1e-3);

    CHECK_THROWS_AS(mog_condition(p, q, Mat::Zero(2, 2), b, v2(0.0, 0.0), 1.0),
                    ContractViolation);
}

TEST_CASE("product matching condition vanishes for scaled rotations") {
    const Func1D g = Func1D::gaussian_pdf();
    const double theta = 0.7;
    Mat R(2, 2);
    R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const Mat A = 0.5 * R; // r_p A^T A = r_q with r_p = 4, r_q = 1
    Rng rng(36);
    std::vector<Vec> points;
    for (int i = 0; i < 20; ++i) points.push_back(rng.normal_vec(2));

    const ResidualReport ok = prod_condition(g, 4.0, 1.0, A, Vec::Zero(2), points);
    CHECK(ok.max_residual < 1e-12);

    const ResidualReport off = prod_condition(g, 1.0, 1.0, A, Vec::Zero(2), points);
    CHECK(off.max_residual > 0.1);
}

TEST_CASE("product matching condition rejects nonpositive factor values") {
    const Func1D g = Func1D::identity();
    Mat A(2, 2);
    A << 2.0, 1.0, 0.0, 1.0;
    const ResidualReport fine =
        prod_condition(g, 1.0, 1.0, A, Vec::Zero(2), {v2(1.0, 2.0)});
    CHECK(fine.max_residual > 0.1);
    CHECK_THROWS_WITH(prod_condition(g, 1.0, 1.0, A, Vec::Zero(2), {v2(1.0, -1.0)}),
                      ContainsSubstring("coordinate 1"));
}

TEST_CASE("gaussian feasibility screens by covariance structure") {
    const Mat I3 = Mat::Identity(3, 3);

    Mat rank1 = I3;
    rank1(0, 0) = 1.5;
    const auto planar_ok = gaussian_feasibility(I3, rank1, FlowFamily::planar_smooth);
    CHECK_FALSE(planar_ok.ruled_out);
    CHECK_THAT(planar_ok.witness, ContainsSubstring("rank"));

    Mat rank2 = rank1;
    rank2(1, 1) = 1.3;
    const auto planar_no = gaussian_feasibility(I3, rank2, FlowFamily::planar_smooth);
    CHECK(planar_no.ruled_out);
    CHECK(planar_no.family == "planar-smooth");

    Mat sp = I3;
    sp(0, 0) = 2.0;
    sp(1, 1) = 2.0;
    const auto syl1 = gaussian_feasibility(I3, sp, FlowFamily::sylvester_smooth, 1);
    CHECK(syl1.ruled_out);
    CHECK_THAT(syl1.witness, ContainsSubstring("inertia"));
    const auto syl2 = gaussian_feasibility(I3, sp, FlowFamily::sylvester_smooth, 2);
    CHECK_FALSE(syl2.ruled_out);
    CHECK(syl2.family == "sylvester-smooth(2)");
    CHECK_THROWS_AS(gaussian_feasibility(I3, sp, FlowFamily::sylvester_smooth, 0),
                    ContractViolation);
    CHECK_THROWS_AS(gaussian_feasibility(I3, sp, FlowFamily::sylvester_smooth, 3),
                    ContractViolation);

    const auto radial_no = gaussian_feasibility(I3, 2.0 * I3, FlowFamily::radial);
    CHECK(radial_no.ruled_out);
    const auto radial_ok = gaussian_feasibility(I3, I3, FlowFamily::radial);
    CHECK_FALSE(radial_ok.ruled_out);

    const auto relu_syl = gaussian_feasibility(I3, 2.0 * rank2, FlowFamily::relu_sylvester);
    CHECK_FALSE(relu_syl.ruled_out);

    CHECK_THROWS_AS(gaussian_feasibility(I3, -1.0 * I3, FlowFamily::radial),
                    ContractViolation);
    CHECK_THROWS_AS(gaussian_feasibility(I3, Mat::Identity(2, 2), FlowFamily::radial),
                    ContractViolation);
}

TEST_CASE("gaussian feasibility verdicts are scale invariant") {
    const Mat I3 = Mat::Identity(3, 3);
    Mat rank2 = I3;
    rank2(0, 0) = 1.5;
    rank2(1, 1) = 1.3;
    for (double c : {1e-6, 1.0, 1e6}) {
        CHECK(gaussian_feasibility(c * I3, c * rank2, FlowFamily::planar_smooth).ruled_out);
        Mat rank1 = I3;
        rank1(2, 2) = 4.0;
        CHECK_FALSE(
            gaussian_feasibility(c * I3, c * rank1, FlowFamily::planar_smooth).ruled_out);
        CHECK(gaussian_feasibility(c * I3, 2.0 * c * I3, FlowFamily::radial).ruled_out);
        CHECK_FALSE(gaussian_feasibility(c * I3, c * I3, FlowFamily::radial).ruled_out);
    }
}
