#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/mixture.hpp"
#include "flowcap/densities/piecewise.hpp"
#include "flowcap/densities/product.hpp"
#include "flowcap/densities/radial.hpp"
#include "flowcap/densities/targets.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/rng.hpp"
#include "flowcap/serialize.hpp"
#include "flowcap/validate.hpp"

using namespace flowcap;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("grid l1 between unit gaussians matches the closed form") {
    const Gaussian1D p(0.0, 1.0);
    const Gaussian1D q(1.0, 1.0);
    const L1Estimate est = l1_grid_1d(p, q, -12.0, 13.0);
    CHECK(est.method == "grid");
    CHECK_THAT(est.value, WithinAbs(0.76584984509605241, 2e-6));
    CHECK(est.tv == 0.5 * est.value);
    CHECK(est.refinement_delta < 1e-5);
    CHECK(est.coverage_defect < 1e-12);
    CHECK_FALSE(est.normalization_flag);

    const L1Estimate same = l1_grid_1d(p, p, -12.0, 12.0);
    CHECK(same.value < 1e-12);

    CHECK_THROWS_AS(l1_grid_1d(p, Gaussian1D(5.0, 1.0), 0.0, 1.0), CoverageError);
    CHECK_THROWS_AS(l1_grid_1d(p, q, -1.0, 1.0, 10), ContractViolation);
    CHECK_THROWS_AS(l1_grid_1d(p, q, 1.0, -1.0), ContractViolation);
}

TEST_CASE("grid l1 flags over-unit mass instead of deflating it") {
    const Pwc1D heavy({0.0, 1.0}, {3.0});
    const Pwc1D flat({0.0, 1.0}, {1.0});
    const L1Estimate est = l1_grid_1d(heavy, flat, -0.5, 1.5);
    CHECK(est.normalization_flag);
    CHECK_THAT(est.value, WithinAbs(2.0, 0.01));
}

TEST_CASE("monte carlo pushforward l1 agrees with the grid route") {
    const auto q = std::make_shared<Gaussian1D>(0.0, 1.0);
    const auto p = std::make_shared<Gaussian1D>(0.3, 1.0);
    const FlowStack identity;

    const L1Estimate zero = l1_pushforward_mc(identity, *q, *q, 5000, 7);
    CHECK(zero.value == 0.0);
    CHECK(zero.method == "monte_carlo");

    const L1Estimate mc = l1_pushforward_mc(identity, *q, *p, 20000, 8);
    const L1Estimate grid = l1_grid_1d(*q, *p, -10.0, 10.0);
    CHECK(std::abs(mc.value - grid.value) <= 3.0 * mc.stderr_est + 1e-3);

    CHECK_THROWS_AS(l1_pushforward_mc(identity, *q, *p, 1, 8), ContractViolation);
}

TEST_CASE("density windows cover the mass") {
    const auto w = density_window_1d(Gaussian1D(2.0, 3.0));
    CHECK(w.lo < 2.0 - 3.0 * 6.9);
    CHECK(w.hi > 2.0 + 3.0 * 6.9);
    CHECK(w.lo > 2.0 - 3.0 * 7.2);

    const auto hull = density_window_1d(Pwc1D({0.0, 1.0}, {1.0}));
    CHECK(hull.lo == 0.0);
    CHECK(hull.hi == 1.0);

    const auto target = density_window_1d(BimodalQuadTarget());
    CHECK(target.lo == -3.0);
    CHECK(target.hi == 3.0);
}

TEST_CASE("check suite passes on healthy densities and stacks") {
    const Gaussian1D g1(0.5, 2.0);
    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(0.4, 0.7, 0.1, Nonlinearity::tanh_fn()));

    const auto checks = check_suite(g1, &stack, 20260818);
    REQUIRE(checks.size() == 4);
    CHECK(checks[0].name == "normalization");
    CHECK(checks[1].name == "gradient_fd");
    CHECK(checks[2].name == "round_trip");
    CHECK(checks[3].name == "pushforward_normalization");
    for (const auto& c : checks) {
        INFO(c.name << " measured " << c.measured << " threshold " << c.threshold);
        CHECK(c.pass);
    }

    Mat cov(2, 2);
    cov << 1.0, 0.3, 0.3, 0.7;
    const Gaussian g2(Vec::Zero(2), cov);
    const auto multi = check_suite(g2, nullptr, 20260818);
    REQUIRE(multi.size() == 2);
    for (const auto& c : multi) {
        INFO(c.name << " measured " << c.measured << " threshold " << c.threshold);
        CHECK(c.pass);
    }
}

namespace {

void check_dist_round_trip(const Density& d, const std::vector<Vec>& points,
                           const std::string& kind) {
    const Json j = dist_to_json(d);
    CHECK(j.at("schema").get<std::string>() == dist_schema);
    CHECK(j.at("kind").get<std::string>() == kind);
    const DensityPtr back = dist_from_json(j);
    REQUIRE(back->dim() == d.dim());
    for (const Vec& z : points) CHECK(back->log_density(z) == d.log_density(z));
}

std::vector<Vec> points1d(std::initializer_list<double> xs) {
    std::vector<Vec> out;
    for (double x : xs) {
        Vec v(1);
        v[0] = x;
        out.push_back(v);
    }
    return out;
}

} // namespace

TEST_CASE("every distribution kind serializes and round trips bitwise") {
    check_dist_round_trip(Gaussian1D(0.3, 1.7), points1d({-2.0, 0.0, 1.5}), "gaussian1d");

    Mat cov(2, 2);
    cov << 1.2, 0.4, 0.4, 0.9;
    Vec mean(2);
    mean << 0.5, -1.0;
    Rng rng(55);
    std::vector<Vec> pts2;
    for (int i = 0; i < 5; ++i) pts2.push_back(rng.normal_vec(2));
    check_dist_round_trip(Gaussian(mean, cov), pts2, "gaussian");

    SharedCovMixture mix;
    mix.weights = {0.3, 0.7};
    mix.means = {mean, Vec(-mean)};
    mix.cov = cov;
    check_dist_round_trip(mix.to_mixture(), pts2, "mixture");

    check_dist_round_trip(Pwc1D({0.0, 0.5, 1.0}, {1.5, 0.5}),
                          points1d({0.2, 0.7}), "pwc1d");
    check_dist_round_trip(Pwg1D({0.0, 1.0}, {0.0, 0.0, -1.0}, {1.0, 1.0, 2.0}),
                          points1d({-1.0, 0.5, 2.0}), "pwg1d");

    std::vector<Vec> pts3;
    for (int i = 0; i < 5; ++i) pts3.push_back(rng.normal_vec(3));
    check_dist_round_trip(RadialDensity(3, 0.7), pts3, "radial");
    check_dist_round_trip(RadialDensity(3, 0.5, RadialProfile::flat_core), pts3, "radial");

    std::vector<Vec> pos2;
    for (int i = 0; i < 5; ++i) pos2.push_back(Vec(rng.normal_vec(2).cwiseAbs()));
    check_dist_round_trip(ProductPowDensity(Func1D::gaussian_pdf(), 2.0, 2), pts2,
                          "product_pow");
    check_dist_round_trip(ProductPowDensity(Func1D::identity(), 1.5, 2), pos2,
                          "product_pow");
}

TEST_CASE("custom factor functions cannot be serialized") {
    Func1D custom;
    custom.value = [](double) { return 1.0; };
    custom.deriv = [](double) { return 0.0; };
    CHECK_THROWS_AS(dist_to_json(ProductPowDensity(custom, 1.0, 1)), SchemaError);
}

TEST_CASE("flows round trip bitwise through json") {
    Mat A(3, 2), B(3, 2);
    A << 0.2, 0.0, 0.0, 0.2, 0.1, 0.1;
    B << 0.3, 0.1, 0.0, 0.2, 0.1, 0.0;
    Vec bias(2);
    bias << 0.1, -0.2;
    Vec u(3), w(3), z0(3), v(3);
    u << 0.4, -0.2, 0.1;
    w << 0.3, 0.2, -0.1;
    z0 << 0.5, 0.0, -0.5;
    v << 1.0, 0.0, 0.0;

    FlowStack stack;
    stack.add<PlanarLayer>(PlanarLayer(u, w, 0.2, Nonlinearity::sigmoid()));
    stack.add<SylvesterLayer>(SylvesterLayer(A, B, bias, Nonlinearity::relu()));
    stack.add<RadialLayer>(RadialLayer(1.0, 0.8, z0));
    stack.add<HouseholderLayer>(HouseholderLayer(v));

    const Json j = flow_to_json(stack);
    CHECK(j.at("schema").get<std::string>() == flow_schema);
    REQUIRE(j.at("layers").size() == 4);
    CHECK(j.at("layers")[0].at("variant") == "planar");
    CHECK(j.at("layers")[0].at("h") == "sigmoid");
    CHECK(j.at("layers")[1].at("variant") == "sylvester");
    CHECK(j.at("layers")[2].at("variant") == "radial");
    CHECK(j.at("layers")[3].at("variant") == "householder");

    const FlowStack back = flow_from_json(j);
    REQUIRE(back.size() == 4);
    Rng rng(66);
    for (int i = 0; i < 10; ++i) {
        const Vec z = rng.normal_vec(3);
        const auto [y1, ld1] = stack.forward_with_log_det(z);
        const auto [y2, ld2] = back.forward_with_log_det(z);
        CHECK((y1.array() == y2.array()).all());
        CHECK(ld1 == ld2);
    }
}

TEST_CASE("closure-backed layers refuse to serialize") {
    FlowStack stack;
    const Nonlinearity nl = Nonlinearity::custom_smooth(
        [](double x) { return 0.5 * std::tanh(x); },
        [](double x) { const double c = std::cosh(x); return 0.5 / (c * c); },
        [](double x) {
            const double c = std::cosh(x);
            return -std::tanh(x) / (c * c);
        },
        0.0, 0.5);
    stack.add<PlanarLayer>(PlanarLayer(0.5, 1.0, 0.0, nl));
    CHECK_THROWS_AS(flow_to_json(stack), SchemaError);
}

TEST_CASE("schema tags are enforced in both directions") {
    Json dist = dist_to_json(Gaussian1D(0.0, 1.0));
    CHECK_THROWS_AS(flow_from_json(dist), SchemaError);
    dist["schema"] = "flowcap-dist-0";
    CHECK_THROWS_AS(dist_from_json(dist), SchemaError);

    Json bad = dist_to_json(Gaussian1D(0.0, 1.0));
    bad["sigma"] = "wide";
    CHECK_THROWS_AS(dist_from_json(bad), SchemaError);
    bad.erase("sigma");
    CHECK_THROWS_AS(dist_from_json(bad), SchemaError);
}

TEST_CASE("validation reports field paths instead of aborting") {
    const Json good = dist_to_json(Gaussian1D(0.0, 1.0));
    const ValidationReport ok = validate_document(good);
    CHECK(ok.ok);
    CHECK(ok.schema == dist_schema);
    CHECK_THAT(ok.summary(), ContainsSubstring("valid"));

    Json flow = Json::object();
    flow["schema"] = flow_schema;
    flow["layers"] = Json::array();
    flow["layers"].push_back({{"variant", "planar"},
                              {"u", {0.1, 0.0}},
                              {"w", {0.2, 0.0}},
                              {"b", 0.0},
                              {"h", "tanh"}});
    flow["layers"].push_back({{"variant", "householder"}, {"v", {0.9, 0.0}}});
    const ValidationReport bad = validate_document(flow);
    CHECK_FALSE(bad.ok);
    REQUIRE(bad.issues.size() == 1);
    CHECK(bad.issues[0].path == "layers[1].v");

    Json unknown = Json::object();
    unknown["schema"] = "bogus-9";
    const ValidationReport u = validate_document(unknown);
    CHECK_FALSE(u.ok);
    REQUIRE(u.issues.size() == 1);
    CHECK(u.issues[0].path == "document.schema");
    CHECK_THAT(u.issues[0].message, ContainsSubstring(dist_schema));
    CHECK_THAT(u.issues[0].message, ContainsSubstring(flow_schema));

    const ValidationReport arr = validate_document(Json::array());
    CHECK_FALSE(arr.ok);
    CHECK(arr.issues[0].path == "document");
}

TEST_CASE("json files save, load, and reject parse errors") {
    const std::string path = "roundtrip_test_dist.json";
    const Json j = dist_to_json(Gaussian1D(1.0, 2.0));
    save_json_file(path, j);
    const Json back = load_json_file(path);
    CHECK(back == j);
    std::remove(path.c_str());

    const std::string broken = "broken_doc.json";
    {
        std::ofstream out(broken);
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_json_file(broken), SchemaError);
    std::remove(broken.c_str());
    CHECK_THROWS_AS(load_json_file("no_such_file_here.json"), SchemaError);
}
