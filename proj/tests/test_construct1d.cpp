#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flowcap/construct1d.hpp"
#include "flowcap/densities/targets.hpp"
#include "flowcap/rng.hpp"

using namespace flowcap;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Pwg1D random_tail_consistent_pwg(Rng& rng, std::size_t pieces) {
    std::vector<double> breaks(pieces - 1);
    for (auto& t : breaks) t = rng.uniform(-2.0, 2.0);
    std::sort(breaks.begin(), breaks.end());
    for (std::size_t i = 1; i < breaks.size(); ++i)
        breaks[i] = std::max(breaks[i], breaks[i - 1] + 0.05);

    std::vector<double> mus = {rng.uniform(-0.5, 0.5)};
    std::vector<double> sigmas = {std::exp(rng.uniform(-0.3, 0.3))};
    for (double t : breaks) {
        const double m = norm_sf((t - mus.back()) / sigmas.back());
        const double s_new = std::exp(rng.uniform(-0.5, 0.5));
        mus.push_back(t - s_new * norm_quantile(1.0 - m));
        sigmas.push_back(s_new);
    }
    return Pwg1D(std::move(breaks), std::move(mus), std::move(sigmas));
}

} // namespace

TEST_CASE("relu piece fix doubles the last sigma with a single hinge") {
    const Pwg1D q({1.0}, {0.0, 0.0}, {1.0, 1.0});
    const double mu_hat = 1.0 - 2.0 * 1.0; // keeps norm_sf(1) tail mass at t=1
    const PlanarLayer layer = relu_piece_fix(q, Gaussian1D(mu_hat, 2.0));
    CHECK(layer.u()[0] == 1.0);
    CHECK(layer.w()[0] == 1.0);
    CHECK(layer.b() == -1.0);

    // Below the hinge the map is the identity, above it has slope 2.
    Vec z(1);
    z[0] = 0.5;
    CHECK_THAT(layer.forward(z)[0], WithinAbs(0.5, 1e-15));
    z[0] = 3.0;
    CHECK_THAT(layer.forward(z)[0], WithinAbs(1.0 + 2.0 * (3.0 - 1.0), 1e-12));
}

TEST_CASE("relu piece fix rejects tail-mass changes") {
    const Pwg1D q({1.0}, {0.0, 0.0}, {1.0, 1.0});
    CHECK_THROWS_AS(relu_piece_fix(q, Gaussian1D(0.0, 2.0)), HypothesisViolation);
    const Pwg1D bare({}, {0.0}, {1.0});
    CHECK_THROWS_AS(relu_piece_fix(bare, Gaussian1D(0.0, 1.0)), ContractViolation);
}

TEST_CASE("synthesis of a single-piece target is the empty stack") {
    const Pwg1D target({}, {0.3}, {1.4});
    const SynthesisResult r = pwg_synthesize(target);
    CHECK(r.stack.size() == 0);
    CHECK(r.base.mu() == 0.3);
    CHECK(r.base.sigma() == 1.4);
    CHECK(r.achieved_l1 < 1e-9);
}

TEST_CASE("synthesis keeps identity layers so depth is exactly n-1") {
    const Pwg1D target({0.0, 1.0}, {0.0, 0.0, -1.0}, {1.0, 1.0, 2.0});
    REQUIRE(target.is_tail_consistent(1e-10));
    const SynthesisResult r = pwg_synthesize(target);
    CHECK(r.stack.size() == 2);
    CHECK(r.elided_identity_layers == 1);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK_THAT(r.realized.mus()[k], WithinAbs(target.mus()[k], 1e-10));
        CHECK_THAT(r.realized.sigmas()[k], WithinRel(target.sigmas()[k], 1e-12));
    }
}

TEST_CASE("synthesis realizes random tail-consistent targets exactly") {
    Rng rng(5150);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t pieces = 3 + static_cast<std::size_t>(rng.uniform(0.0, 8.0));
        const Pwg1D target = random_tail_consistent_pwg(rng, pieces);
        const SynthesisResult r = pwg_synthesize(target, /*compute_l1=*/false);
        REQUIRE(r.stack.size() == pieces - 1);

        auto base = std::make_shared<Gaussian1D>(r.base);
        const PushforwardDensity1D push(base, r.stack);
        const auto& breaks = target.breakpoints();
        for (int i = 0; i <= 200; ++i) {
            const double x = -4.0 + 8.0 * i / 200.0;
            bool near_break = false;
            for (double t : breaks)
                if (std::abs(x - t) < 1e-5) near_break = true;
            if (near_break) continue;
            CHECK_THAT(push.log_density1(x),
                       WithinAbs(target.log_density1(x), 1e-8));
        }
    }
}

TEST_CASE("synthesis refuses tail-inconsistent targets") {
    const Pwg1D skewed({0.0}, {0.0, 5.0}, {1.0, 1.0});
    CHECK_THROWS_AS(pwg_synthesize(skewed), HypothesisViolation);
}

TEST_CASE("refinement width bound at the pinned operating point") {
    CHECK_THAT(pwg_delta_bound(0.3, 1.0), WithinRel(0.012728673922141612, 1e-12));
    CHECK_THROWS_AS(pwg_delta_bound(0.0, 1.0), ContractViolation);
    CHECK_THROWS_AS(pwg_delta_bound(0.3, 0.0), ContractViolation);
}

TEST_CASE("pwc conversion chains masses and stays tail consistent") {
    const Pwc1D uniform({0.0, 1.0}, {1.0});
    const PwcToPwgResult r = pwc_to_pwg(uniform, 0.3);
    CHECK(r.eps_internal == 0.18);
    CHECK_THAT(r.tail_mass_each, WithinRel(0.06, 1e-12));
    CHECK(r.pwg.is_tail_consistent(1e-9));
    CHECK_THAT(r.pwg.mass(), WithinAbs(1.0, 1e-9));

    // The left tail piece is bitwise the same Gaussian as the first interior piece.
    CHECK(r.pwg.mus()[0] == r.pwg.mus()[1]);
    CHECK(r.pwg.sigmas()[0] == r.pwg.sigmas()[1]);
}

TEST_CASE("pwc conversion rejects unnormalized input and enforces the cap") {
    const Pwc1D heavy({0.0, 1.0}, {2.0});
    CHECK_THROWS_AS(pwc_to_pwg(heavy, 0.3), ContractViolation);

    const Pwc1D uniform({0.0, 1.0}, {1.0});
    CHECK_THROWS_WITH(pwc_to_pwg(uniform, 1e-4),
                      ContainsSubstring("cap is 100000"));
}

TEST_CASE("pwc conversion trims zero-valued edge pieces") {
    const Pwc1D padded({-1.0, 0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
    const PwcToPwgResult r = pwc_to_pwg(padded, 0.3);
    CHECK(r.pieces_in == 1);
    CHECK(r.pwg.is_tail_consistent(1e-9));
}

TEST_CASE("pwc conversion meets the requested l1 budget on benchmarks") {
    const std::vector<Pwc1D> benchmarks = {
        Pwc1D({0.0, 1.0}, {1.0}),
        Pwc1D({0.0, 0.5, 1.0}, {1.5, 0.5}),
        Pwc1D({0.0, 0.5, 1.0, 1.5, 2.0}, {0.1, 0.4, 0.6, 0.9}),
        Pwc1D({0.0, 0.5, 1.0, 1.5}, {1.0, 0.0, 1.0}),
        Pwc1D({-1.0, 0.0, 1.0}, {0.3, 0.7}),
    };
    for (const auto& pwc : benchmarks) {
        REQUIRE_THAT(pwc.mass(), WithinAbs(1.0, 1e-12));
        for (double eps : {0.3, 0.1, 0.05}) {
            const PwcToPwgResult r = pwc_to_pwg(pwc, eps);
            const auto [wlo, whi] = density_window_1d(r.pwg);
            const double lo = std::min(wlo, pwc.breakpoints().front() - 1.0);
            const double hi = std::max(whi, pwc.breakpoints().back() + 1.0);
            const double l1 = l1_grid_1d(r.pwg, pwc, lo, hi).value;
            CHECK(l1 <= eps);
        }
    }
}

TEST_CASE("end-to-end approximation of a smooth compact target") {
    const auto target = std::make_shared<BimodalQuadTarget>();
    const ApproximationResult r = approximate_target_1d(*target, 0.1, 60);
    CHECK(r.synthesis.stack.size() == r.conversion.pwg.n_pieces() - 1);
    CHECK(r.achieved_l1 < 0.35);

    CHECK_THROWS_AS(approximate_target_1d(*target, 0.1, 0), ContractViolation);
    const Gaussian1D unbounded(0.0, 1.0);
    CHECK_THROWS_AS(approximate_target_1d(unbounded, 0.1, 10), ContractViolation);
}

TEST_CASE("affine scaling decomposes into two relu layers") {
    const auto layers = affine_1d_layers(2.0);
    REQUIRE(layers.size() == 2);
    FlowStack stack;
    for (const auto& l : layers) stack.add<PlanarLayer>(PlanarLayer(l));
    Vec z(1);
    for (double x : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
        z[0] = x;
        CHECK_THAT(stack.forward(z)[0], WithinAbs(2.0 * x, 1e-12));
    }

    const auto shifted = affine_1d_layers(0.5, 1.0);
    REQUIRE(shifted.size() == 3);
    FlowStack stack2;
    for (const auto& l : shifted) stack2.add<PlanarLayer>(PlanarLayer(l));
    z[0] = -3.0;
    CHECK_THAT(stack2.forward(z)[0], WithinAbs(0.5 * -3.0 + 1.0, 1e-12));

    CHECK_THROWS_AS(affine_1d_layers(0.0), ContractViolation);
}
