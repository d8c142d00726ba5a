#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "flowcap/experiments.hpp"
#include "flowcap/serialize.hpp"
#include "flowcap/version.hpp"

using namespace flowcap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("flowcap_exp_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }

    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("experiment registry lists the six reproductions") {
    const auto& names = experiment_names();
    REQUIRE(names.size() == 6);
    CHECK(names[0] == "fig1");
    CHECK(names[1] == "fig3");

    ExperimentConfig bad;
    bad.name = "fig99";
    CHECK_THROWS_AS(run_experiment(bad), ContractViolation);

    ExperimentConfig stray;
    stray.name = "fig1";
    stray.params["bogus"] = 1.0;
    CHECK_THROWS_AS(run_experiment(stray), ContractViolation);
}

TEST_CASE("relaxation curve experiment matches its own bound") {
    TempDir dir("fig1");
    ExperimentConfig c;
    c.name = "fig1";
    c.output_dir = dir.path.string();
    const ExperimentManifest m = run_experiment(c);

    CHECK(m.experiment == "fig1");
    CHECK(m.version == version_string);
    CHECK(m.seed == 20260818ull);
    CHECK(m.config_hash.size() == 16);
    REQUIRE(m.files.size() == 2);
    CHECK(m.files.front() == "fig1_curve.csv");
    CHECK(m.files.back() == "manifest.json");
    for (const std::string& f : m.files) CHECK(fs::exists(dir.path / f));

    const double eps = m.metrics.at("eps");
    const double bound = m.metrics.at("l1_bound");
    const double direct = m.metrics.at("l1_relaxed_vs_target");
    const double push = m.metrics.at("l1_push_vs_target");
    CHECK(eps == 0.1);
    CHECK(bound > 0.0);
    CHECK(bound <= eps + 1e-12);
    CHECK_THAT(direct, WithinAbs(bound, 5e-3));
    CHECK_THAT(push, WithinAbs(direct, 5e-3));
    CHECK(push <= 0.1);
    CHECK(m.metrics.at("gamma") > 0.0);
    CHECK(m.metrics.at("gamma") < 1.0);

    const Json doc = load_json_file((dir.path / "manifest.json").string());
    CHECK(doc.at("experiment").get<std::string>() == "fig1");
    CHECK(doc.at("config_hash").get<std::string>() == m.config_hash);
    CHECK(doc.at("seed").get<std::uint64_t>() == m.seed);
    CHECK(doc.at("metrics").at("l1_bound").get<double>() == bound);
    // The stored file list is what the run produced before the manifest itself.
    CHECK(doc.at("files").size() == m.files.size() - 1);
}

TEST_CASE("identical configs reproduce bitwise identical outputs") {
    TempDir da("repro_a");
    TempDir db("repro_b");
    ExperimentConfig c;
    c.name = "fig1";
    c.params["grid_n"] = 301;
    c.output_dir = da.path.string();
    const ExperimentManifest ma = run_experiment(c);
    c.output_dir = db.path.string();
    const ExperimentManifest mb = run_experiment(c);

    CHECK(ma.config_hash == mb.config_hash);
    CHECK(file_bytes(da.path / "fig1_curve.csv") == file_bytes(db.path / "fig1_curve.csv"));

    ExperimentConfig plain;
    plain.name = "fig1";
    plain.output_dir = da.path.string();
    CHECK(detail::config_hash(plain) != ma.config_hash);
}

TEST_CASE("staircase synthesis experiment improves with more pieces") {
    TempDir dir("fig3");
    ExperimentConfig c;
    c.name = "fig3";
    c.output_dir = dir.path.string();
    c.params["pieces_small"] = 20;
    c.params["pieces_large"] = 40;
    c.params["grid_n"] = 201;
    const ExperimentManifest m = run_experiment(c);

    CHECK(fs::exists(dir.path / "fig3_20.csv"));
    CHECK(fs::exists(dir.path / "fig3_40.csv"));
    const double l1_small = m.metrics.at("achieved_l1_20");
    const double l1_large = m.metrics.at("achieved_l1_40");
    CHECK(l1_small > 0.0);
    CHECK(l1_large > 0.0);
    CHECK(l1_large <= l1_small + 0.05);
    CHECK(m.metrics.at("layers_20") == m.metrics.at("pieces_used_20") + 1.0);
    CHECK(m.metrics.at("layers_40") == m.metrics.at("pieces_used_40") + 1.0);
    CHECK(m.metrics.at("elided_identity_layers_20") >= 0.0);
}

TEST_CASE("piecewise-affine pushforward keeps the four mixture peaks") {
    TempDir dir("relu2d");
    ExperimentConfig c;
    c.name = "topo_relu_2d";
    c.output_dir = dir.path.string();
    const ExperimentManifest m = run_experiment(c);

    for (const char* f : {"topo_relu_base_grid.csv", "topo_relu_push_grid.csv",
                          "topo_relu_peaks.csv"})
        CHECK(fs::exists(dir.path / f));
    CHECK(m.metrics.at("base_peaks") == 4.0);
    // Hinge lines carry jump discontinuities of the pushforward density, so
    // strict grid maxima can split there; modes are never destroyed.
    CHECK(m.metrics.at("push_peaks") >= 4.0);
    CHECK(m.metrics.at("max_peak_cell_error") <= 1.0);
}

TEST_CASE("smooth planar log-density shift varies only along its hinge direction") {
    TempDir dir("tanh2d");
    ExperimentConfig c;
    c.name = "topo_tanh_2d";
    c.output_dir = dir.path.string();
    const ExperimentManifest m = run_experiment(c);

    for (const char* f : {"topo_tanh_base_grid.csv", "topo_tanh_push_grid.csv",
                          "topo_tanh_dlog_grid.csv"})
        CHECK(fs::exists(dir.path / f));
    const double norm = std::sqrt(0.7 * 0.7 + 0.4 * 0.4);
    CHECK_THAT(m.metrics.at("w_direction_x"), WithinRel(0.7 / norm, 1e-12));
    CHECK_THAT(m.metrics.at("w_direction_y"), WithinRel(0.4 / norm, 1e-12));
    CHECK(m.metrics.at("max_gradient_orthogonal_fraction") < 0.05);
}

TEST_CASE("scaling experiments report the pinned depth slopes") {
    TempDir dh("scale_hh");
    ExperimentConfig ch;
    ch.name = "scaling_householder";
    ch.output_dir = dh.path.string();
    const ExperimentManifest mh = run_experiment(ch);
    CHECK(fs::exists(dh.path / "scaling_householder.csv"));
    CHECK_THAT(mh.metrics.at("slope"), WithinRel(1.0015658485569849, 1e-9));
    CHECK(mh.metrics.at("kappa") == 1.0);

    TempDir dl("scale_lp");
    ExperimentConfig cl;
    cl.name = "scaling_local_planar";
    cl.output_dir = dl.path.string();
    const ExperimentManifest ml = run_experiment(cl);
    CHECK(fs::exists(dl.path / "scaling_local_planar.csv"));
    CHECK_THAT(ml.metrics.at("slope"), WithinRel(1.0409573447715919, 1e-9));
    CHECK(ml.metrics.at("tau") == 0.5);
    CHECK(ml.metrics.at("c_h") == 2.0);

    const std::string csv = file_bytes(dl.path / "scaling_local_planar.csv");
    CHECK(csv.rfind("d,lhat_bound,depth_lb,slope_estimate\n", 0) == 0);
}
