#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flowcap/capacity.hpp"
#include "flowcap/construct1d.hpp"
#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/mixture.hpp"
#include "flowcap/densities/relaxation.hpp"
#include "flowcap/densities/targets.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/serialize.hpp"
#include "flowcap/transport1d.hpp"
#include "flowcap/version.hpp"

namespace flowcap {

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 20260818;
    std::string output_dir = ".";
    std::map<std::string, double> params; // experiment-specific overrides
};

struct ExperimentManifest {
    std::string experiment;
    std::string version;
    std::string config_hash; // FNV-1a of the canonical config string, hex
    std::uint64_t seed = 0;
    std::vector<std::string> files;
    std::map<std::string, double> metrics;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "fig1",         "fig3",
        "topo_relu_2d", "topo_tanh_2d",
        "scaling_householder", "scaling_local_planar"};
    return names;
}

namespace detail {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
    std::string canon = c.name + "|seed=" + std::to_string(c.seed);
    for (const auto& [k, v] : c.params) canon += "|" + k + "=" + fmt17(v);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw ContractViolation("cannot open '" + path.string() + "' for writing");
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << fmt17(values[i]);
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

inline double param(const ExperimentConfig& c, const std::string& key, double fallback) {
    const auto it = c.params.find(key);
    return it == c.params.end() ? fallback : it->second;
}

inline void check_params(const ExperimentConfig& c, const std::vector<std::string>& known) {
    for (const auto& [k, v] : c.params) {
        bool ok = false;
        for (const std::string& name : known) ok = ok || k == name;
        if (!ok)
            throw ContractViolation("experiment '" + c.name + "' has no parameter '" + k + "'");
    }
}

struct GridWindow {
    double xlo, xhi, ylo, yhi;
};

// Per-axis mean +- 6 standard deviations, estimated from seeded samples.
inline GridWindow window_from_samples(const std::vector<Vec>& pts) {
    Vec mean = Vec::Zero(2);
    for (const Vec& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Vec var = Vec::Zero(2);
    for (const Vec& p : pts) var += (p - mean).cwiseAbs2();
    var /= static_cast<double>(pts.size());
    const Vec sd = var.cwiseSqrt();
    return {mean[0] - 6.0 * sd[0], mean[0] + 6.0 * sd[0], mean[1] - 6.0 * sd[1],
            mean[1] + 6.0 * sd[1]};
}

struct GridPeak {
    int i, j;
    double x, y;
};

// Strict local maxima over the 8-neighborhood of an n x n grid stored row-major.
inline std::vector<GridPeak> grid_peaks(const std::vector<double>& vals, int n,
                                        const GridWindow& w) {
    std::vector<GridPeak> peaks;
    const double hx = (w.xhi - w.xlo) / (n - 1);
    const double hy = (w.yhi - w.ylo) / (n - 1);
    for (int i = 1; i + 1 < n; ++i) {
        for (int j = 1; j + 1 < n; ++j) {
            const double v = vals[static_cast<std::size_t>(i) * n + j];
            bool top = true;
            for (int di = -1; di <= 1 && top; ++di)
                for (int dj = -1; dj <= 1 && top; ++dj)
                    if (di != 0 || dj != 0)
                        top = v > vals[static_cast<std::size_t>(i + di) * n + (j + dj)];
            if (top) peaks.push_back({i, j, w.xlo + hx * i, w.ylo + hy * j});
        }
    }
    return peaks;
}

} // namespace detail

namespace experiments {

inline void fig1(const ExperimentConfig& c, ExperimentManifest& m) {
    detail::check_params(c, {"eps", "grid_n"});
    const double eps = detail::param(c, "eps", 0.1);
    const int grid_n = static_cast<int>(detail::param(c, "grid_n", 2001));
    const auto target = std::make_shared<BimodalQuadTarget>();
    const auto relaxed = full_support_relaxation(target, eps);
    const RelaxationReport& rep = relaxed->report();

    const auto [wlo, whi] = density_window_1d(*relaxed);
    detail::CsvWriter csv(std::filesystem::path(c.output_dir) / "fig1_curve.csv",
                          {"x", "p", "relaxed"});
    for (int i = 0; i < grid_n; ++i) {
        const double x = wlo + (whi - wlo) * i / (grid_n - 1);
        csv.row({x, BimodalQuadTarget::value(x), relaxed->relaxed_density(x)});
    }
    m.files.push_back("fig1_curve.csv");

    const L1Estimate direct = l1_grid_1d(*target, *relaxed, wlo, whi);
    const auto base = std::make_shared<Gaussian1D>(0.0, 1.0);
    const TransportMap1D transport = cdf_transport(base, relaxed);
    const int n = (1 << 14) + 1;
    const double zlo = -9.0, zhi = 9.0;
    std::vector<double> integrand(n);
    for (int i = 0; i < n; ++i) {
        const double z = zlo + (zhi - zlo) * i / (n - 1);
        const double fz = transport.forward(z);
        const double qz = base->density1(z);
        const double rel = relaxed->relaxed_density(fz);
        const double push = rel > 0.0 ? qz * BimodalQuadTarget::value(fz) / rel : 0.0;
        integrand[i] = std::abs(qz - push);
    }
    const double tail = base->cdf1(zlo) + (1.0 - base->cdf1(zhi));
    const double l1_push = trapezoid_uniform(integrand, (zhi - zlo) / (n - 1)) + tail;

    m.metrics["eps"] = eps;
    m.metrics["delta"] = rep.delta;
    m.metrics["gamma"] = rep.gamma;
    m.metrics["l1_bound"] = rep.l1_to_target;
    m.metrics["l1_relaxed_vs_target"] = direct.value;
    m.metrics["l1_push_vs_target"] = l1_push;
}

inline void fig3(const ExperimentConfig& c, ExperimentManifest& m) {
    detail::check_params(c, {"eps", "pieces_small", "pieces_large", "grid_n"});
    const double eps = detail::param(c, "eps", 0.05);
    const int grid_n = static_cast<int>(detail::param(c, "grid_n", 2001));
    const std::size_t counts[2] = {
        static_cast<std::size_t>(detail::param(c, "pieces_small", 50)),
        static_cast<std::size_t>(detail::param(c, "pieces_large", 300))};
    const BimodalQuadTarget target;

    for (const std::size_t pieces : counts) {
        const ApproximationResult res = approximate_target_1d(target, eps, pieces);
        const auto base = std::make_shared<Gaussian1D>(res.synthesis.base.mu(),
                                                       res.synthesis.base.sigma());
        const PushforwardDensity1D push(base, res.synthesis.stack);
        const std::string name = "fig3_" + std::to_string(pieces) + ".csv";
        detail::CsvWriter csv(std::filesystem::path(c.output_dir) / name,
                              {"x", "p", "q_pwc", "q_pwg"});
        for (int i = 0; i < grid_n; ++i) {
            const double x = -6.0 + 12.0 * i / (grid_n - 1);
            csv.row({x, BimodalQuadTarget::value(x), res.discretized.density1(x),
                     push.density1(x)});
        }
        m.files.push_back(name);
        const std::string tag = std::to_string(pieces);
        m.metrics["achieved_l1_" + tag] = res.achieved_l1;
        m.metrics["layers_" + tag] = static_cast<double>(res.synthesis.stack.size());
        m.metrics["elided_identity_layers_" + tag] =
            static_cast<double>(res.synthesis.elided_identity_layers);
        m.metrics["pieces_used_" + tag] = static_cast<double>(res.conversion.pieces_used);
    }
    m.metrics["eps"] = eps;
}

inline FlowStack seeded_relu_stack(int dim, std::size_t layers, Rng& rng) {
    FlowStack stack;
    for (std::size_t k = 0; k < layers; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 100)
                throw NumericFailure("seeded_relu_stack: no invertible draw in 100 attempts");
            const Vec u = 0.5 * rng.normal_vec(dim);
            const Vec w = 0.5 * rng.normal_vec(dim);
            if (1.0 + u.dot(w) <= 1e-6) continue;
            stack.add(PlanarLayer(u, w, rng.uniform(-0.5, 0.5), Nonlinearity::relu()));
            break;
        }
    }
    return stack;
}

inline void topo_relu_2d(const ExperimentConfig& c, ExperimentManifest& m) {
    detail::check_params(c, {"grid_n", "layers"});
    const int n = static_cast<int>(detail::param(c, "grid_n", 201));
    const auto layers = static_cast<std::size_t>(detail::param(c, "layers", 3));

    std::vector<DensityPtr> comps;
    for (const double sx : {-2.0, 2.0})
        for (const double sy : {-2.0, 2.0}) {
            Vec mu(2);
            mu << sx, sy;
            comps.push_back(std::make_shared<Gaussian>(mu, 0.3 * Mat::Identity(2, 2)));
        }
    const Mixture q(std::vector<double>(4, 0.25), std::move(comps));

    Rng rng(c.seed);
    const FlowStack f = seeded_relu_stack(2, layers, rng);

    std::vector<Vec> base_pts, push_pts;
    for (int i = 0; i < 4096; ++i) {
        const Vec z = q.sample(rng);
        base_pts.push_back(z);
        push_pts.push_back(f.forward(z));
    }
    const detail::GridWindow wq = detail::window_from_samples(base_pts);
    const detail::GridWindow wp = detail::window_from_samples(push_pts);

    std::vector<double> qv(static_cast<std::size_t>(n) * n);
    std::vector<double> pv(static_cast<std::size_t>(n) * n);
    {
        detail::CsvWriter cq(std::filesystem::path(c.output_dir) / "topo_relu_base_grid.csv",
                             {"x", "y", "density"});
        detail::CsvWriter cp(std::filesystem::path(c.output_dir) / "topo_relu_push_grid.csv",
                             {"x", "y", "density"});
        Vec z(2);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                z[0] = wq.xlo + (wq.xhi - wq.xlo) * i / (n - 1);
                z[1] = wq.ylo + (wq.yhi - wq.ylo) * j / (n - 1);
                qv[static_cast<std::size_t>(i) * n + j] = q.density(z);
                cq.row({z[0], z[1], qv[static_cast<std::size_t>(i) * n + j]});
                z[0] = wp.xlo + (wp.xhi - wp.xlo) * i / (n - 1);
                z[1] = wp.ylo + (wp.yhi - wp.ylo) * j / (n - 1);
                pv[static_cast<std::size_t>(i) * n + j] =
                    std::exp(f.pushforward_log_density(q, z));
                cp.row({z[0], z[1], pv[static_cast<std::size_t>(i) * n + j]});
            }
        }
    }
    m.files.push_back("topo_relu_base_grid.csv");
    m.files.push_back("topo_relu_push_grid.csv");

    const std::vector<detail::GridPeak> qpeaks = detail::grid_peaks(qv, n, wq);
    const std::vector<detail::GridPeak> ppeaks = detail::grid_peaks(pv, n, wp);
    const double hx = (wp.xhi - wp.xlo) / (n - 1);
    const double hy = (wp.yhi - wp.ylo) / (n - 1);
    double max_cell_err = 0.0;
    detail::CsvWriter cpk(std::filesystem::path(c.output_dir) / "topo_relu_peaks.csv",
                          {"base_x", "base_y", "mapped_x", "mapped_y", "push_peak_x",
                           "push_peak_y", "cell_error"});
    for (const detail::GridPeak& pk : qpeaks) {
        Vec z(2);
        z << pk.x, pk.y;
        const Vec y = f.forward(z);
        double best = std::numeric_limits<double>::infinity();
        const detail::GridPeak* nearest = nullptr;
        for (const detail::GridPeak& cand : ppeaks) {
            const double cells = std::max(std::abs(cand.x - y[0]) / hx,
                                          std::abs(cand.y - y[1]) / hy);
            if (cells < best) {
                best = cells;
                nearest = &cand;
            }
        }
        if (nearest == nullptr)
            throw NumericFailure("topo_relu_2d: pushforward grid has no local maxima");
        cpk.row({pk.x, pk.y, y[0], y[1], nearest->x, nearest->y, best});
        max_cell_err = std::max(max_cell_err, best);
    }
    m.files.push_back("topo_relu_peaks.csv");
    m.metrics["base_peaks"] = static_cast<double>(qpeaks.size());
    m.metrics["push_peaks"] = static_cast<double>(ppeaks.size());
    m.metrics["max_peak_cell_error"] = max_cell_err;
}

inline void topo_tanh_2d(const ExperimentConfig& c, ExperimentManifest& m) {
    detail::check_params(c, {"grid_n"});
    const int n = static_cast<int>(detail::param(c, "grid_n", 201));
    const Gaussian q = Gaussian::standard(2);
    Vec u(2), w(2);
    u << 0.9, -0.6;
    w << 0.7, 0.4;
    FlowStack f;
    f.add(PlanarLayer(u, w, 0.3, Nonlinearity::tanh_fn()));

    Rng rng(c.seed);
    std::vector<Vec> push_pts;
    for (int i = 0; i < 4096; ++i) push_pts.push_back(f.forward(q.sample(rng)));
    const detail::GridWindow wq = {-6.0, 6.0, -6.0, 6.0};
    const detail::GridWindow wp = detail::window_from_samples(push_pts);

    std::vector<double> dlog(static_cast<std::size_t>(n) * n);
    {
        detail::CsvWriter cq(std::filesystem::path(c.output_dir) / "topo_tanh_base_grid.csv",
                             {"x", "y", "density"});
        detail::CsvWriter cp(std::filesystem::path(c.output_dir) / "topo_tanh_push_grid.csv",
                             {"x", "y", "density"});
        detail::CsvWriter cd(std::filesystem::path(c.output_dir) / "topo_tanh_dlog_grid.csv",
                             {"x", "y", "dlog"});
        Vec z(2);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                z[0] = wq.xlo + (wq.xhi - wq.xlo) * i / (n - 1);
                z[1] = wq.ylo + (wq.yhi - wq.ylo) * j / (n - 1);
                cq.row({z[0], z[1], q.density(z)});
                const double d =
                    f.pushforward_log_density(q, f.forward(z)) - q.log_density(z);
                dlog[static_cast<std::size_t>(i) * n + j] = d;
                cd.row({z[0], z[1], d});
                z[0] = wp.xlo + (wp.xhi - wp.xlo) * i / (n - 1);
                z[1] = wp.ylo + (wp.yhi - wp.ylo) * j / (n - 1);
                cp.row({z[0], z[1], std::exp(f.pushforward_log_density(q, z))});
            }
        }
    }
    m.files.push_back("topo_tanh_base_grid.csv");
    m.files.push_back("topo_tanh_push_grid.csv");
    m.files.push_back("topo_tanh_dlog_grid.csv");

    // Central differences of the dlog grid; the gradient must stay on the
    // line spanned by w everywhere the magnitude is resolvable.
    const double hx = (wq.xhi - wq.xlo) / (n - 1);
    const double hy = (wq.yhi - wq.ylo) / (n - 1);
    const Vec what = w / w.norm();
    double max_orth_frac = 0.0;
    for (int i = 1; i + 1 < n; ++i) {
        for (int j = 1; j + 1 < n; ++j) {
            Vec g(2);
            g[0] = (dlog[static_cast<std::size_t>(i + 1) * n + j] -
                    dlog[static_cast<std::size_t>(i - 1) * n + j]) /
                   (2.0 * hx);
            g[1] = (dlog[static_cast<std::size_t>(i) * n + (j + 1)] -
                    dlog[static_cast<std::size_t>(i) * n + (j - 1)]) /
                   (2.0 * hy);
            const double norm = g.norm();
            if (norm < 1e-4) continue;
            const double orth = (g - g.dot(what) * what).norm() / norm;
            max_orth_frac = std::max(max_orth_frac, orth);
        }
    }
    m.metrics["max_gradient_orthogonal_fraction"] = max_orth_frac;
    m.metrics["w_direction_x"] = what[0];
    m.metrics["w_direction_y"] = what[1];
}

inline void scaling(const ExperimentConfig& c, ExperimentManifest& m, CapacityFamily family) {
    detail::check_params(c, {"kappa", "tau", "c_h"});
    ScalingParams params;
    params.kappa = detail::param(c, "kappa", 1.0);
    params.tau = detail::param(c, "tau", 0.5);
    params.c_h = detail::param(c, "c_h", 2.0);
    const std::vector<int> dims = family == CapacityFamily::householder
                                      ? std::vector<int>{64, 128, 256, 512}
                                      : std::vector<int>{16, 32, 64, 128, 256};
    const ScalingStudyResult res = scaling_study(family, dims, params);
    const std::string name = family == CapacityFamily::householder
                                 ? "scaling_householder.csv"
                                 : "scaling_local_planar.csv";
    detail::CsvWriter csv(std::filesystem::path(c.output_dir) / name,
                          {"d", "lhat_bound", "depth_lb", "slope_estimate"});
    for (const ScalingRow& r : res.rows)
        csv.row({static_cast<double>(r.d), r.lhat_bound, r.depth_lb, res.slope});
    m.files.push_back(name);
    m.metrics["slope"] = res.slope;
    if (family == CapacityFamily::householder)
        m.metrics["kappa"] = params.kappa;
    else {
        m.metrics["tau"] = params.tau;
        m.metrics["c_h"] = params.c_h;
    }
}

} // namespace experiments

inline Json manifest_to_json(const ExperimentManifest& m) {
    Json j;
    j["experiment"] = m.experiment;
    j["version"] = m.version;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["files"] = m.files;
    Json metrics = Json::object();
    for (const auto& [k, v] : m.metrics) metrics[k] = v;
    j["metrics"] = metrics;
    return j;
}

// Runs one named reproduction experiment, writing its CSV outputs and a
// manifest.json into config.output_dir. Identical configs produce bitwise
// identical files.
inline ExperimentManifest run_experiment(const ExperimentConfig& config) {
    ExperimentManifest m;
    m.experiment = config.name;
    m.version = version_string;
    m.config_hash = detail::config_hash(config);
    m.seed = config.seed;
    std::filesystem::create_directories(config.output_dir);

    if (config.name == "fig1")
        experiments::fig1(config, m);
    else if (config.name == "fig3")
        experiments::fig3(config, m);
    else if (config.name == "topo_relu_2d")
        experiments::topo_relu_2d(config, m);
    else if (config.name == "topo_tanh_2d")
        experiments::topo_tanh_2d(config, m);
    else if (config.name == "scaling_householder")
        experiments::scaling(config, m, CapacityFamily::householder);
    else if (config.name == "scaling_local_planar")
        experiments::scaling(config, m, CapacityFamily::local_planar);
    else
        throw ContractViolation("unknown experiment '" + config.name + "'");

    save_json_file((std::filesystem::path(config.output_dir) / "manifest.json").string(),
                   manifest_to_json(m));
    m.files.push_back("manifest.json");
    return m;
}

} // namespace flowcap
