#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flowcap/flowcap.hpp"

namespace {

using namespace flowcap;

Mat load_matrix(const std::string& path) {
    const Json j = load_json_file(path);
    const Json& body = j.is_object() && j.contains("matrix") ? j.at("matrix") : j;
    return detail::mat_from_json(body, "matrix");
}

Vec parse_point(const std::string& text) {
    std::vector<double> xs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        try {
            xs.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ContractViolation("cannot parse coordinate '" + item + "'");
        }
    if (xs.empty()) throw ContractViolation("empty point");
    Vec v(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) v[static_cast<Eigen::Index>(i)] = xs[i];
    return v;
}

std::vector<Vec> load_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "' for reading");
    std::vector<Vec> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (pts.empty() && line.find_first_not_of("0123456789+-.,eE \t\r") != std::string::npos)
            continue; // header row
        pts.push_back(parse_point(line));
    }
    if (pts.empty()) throw ContractViolation("'" + path + "' holds no points");
    return pts;
}

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Writes to the path when given, stdout otherwise.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw SchemaError("cannot open '" + path + "' for writing");
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

int run_flow(const std::string& flow_path, const std::vector<std::string>& point_args,
             const std::string& points_path, const std::string& out_path, bool invert) {
    const FlowStack stack = flow_from_json(load_json_file(flow_path));
    std::vector<Vec> pts;
    for (const std::string& p : point_args) pts.push_back(parse_point(p));
    if (!points_path.empty())
        for (Vec& v : load_points_csv(points_path)) pts.push_back(std::move(v));
    if (pts.empty()) throw CLI::ValidationError("flow", "no points given (--point or --points)");

    Output out(out_path);
    const auto d = static_cast<Eigen::Index>(stack.dim());
    for (Eigen::Index i = 0; i < d; ++i) out.stream() << (i ? "," : "") << "x" << i;
    if (invert) {
        for (Eigen::Index i = 0; i < d; ++i) out.stream() << ",z" << i;
        out.stream() << '\n';
    } else {
        for (Eigen::Index i = 0; i < d; ++i) out.stream() << ",y" << i;
        out.stream() << ",log_det\n";
    }
    for (const Vec& z : pts) {
        if (z.size() != d)
            throw ContractViolation("point dimension " + std::to_string(z.size()) +
                                    " does not match flow dimension " + std::to_string(d));
        for (Eigen::Index i = 0; i < d; ++i) out.stream() << (i ? "," : "") << fmt17(z[i]);
        if (invert) {
            const Vec x = stack.inverse(z);
            for (Eigen::Index i = 0; i < d; ++i) out.stream() << "," << fmt17(x[i]);
            out.stream() << '\n';
        } else {
            const auto [y, lad] = stack.forward_with_log_det(z);
            for (Eigen::Index i = 0; i < d; ++i) out.stream() << "," << fmt17(y[i]);
            out.stream() << "," << fmt17(lad) << '\n';
        }
    }
    return 0;
}

int run_synth(const std::string& target_path, double eps, std::size_t pieces,
              const std::string& flow_out, const std::string& out_path) {
    const DensityPtr target = dist_from_json(load_json_file(target_path));
    Json report;
    FlowStack stack;
    if (const auto* pwg = dynamic_cast<const Pwg1D*>(target.get())) {
        const SynthesisResult res = pwg_synthesize(*pwg);
        stack = res.stack;
        report["pieces"] = pwg->n_pieces();
        report["layers"] = res.stack.size();
        report["achieved_l1"] = res.achieved_l1;
        report["elided_identity_layers"] = res.elided_identity_layers;
    } else if (const auto* pwc = dynamic_cast<const Pwc1D*>(target.get())) {
        const PwcToPwgResult conv = pwc_to_pwg(*pwc, eps);
        const SynthesisResult res = pwg_synthesize(conv.pwg);
        stack = res.stack;
        report["pieces"] = conv.pwg.n_pieces();
        report["layers"] = res.stack.size();
        report["achieved_l1"] = res.achieved_l1;
        report["elided_identity_layers"] = res.elided_identity_layers;
    } else {
        const ApproximationResult res = approximate_target_1d(*target, eps, pieces);
        stack = res.synthesis.stack;
        report["pieces"] = res.conversion.pwg.n_pieces();
        report["layers"] = res.synthesis.stack.size();
        report["achieved_l1"] = res.achieved_l1;
        report["elided_identity_layers"] = res.synthesis.elided_identity_layers;
    }
    if (!flow_out.empty()) save_json_file(flow_out, flow_to_json(stack));
    Output out(out_path);
    out.stream() << report.dump(2) << '\n';
    return 0;
}

int run_compile(const std::string& matrix_path, const std::string& flow_out,
                const std::string& out_path) {
    const Mat A = load_matrix(matrix_path);
    const LinearCompileResult res = compile_linear(A);
    if (!flow_out.empty()) save_json_file(flow_out, flow_to_json(res.stack));
    Json report;
    report["planar_count"] = res.planar_count;
    report["householder_count"] = res.householder_count;
    report["split_factors"] = res.split_factors;
    report["pivoted"] = res.pivoted;
    if (!res.note.empty()) report["note"] = res.note;
    Output out(out_path);
    out.stream() << report.dump(2) << '\n';
    return 0;
}

int run_topo(const std::string& flow_path, const std::string& base_path, std::size_t n,
             std::uint64_t seed, const std::string& mode, double margin,
             const std::string& out_path) {
    const FlowStack stack = flow_from_json(load_json_file(flow_path));
    const DensityPtr base = dist_from_json(load_json_file(base_path));

    Rng rng(seed);
    std::vector<Vec> points;
    points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) points.push_back(base->sample(rng));

    std::string chosen = mode;
    if (chosen == "auto") {
        bool all_relu = true;
        for (std::size_t i = 0; i < stack.size() && all_relu; ++i) {
            const FlowLayer& l = stack.layer(i);
            if (l.layer_kind() == LayerKind::planar)
                all_relu = static_cast<const PlanarLayer&>(l).nonlinearity().is_relu();
            else if (l.layer_kind() == LayerKind::sylvester)
                all_relu = static_cast<const SylvesterLayer&>(l).nonlinearity().is_relu();
            else
                all_relu = false;
        }
        if (all_relu && stack.size() > 0)
            chosen = "relu";
        else if (stack.size() == 1 && stack.layer(0).layer_kind() == LayerKind::radial)
            chosen = "radial";
        else
            chosen = "span";
    }

    ResidualReport report;
    if (chosen == "relu") {
        report = residual_relu(stack, *base, points, margin > 0.0 ? margin : 1e-8);
    } else if (chosen == "radial") {
        if (stack.size() != 1 || stack.layer(0).layer_kind() != LayerKind::radial)
            throw ContractViolation("topo-check: radial mode needs a single radial layer");
        report = residual_radial(static_cast<const RadialLayer&>(stack.layer(0)), *base,
                                 points, margin > 0.0 ? margin : 1e-12);
    } else if (chosen == "span") {
        report = residual_span(stack, *base, points);
    } else {
        throw ContractViolation("topo-check: unknown mode '" + mode + "'");
    }

    if (!out_path.empty()) {
        std::ofstream csv(out_path);
        if (!csv) throw SchemaError("cannot open '" + out_path + "' for writing");
        const int d = base->dim();
        for (int i = 0; i < d; ++i) csv << (i ? "," : "") << "x" << i;
        csv << ",residual,excluded,reason\n";
        for (const ResidualEntry& e : report.entries) {
            for (int i = 0; i < d; ++i) csv << (i ? "," : "") << fmt17(e.z[i]);
            csv << "," << fmt17(e.residual) << "," << (e.excluded ? 1 : 0) << ",\""
                << e.reason << "\"\n";
        }
    }
    Json summary;
    summary["mode"] = chosen;
    summary["points"] = report.entries.size();
    summary["excluded"] = report.excluded;
    summary["max_residual"] = report.max_residual;
    summary["vacuous"] = report.vacuous;
    if (!report.note.empty()) summary["note"] = report.note;
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int run_feasibility(const std::string& q_path, const std::string& p_path,
                    const std::string& family, int m, const std::string& out_path) {
    const Mat Sq = load_matrix(q_path);
    const Mat Sp = load_matrix(p_path);
    std::vector<FeasibilityVerdict> verdicts;
    const auto run_one = [&](FlowFamily f) {
        const int mm = f == FlowFamily::sylvester_smooth
                           ? (m > 0 ? m : std::max(1, static_cast<int>(Sq.rows()) / 2))
                           : m;
        verdicts.push_back(gaussian_feasibility(Sq, Sp, f, mm));
    };
    if (family == "all" || family.empty()) {
        run_one(FlowFamily::planar_smooth);
        if (Sq.rows() > 1) run_one(FlowFamily::sylvester_smooth);
        run_one(FlowFamily::radial);
        run_one(FlowFamily::relu_sylvester);
    } else if (family == "planar_smooth") {
        run_one(FlowFamily::planar_smooth);
    } else if (family == "sylvester_smooth") {
        run_one(FlowFamily::sylvester_smooth);
    } else if (family == "radial") {
        run_one(FlowFamily::radial);
    } else if (family == "relu_sylvester") {
        run_one(FlowFamily::relu_sylvester);
    } else {
        throw ContractViolation("feasibility: unknown family '" + family + "'");
    }
    Json arr = Json::array();
    for (const FeasibilityVerdict& v : verdicts) {
        Json j;
        j["family"] = v.family;
        j["ruled_out"] = v.ruled_out;
        j["witness"] = v.witness;
        arr.push_back(j);
    }
    Output out(out_path);
    out.stream() << arr.dump(2) << '\n';
    return 0;
}

int run_capacity(const std::string& family, double kappa, double tau, double c_h,
                 const std::string& dims_text, const std::string& out_path) {
    std::vector<int> dims;
    std::stringstream ss(dims_text);
    std::string item;
    while (std::getline(ss, item, ','))
        try {
            dims.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ContractViolation("cannot parse dimension '" + item + "'");
        }
    CapacityFamily fam;
    if (family == "householder")
        fam = CapacityFamily::householder;
    else if (family == "local_planar")
        fam = CapacityFamily::local_planar;
    else
        throw ContractViolation("capacity: unknown family '" + family + "'");
    ScalingParams params;
    params.kappa = kappa;
    params.tau = tau;
    params.c_h = c_h;
    const ScalingStudyResult res = scaling_study(fam, dims, params);
    Output out(out_path);
    out.stream() << "d,lhat_bound,depth_lb,slope_estimate\n";
    for (const ScalingRow& r : res.rows)
        out.stream() << r.d << "," << fmt17(r.lhat_bound) << "," << fmt17(r.depth_lb) << ","
                     << fmt17(res.slope) << '\n';
    return 0;
}

int run_l1(const std::string& p_path, const std::string& q_path, double lo, double hi,
           std::size_t n, const std::string& out_path) {
    const DensityPtr p = dist_from_json(load_json_file(p_path));
    const DensityPtr q = dist_from_json(load_json_file(q_path));
    double wlo = lo, whi = hi;
    if (!(wlo < whi)) {
        const auto [plo, phi] = density_window_1d(*p);
        const auto [qlo, qhi] = density_window_1d(*q);
        wlo = std::min(plo, qlo);
        whi = std::max(phi, qhi);
    }
    const L1Estimate est = l1_grid_1d(*p, *q, wlo, whi, n);
    Json j;
    j["value"] = est.value;
    j["tv"] = est.tv;
    j["method"] = est.method;
    j["lo"] = est.lo;
    j["hi"] = est.hi;
    j["n"] = est.n;
    j["refinement_delta"] = est.refinement_delta;
    j["coverage_defect"] = est.coverage_defect;
    j["normalization_flag"] = est.normalization_flag;
    Output out(out_path);
    out.stream() << j.dump(2) << '\n';
    return 0;
}

int run_repro(const std::string& name, std::uint64_t seed, const std::string& out_dir,
              const std::vector<std::string>& param_args, const std::string& config_path) {
    ExperimentConfig config;
    if (!config_path.empty()) {
        const Json j = load_json_file(config_path);
        config.name = j.value("name", name);
        config.seed = j.value("seed", seed);
        config.output_dir = j.value("output_dir", out_dir);
        if (j.contains("params"))
            for (const auto& [k, v] : j.at("params").items())
                config.params[k] = v.get<double>();
    } else {
        config.name = name;
        config.seed = seed;
        config.output_dir = out_dir;
    }
    for (const std::string& kv : param_args) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ContractViolation("--param expects key=value, got '" + kv + "'");
        try {
            config.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
            throw ContractViolation("--param value in '" + kv + "' is not a number");
        }
    }
    bool known = false;
    for (const std::string& n : experiment_names()) known = known || n == config.name;
    if (!known) {
        std::string all;
        for (const std::string& n : experiment_names()) all += (all.empty() ? "" : ", ") + n;
        throw CLI::ValidationError("repro", "unknown experiment '" + config.name +
                                                "' (known: " + all + ")");
    }
    const ExperimentManifest manifest = run_experiment(config);
    std::cout << manifest_to_json(manifest).dump(2) << '\n';
    return 0;
}

int run_validate(const std::vector<std::string>& paths) {
    bool all_ok = true;
    for (const std::string& path : paths) {
        ValidationReport report;
        try {
            report = validate_document(load_json_file(path));
        } catch (const SchemaError& e) {
            report.ok = false;
            report.issues.push_back({"document", e.what()});
        }
        all_ok = all_ok && report.ok;
        std::cout << path << ": " << report.summary() << '\n';
    }
    return all_ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowcap: normalizing-flow expressivity toolkit"};
    app.require_subcommand(1);

    std::string flow_path, base_path, target_path, matrix_path, out_path, flow_out;
    std::string p_path, q_path, config_path;
    std::vector<std::string> point_args, validate_paths, param_args;
    std::string points_path, mode = "auto", family, dims_text, repro_name;
    std::uint64_t seed = 20260818;
    double eps = 0.05, margin = 0.0, kappa = 1.0, tau = 0.5, c_h = 2.0;
    double lo = 0.0, hi = 0.0;
    std::size_t pieces = 100, n_points = 500, grid_n = (1u << 14) + 1;
    int m = 0;

    CLI::App* flow = app.add_subcommand("flow", "evaluate or invert a flow stack");
    flow->require_subcommand(1);
    CLI::App* feval = flow->add_subcommand("eval", "map points forward with log-det");
    CLI::App* finv = flow->add_subcommand("invert", "map points through the inverse");
    for (CLI::App* sub : {feval, finv}) {
        sub->add_option("--flow", flow_path, "flow stack JSON")->required();
        sub->add_option("--point", point_args, "comma-separated coordinates (repeatable)");
        sub->add_option("--points", points_path, "CSV file of points, one per row");
        sub->add_option("--out", out_path, "output CSV (stdout when omitted)");
    }

    CLI::App* synth = app.add_subcommand("synth-1d", "synthesize a ReLU planar stack for a 1D target");
    synth->add_option("--target", target_path, "target distribution JSON")->required();
    synth->add_option("--eps", eps, "l1 budget for piecewise-constant conversion");
    synth->add_option("--pieces", pieces, "bin count for generic 1D targets");
    synth->add_option("--flow-out", flow_out, "write the synthesized stack JSON here");
    synth->add_option("--out", out_path, "report JSON (stdout when omitted)");

    CLI::App* compile = app.add_subcommand("compile-linear", "compile an invertible matrix into flow layers");
    compile->add_option("--matrix", matrix_path, "matrix JSON (2D array)")->required();
    compile->add_option("--flow-out", flow_out, "write the compiled stack JSON here");
    compile->add_option("--out", out_path, "summary JSON (stdout when omitted)");

    CLI::App* topo = app.add_subcommand("topo-check", "transport residual diagnostics at sampled points");
    topo->add_option("--flow", flow_path, "flow stack JSON")->required();
    topo->add_option("--base", base_path, "base distribution JSON")->required();
    topo->add_option("--n", n_points, "number of sampled points");
    topo->add_option("--seed", seed, "sampling seed");
    topo->add_option("--mode", mode, "relu | span | radial | auto");
    topo->add_option("--margin", margin, "hyperplane exclusion margin");
    topo->add_option("--out", out_path, "per-point CSV report");

    CLI::App* feas = app.add_subcommand("feasibility", "covariance-level family feasibility verdicts");
    feas->add_option("--sigma-q", q_path, "base covariance JSON")->required();
    feas->add_option("--sigma-p", p_path, "target covariance JSON")->required();
    feas->add_option("--family", family, "planar_smooth | sylvester_smooth | radial | relu_sylvester | all");
    feas->add_option("-m,--width", m, "sylvester width m");
    feas->add_option("--out", out_path, "verdict JSON (stdout when omitted)");

    CLI::App* capacity = app.add_subcommand("capacity", "closed-form capacity bounds across dimensions");
    capacity->add_option("--family", family, "householder | local_planar")->required();
    capacity->add_option("--kappa", kappa, "householder off-diagonal exponent");
    capacity->add_option("--tau", tau, "local_planar radial exponent");
    capacity->add_option("--c-h", c_h, "local_planar locality constant");
    capacity->add_option("--dims", dims_text, "comma-separated dimensions")->required();
    capacity->add_option("--out", out_path, "output CSV (stdout when omitted)");

    CLI::App* l1 = app.add_subcommand("l1", "grid l1 distance between two 1D distributions");
    l1->add_option("--p", p_path, "first distribution JSON")->required();
    l1->add_option("--q", q_path, "second distribution JSON")->required();
    l1->add_option("--lo", lo, "window lower edge");
    l1->add_option("--hi", hi, "window upper edge");
    l1->add_option("--n", grid_n, "grid points");
    l1->add_option("--out", out_path, "result JSON (stdout when omitted)");

    CLI::App* repro = app.add_subcommand("repro", "run a named reproduction experiment");
    repro->add_option("name", repro_name, "experiment name");
    repro->add_option("--seed", seed, "experiment seed");
    repro->add_option("--out", out_path, "output directory");
    repro->add_option("--param", param_args, "name-specific key=value (repeatable)");
    repro->add_option("--config", config_path, "ExperimentConfig JSON file");

    CLI::App* validate = app.add_subcommand("validate", "validate distribution/flow JSON files");
    validate->add_option("files", validate_paths, "JSON files to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (feval->parsed()) return run_flow(flow_path, point_args, points_path, out_path, false);
        if (finv->parsed()) return run_flow(flow_path, point_args, points_path, out_path, true);
        if (synth->parsed()) return run_synth(target_path, eps, pieces, flow_out, out_path);
        if (compile->parsed()) return run_compile(matrix_path, flow_out, out_path);
        if (topo->parsed())
            return run_topo(flow_path, base_path, n_points, seed, mode, margin, out_path);
        if (feas->parsed()) return run_feasibility(q_path, p_path, family, m, out_path);
        if (capacity->parsed())
            return run_capacity(family, kappa, tau, c_h, dims_text, out_path);
        if (l1->parsed()) return run_l1(p_path, q_path, lo, hi, grid_n, out_path);
        if (repro->parsed()) {
            const std::string dir = out_path.empty() ? "." : out_path;
            return run_repro(repro_name, seed, dir, param_args, config_path);
        }
        if (validate->parsed()) return run_validate(validate_paths);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const HypothesisViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const InvertibilityViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const NonSmoothPoint& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 2;
}
