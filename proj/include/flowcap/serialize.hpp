#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/mixture.hpp"
#include "flowcap/densities/piecewise.hpp"
#include "flowcap/densities/product.hpp"
#include "flowcap/densities/radial.hpp"
#include "flowcap/density.hpp"
#include "flowcap/errors.hpp"
#include "flowcap/flow_layer.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/version.hpp"

namespace flowcap {

using Json = nlohmann::json;

// A document cannot be read or written under the declared schema.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

namespace detail {

inline Json vec_to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Vec vec_from_json(const Json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path + ": expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw SchemaError(path + "[" + std::to_string(i) + "]: expected a number");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline Mat mat_from_json(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw SchemaError(path + ": expected a nonempty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) throw SchemaError(path + "[0]: expected a nonempty row");
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw SchemaError(path + "[" + std::to_string(i) + "]: rows must share one length");
        for (std::size_t k = 0; k < cols; ++k) {
            if (!j[i][k].is_number())
                throw SchemaError(path + "[" + std::to_string(i) + "][" + std::to_string(k) +
                                  "]: expected a number");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

inline std::vector<double> dvec_from_json(const Json& j, const std::string& path) {
    const Vec v = vec_from_json(j, path);
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline const Json& require(const Json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw SchemaError(path + ": missing field '" + key + "'");
    return j.at(key);
}

inline double require_number(const Json& j, const std::string& key, const std::string& path) {
    const Json& v = require(j, key, path);
    if (!v.is_number()) throw SchemaError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::string require_string(const Json& j, const std::string& key,
                                  const std::string& path) {
    const Json& v = require(j, key, path);
    if (!v.is_string()) throw SchemaError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

} // namespace detail

inline Json dist_to_json(const Density& d);

namespace detail {

inline Json dist_body_to_json(const Density& d) {
    Json j;
    if (const auto* g1 = dynamic_cast<const Gaussian1D*>(&d)) {
        j["kind"] = "gaussian1d";
        j["mu"] = g1->mu();
        j["sigma"] = g1->sigma();
    } else if (const auto* g = dynamic_cast<const Gaussian*>(&d)) {
        j["kind"] = "gaussian";
        j["mean"] = vec_to_json(g->mean());
        j["cov"] = mat_to_json(g->cov());
    } else if (const auto* mix = dynamic_cast<const Mixture*>(&d)) {
        j["kind"] = "mixture";
        j["weights"] = mix->weights();
        Json comps = Json::array();
        for (const DensityPtr& c : mix->components()) comps.push_back(dist_body_to_json(*c));
        j["components"] = std::move(comps);
    } else if (const auto* pwc = dynamic_cast<const Pwc1D*>(&d)) {
        j["kind"] = "pwc1d";
        j["breakpoints"] = pwc->breakpoints();
        j["values"] = pwc->values();
    } else if (const auto* pwg = dynamic_cast<const Pwg1D*>(&d)) {
        j["kind"] = "pwg1d";
        j["breakpoints"] = pwg->breakpoints();
        j["mus"] = pwg->mus();
        j["sigmas"] = pwg->sigmas();
    } else if (const auto* rad = dynamic_cast<const RadialDensity*>(&d)) {
        j["kind"] = "radial";
        j["dim"] = rad->dim();
        j["tau"] = rad->tau();
        j["profile"] = rad->profile() == RadialProfile::flat_core ? "flat_core" : "pure";
    } else if (const auto* prod = dynamic_cast<const ProductPowDensity*>(&d)) {
        if (prod->g().name.empty())
            throw SchemaError("product_pow density with a custom g is not serializable");
        j["kind"] = "product_pow";
        j["g"] = prod->g().name;
        j["r"] = prod->r();
        j["dim"] = prod->dim();
    } else {
        throw SchemaError("density type is not serializable");
    }
    return j;
}

inline DensityPtr dist_body_from_json(const Json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path + ": expected an object");
    const std::string kind = require_string(j, "kind", path);
    if (kind == "gaussian1d") {
        return std::make_shared<Gaussian1D>(require_number(j, "mu", path),
                                            require_number(j, "sigma", path));
    }
    if (kind == "gaussian") {
        return std::make_shared<Gaussian>(
            vec_from_json(require(j, "mean", path), path + ".mean"),
            mat_from_json(require(j, "cov", path), path + ".cov"));
    }
    if (kind == "mixture") {
        const Json& jw = require(j, "weights", path);
        const Json& jc = require(j, "components", path);
        if (!jc.is_array()) throw SchemaError(path + ".components: expected an array");
        std::vector<DensityPtr> comps;
        for (std::size_t i = 0; i < jc.size(); ++i)
            comps.push_back(
                dist_body_from_json(jc[i], path + ".components[" + std::to_string(i) + "]"));
        return std::make_shared<Mixture>(dvec_from_json(jw, path + ".weights"),
                                         std::move(comps));
    }
    if (kind == "pwc1d") {
        return std::make_shared<Pwc1D>(
            dvec_from_json(require(j, "breakpoints", path), path + ".breakpoints"),
            dvec_from_json(require(j, "values", path), path + ".values"));
    }
    if (kind == "pwg1d") {
        return std::make_shared<Pwg1D>(
            dvec_from_json(require(j, "breakpoints", path), path + ".breakpoints"),
            dvec_from_json(require(j, "mus", path), path + ".mus"),
            dvec_from_json(require(j, "sigmas", path), path + ".sigmas"));
    }
    if (kind == "radial") {
        const std::string profile = require_string(j, "profile", path);
        if (profile != "pure" && profile != "flat_core")
            throw SchemaError(path + ".profile: expected \"pure\" or \"flat_core\"");
        return std::make_shared<RadialDensity>(
            static_cast<int>(require_number(j, "dim", path)), require_number(j, "tau", path),
            profile == "flat_core" ? RadialProfile::flat_core : RadialProfile::pure);
    }
    if (kind == "product_pow") {
        return std::make_shared<ProductPowDensity>(
            Func1D::by_name(require_string(j, "g", path)), require_number(j, "r", path),
            static_cast<int>(require_number(j, "dim", path)));
    }
    throw SchemaError(path + ".kind: unknown density kind '" + kind + "'");
}

} // namespace detail

inline Json dist_to_json(const Density& d) {
    Json j = detail::dist_body_to_json(d);
    j["schema"] = dist_schema;
    return j;
}

inline DensityPtr dist_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("document: expected an object");
    const std::string schema = detail::require_string(j, "schema", "document");
    if (schema != dist_schema)
        throw SchemaError("document.schema: expected \"" + std::string(dist_schema) +
                          "\", got \"" + schema + "\"");
    return detail::dist_body_from_json(j, "document");
}

namespace detail {

inline Json layer_to_json(const FlowLayer& layer) {
    Json j;
    switch (layer.layer_kind()) {
    case LayerKind::planar: {
        const auto& p = static_cast<const PlanarLayer&>(layer);
        if (p.nonlinearity().kind == "custom-smooth")
            throw SchemaError("planar layer with a custom nonlinearity is not serializable");
        j["variant"] = "planar";
        j["u"] = vec_to_json(p.u());
        j["w"] = vec_to_json(p.w());
        j["b"] = p.b();
        j["h"] = p.nonlinearity().kind;
        break;
    }
    case LayerKind::sylvester: {
        const auto& s = static_cast<const SylvesterLayer&>(layer);
        if (s.nonlinearity().kind == "custom-smooth")
            throw SchemaError("sylvester layer with a custom nonlinearity is not serializable");
        j["variant"] = "sylvester";
        j["A"] = mat_to_json(s.A());
        j["B"] = mat_to_json(s.B());
        j["b"] = vec_to_json(s.bias());
        j["h"] = s.nonlinearity().kind;
        break;
    }
    case LayerKind::radial: {
        const auto& r = static_cast<const RadialLayer&>(layer);
        j["variant"] = "radial";
        j["a"] = r.a();
        j["b"] = r.b();
        j["z0"] = vec_to_json(r.z0());
        break;
    }
    case LayerKind::householder: {
        const auto& h = static_cast<const HouseholderLayer&>(layer);
        j["variant"] = "householder";
        j["v"] = vec_to_json(h.v());
        break;
    }
    }
    return j;
}

inline std::unique_ptr<FlowLayer> layer_from_json(const Json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path + ": expected an object");
    const std::string variant = require_string(j, "variant", path);
    if (variant == "planar") {
        return std::make_unique<PlanarLayer>(
            vec_from_json(require(j, "u", path), path + ".u"),
            vec_from_json(require(j, "w", path), path + ".w"), require_number(j, "b", path),
            Nonlinearity::by_name(require_string(j, "h", path)));
    }
    if (variant == "sylvester") {
        return std::make_unique<SylvesterLayer>(
            mat_from_json(require(j, "A", path), path + ".A"),
            mat_from_json(require(j, "B", path), path + ".B"),
            vec_from_json(require(j, "b", path), path + ".b"),
            Nonlinearity::by_name(require_string(j, "h", path)));
    }
    if (variant == "radial") {
        return std::make_unique<RadialLayer>(require_number(j, "a", path),
                                             require_number(j, "b", path),
                                             vec_from_json(require(j, "z0", path), path + ".z0"));
    }
    if (variant == "householder") {
        return std::make_unique<HouseholderLayer>(
            vec_from_json(require(j, "v", path), path + ".v"));
    }
    throw SchemaError(path + ".variant: unknown layer variant '" + variant + "'");
}

} // namespace detail

inline Json flow_to_json(const FlowStack& stack) {
    Json j;
    j["schema"] = flow_schema;
    Json layers = Json::array();
    for (std::size_t i = 0; i < stack.size(); ++i)
        layers.push_back(detail::layer_to_json(stack.layer(i)));
    j["layers"] = std::move(layers);
    return j;
}

inline FlowStack flow_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("document: expected an object");
    const std::string schema = detail::require_string(j, "schema", "document");
    if (schema != flow_schema)
        throw SchemaError("document.schema: expected \"" + std::string(flow_schema) +
                          "\", got \"" + schema + "\"");
    const Json& layers = detail::require(j, "layers", "document");
    if (!layers.is_array()) throw SchemaError("document.layers: expected an array");
    FlowStack stack;
    for (std::size_t i = 0; i < layers.size(); ++i)
        stack.push_back(detail::layer_from_json(layers[i], "layers[" + std::to_string(i) + "]"));
    return stack;
}

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "' for reading");
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
    }
    return j;
}

inline void save_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw SchemaError("failed to write '" + path + "'");
}

} // namespace flowcap
