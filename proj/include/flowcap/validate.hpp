#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flowcap/serialize.hpp"

namespace flowcap {

struct ValidationIssue {
    std::string path;    // e.g. "layers[2].v"
    std::string message; // what is wrong at that path
};

struct ValidationReport {
    bool ok = false;
    std::string schema; // declared schema string, empty if absent
    std::vector<ValidationIssue> issues;

    std::string summary() const {
        if (ok) return "valid (" + schema + ")";
        std::string s = "invalid";
        if (!schema.empty()) s += " (" + schema + ")";
        for (const ValidationIssue& i : issues) s += "\n  " + i.path + ": " + i.message;
        return s;
    }
};

namespace detail {

// Schema errors carry their field path as a "path: message" prefix.
inline ValidationIssue issue_from_message(const std::string& what) {
    const std::size_t sep = what.find(": ");
    if (sep == std::string::npos || sep == 0) return {"document", what};
    return {what.substr(0, sep), what.substr(sep + 2)};
}

inline void validate_flow_layers(const Json& j, ValidationReport& report) {
    if (!j.contains("layers")) {
        report.issues.push_back({"document", "missing field 'layers'"});
        return;
    }
    const Json& layers = j.at("layers");
    if (!layers.is_array()) {
        report.issues.push_back({"document.layers", "expected an array"});
        return;
    }
    FlowStack stack;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = "layers[" + std::to_string(i) + "]";
        try {
            stack.push_back(layer_from_json(layers[i], path));
        } catch (const SchemaError& e) {
            report.issues.push_back(issue_from_message(e.what()));
        } catch (const Error& e) {
            std::string field_path = path;
            if (layers[i].is_object() && layers[i].contains("variant") &&
                layers[i].at("variant").is_string() &&
                layers[i].at("variant").get<std::string>() == "householder")
                field_path += ".v";
            report.issues.push_back({field_path, e.what()});
        }
    }
}

} // namespace detail

// Structural and semantic validation of a serialized distribution or flow
// document. Collects every issue it can find with its field path instead of
// stopping at the first.
inline ValidationReport validate_document(const Json& j) {
    ValidationReport report;
    if (!j.is_object()) {
        report.issues.push_back({"document", "expected an object"});
        return report;
    }
    if (!j.contains("schema") || !j.at("schema").is_string()) {
        report.issues.push_back({"document.schema", "missing or non-string schema field"});
        return report;
    }
    report.schema = j.at("schema").get<std::string>();
    if (report.schema == dist_schema) {
        try {
            dist_from_json(j);
        } catch (const SchemaError& e) {
            report.issues.push_back(detail::issue_from_message(e.what()));
        } catch (const Error& e) {
            report.issues.push_back({"document", e.what()});
        }
    } else if (report.schema == flow_schema) {
        detail::validate_flow_layers(j, report);
    } else {
        report.issues.push_back({"document.schema",
                                 "unknown schema '" + report.schema + "' (expected '" +
                                     dist_schema + "' or '" + flow_schema + "')"});
    }
    report.ok = report.issues.empty();
    return report;
}

} // namespace flowcap
