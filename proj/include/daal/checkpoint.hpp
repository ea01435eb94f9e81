#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "adaptive_line.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "numerics.hpp"

namespace daal {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.rows * m.cols)
        throw ParseError("checkpoint: matrix data length does not match its shape");
    m.data = data;
    return m;
}

inline json network_spec_to_json(const NetworkSpec& spec) {
    return json{{"input_dim", spec.input_dim},
                {"hidden_dims", spec.hidden_dims},
                {"embedding_dim", spec.embedding_dim},
                {"num_classes", spec.num_classes},
                {"dropout_rates", spec.dropout_rates},
                {"activation", spec.activation == ActivationKind::swish ? "swish" : "identity"}};
}

inline NetworkSpec network_spec_from_json(const json& j) {
    NetworkSpec spec;
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    spec.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.dropout_rates = j.at("dropout_rates").get<std::vector<double>>();
    const auto act = j.value("activation", std::string("swish"));
    if (act == "swish")
        spec.activation = ActivationKind::swish;
    else if (act == "identity")
        spec.activation = ActivationKind::identity;
    else
        throw ParseError("checkpoint: unknown activation '" + act + "'");
    return spec;
}

/// Layer-wise weight/bias arrays plus the spec; momenta are transient and
/// reset to zero on load.
inline json network_to_json(const NetworkState& state) {
    json layers = json::array();
    for (const auto& layer : state.layers)
        layers.push_back(json{{"weights", matrix_to_json(layer.w)}, {"biases", layer.b}});
    return json{{"format", "daal-network"}, {"version", 1},
                {"spec", network_spec_to_json(state.spec)}, {"layers", layers}};
}

inline NetworkState network_from_json(const json& j) {
    if (j.value("format", "") != "daal-network")
        throw ParseError("checkpoint: not a network checkpoint");
    NetworkState state;
    state.spec = network_spec_from_json(j.at("spec"));
    state.spec.validate();

    std::vector<std::size_t> dims;
    dims.push_back(state.spec.input_dim);
    for (std::size_t w : state.spec.hidden_dims) dims.push_back(w);
    dims.push_back(state.spec.embedding_dim);
    dims.push_back(state.spec.num_classes);

    const auto& layers = j.at("layers");
    if (layers.size() != dims.size() - 1)
        throw ParseError("checkpoint: layer count does not match the spec");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        DenseLayer layer;
        layer.w = matrix_from_json(layers[l].at("weights"));
        layer.b = layers[l].at("biases").get<Vec>();
        if (layer.w.rows != dims[l] || layer.w.cols != dims[l + 1] ||
            layer.b.size() != dims[l + 1])
            throw ParseError("checkpoint: layer " + std::to_string(l) +
                             " shape does not match the spec");
        layer.vw = Matrix(layer.w.rows, layer.w.cols);
        layer.vb = Vec(layer.b.size(), 0.0);
        state.layers.push_back(std::move(layer));
    }
    return state;
}

/// Segment checkpoint: one record per class with full-precision vertices.
inline json segments_to_json(const LineSegmentSet& segments) {
    json records = json::array();
    for (std::size_t k = 0; k < segments.num_classes(); ++k)
        records.push_back(json{{"class_id", k},
                               {"A", segments.a[k]},
                               {"B", segments.b[k]},
                               {"v_hat", segments.v_hat[k]}});
    return json{{"format", "daal-segments"}, {"version", 1}, {"dim", segments.dim},
                {"segments", records}};
}

inline LineSegmentSet segments_from_json(const json& j) {
    if (j.value("format", "") != "daal-segments")
        throw ParseError("checkpoint: not a segment checkpoint");
    LineSegmentSet set;
    set.dim = j.at("dim").get<std::size_t>();
    const auto& records = j.at("segments");
    set.a.resize(records.size());
    set.b.resize(records.size());
    set.v_hat.resize(records.size());
    for (const auto& rec : records) {
        const std::size_t k = rec.at("class_id").get<std::size_t>();
        if (k >= records.size()) throw ParseError("checkpoint: segment class_id out of range");
        set.a[k] = rec.at("A").get<Vec>();
        set.b[k] = rec.at("B").get<Vec>();
        set.v_hat[k] = rec.at("v_hat").get<Vec>();
        if (set.a[k].size() != set.dim || set.b[k].size() != set.dim ||
            set.v_hat[k].size() != set.dim)
            throw ParseError("checkpoint: segment " + std::to_string(k) + " dimension mismatch");
    }
    return set;
}

inline json eval_report_to_json(const EvalReport& report) {
    json recall = json::object();
    for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
    return json{{"nmi", report.nmi},
                {"recall_at", recall},
                {"recall_average", report.recall_average},
                {"seed", report.seed},
                {"config_hash", report.config_hash}};
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError("json: " + std::string(e.what()) + " in '" + path + "'");
    }
    return j;
}

}  // namespace daal
