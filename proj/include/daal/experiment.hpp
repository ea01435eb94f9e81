#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "network.hpp"

namespace daal {

inline std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::softmax: return "softmax";
        case LossKind::softmax_daal: return "softmax+daal";
        case LossKind::normalized_softmax: return "normalized_softmax";
        case LossKind::sphereface: return "sphereface";
        case LossKind::cosface: return "cosface";
        case LossKind::arcface: return "arcface";
        case LossKind::softmax_center: return "softmax+center";
        case LossKind::triplet_center: return "triplet_center";
        case LossKind::triplet: return "triplet";
    }
    throw ConfigError("unknown loss kind");
}

inline LossKind loss_kind_from_name(const std::string& name) {
    if (name == "softmax") return LossKind::softmax;
    if (name == "softmax+daal") return LossKind::softmax_daal;
    if (name == "normalized_softmax") return LossKind::normalized_softmax;
    if (name == "sphereface") return LossKind::sphereface;
    if (name == "cosface") return LossKind::cosface;
    if (name == "arcface") return LossKind::arcface;
    if (name == "softmax+center") return LossKind::softmax_center;
    if (name == "triplet_center") return LossKind::triplet_center;
    if (name == "triplet") return LossKind::triplet;
    throw ConfigError("config: unknown loss '" + name + "'");
}

/// Everything one command run needs, with defaults injected at parse time so
/// the echoed config is fully resolved.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::string> csv_path;
    double test_fraction = 0.5;
    NetworkSpec network;  // input_dim 0 means "infer from the data source"
    TrainConfig train;
    std::vector<std::size_t> k_list{1, 2, 4, 8, 16, 32};
    std::size_t kmeans_restarts = 8;
    std::size_t kmeans_max_iter = 100;
    bool normalized_retrieval = false;
    std::vector<std::uint64_t> compare_seeds{1, 2, 3, 4, 5};
    std::vector<std::string> compare_arms{"softmax", "softmax+daal"};
    std::string out_dir = "out";

    void validate() const {
        if (synthetic.has_value() == csv_path.has_value())
            throw ConfigError("config: exactly one data source (synthetic or csv) is required");
        if (synthetic) synthetic->validate();
        if (csv_path && !std::filesystem::exists(*csv_path))
            throw ConfigError("config: csv file '" + *csv_path + "' does not exist");
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            throw ConfigError("config: test_fraction must be in (0, 1)");
        train.validate();
        train.daal.validate();
        if (k_list.empty()) throw ConfigError("config: metrics k_list must be non-empty");
        if (kmeans_restarts < 1 || kmeans_max_iter < 1)
            throw ConfigError("config: kmeans_restarts and kmeans_max_iter must be >= 1");
        if (compare_seeds.empty()) throw ConfigError("config: compare seeds must be non-empty");
        if (compare_arms.size() != 2) throw ConfigError("config: compare needs exactly two arms");
        for (const auto& arm : compare_arms) loss_kind_from_name(arm);
        // Network counts are validated against the data source when commands
        // resolve it; structural checks happen here.
        if (network.hidden_dims.empty())
            throw ConfigError("config: network needs at least one hidden layer");
        if (network.dropout_rates.size() != network.hidden_dims.size())
            throw ConfigError("config: one dropout rate per hidden layer");
        for (double r : network.dropout_rates)
            if (r < 0.0 || r >= 1.0) throw ConfigError("config: dropout rates must be in [0, 1)");
        if (network.embedding_dim < 1) throw ConfigError("config: embedding_dim must be >= 1");
    }
};

namespace detail {

template <typename T>
inline T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::reject_unknown_keys(j,
                                {"seed", "data", "test_fraction", "network", "train", "loss",
                                 "metrics", "compare", "out_dir"},
                                "config");
    ExperimentConfig cfg;
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", cfg.out_dir);
    cfg.test_fraction = detail::get_or<double>(j, "test_fraction", cfg.test_fraction);

    if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
    const json& data = j.at("data");
    detail::reject_unknown_keys(data, {"synthetic", "csv"}, "data");
    if (data.contains("synthetic")) {
        const json& s = data.at("synthetic");
        detail::reject_unknown_keys(s,
                                    {"num_classes", "modes_per_class", "samples_per_class",
                                     "input_dim", "class_separation", "mode_spread",
                                     "within_mode_std", "seed"},
                                    "data.synthetic");
        SyntheticSpec spec;
        spec.num_classes = detail::get_or<std::size_t>(s, "num_classes", spec.num_classes);
        spec.modes_per_class = detail::get_or<std::size_t>(s, "modes_per_class", spec.modes_per_class);
        spec.samples_per_class =
            detail::get_or<std::size_t>(s, "samples_per_class", spec.samples_per_class);
        spec.input_dim = detail::get_or<std::size_t>(s, "input_dim", spec.input_dim);
        spec.class_separation = detail::get_or<double>(s, "class_separation", spec.class_separation);
        spec.mode_spread = detail::get_or<double>(s, "mode_spread", spec.mode_spread);
        spec.within_mode_std = detail::get_or<double>(s, "within_mode_std", spec.within_mode_std);
        spec.seed = detail::get_or<std::uint64_t>(s, "seed", cfg.seed);
        cfg.synthetic = spec;
    }
    if (data.contains("csv")) cfg.csv_path = data.at("csv").get<std::string>();

    if (j.contains("network")) {
        const json& n = j.at("network");
        detail::reject_unknown_keys(
            n, {"input_dim", "hidden_dims", "embedding_dim", "num_classes", "dropout_rates"},
            "network");
        cfg.network.input_dim = detail::get_or<std::size_t>(n, "input_dim", 0);
        cfg.network.hidden_dims =
            detail::get_or<std::vector<std::size_t>>(n, "hidden_dims", cfg.network.hidden_dims);
        cfg.network.embedding_dim =
            detail::get_or<std::size_t>(n, "embedding_dim", cfg.network.embedding_dim);
        cfg.network.num_classes = detail::get_or<std::size_t>(n, "num_classes", 0);
        cfg.network.dropout_rates = detail::get_or<std::vector<double>>(
            n, "dropout_rates", std::vector<double>(cfg.network.hidden_dims.size(), 0.2));
    } else {
        cfg.network.input_dim = 0;
        cfg.network.num_classes = 0;
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        detail::reject_unknown_keys(
            t, {"learning_rate", "momentum", "batch_size", "epochs"}, "train");
        cfg.train.learning_rate = detail::get_or<double>(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.momentum = detail::get_or<double>(t, "momentum", cfg.train.momentum);
        cfg.train.batch_size = detail::get_or<std::size_t>(t, "batch_size", cfg.train.batch_size);
        cfg.train.epochs = detail::get_or<std::size_t>(t, "epochs", cfg.train.epochs);
    }
    cfg.train.seed = cfg.seed;

    if (j.contains("loss")) {
        const json& l = j.at("loss");
        detail::reject_unknown_keys(l, {"name", "weights", "daal", "baseline"}, "loss");
        cfg.train.loss = loss_kind_from_name(detail::get_or<std::string>(l, "name", "softmax"));
        if (l.contains("weights")) {
            const json& w = l.at("weights");
            detail::reject_unknown_keys(w, {"lambda_s", "lambda_daal"}, "loss.weights");
            cfg.train.weights.lambda_s =
                detail::get_or<double>(w, "lambda_s", cfg.train.weights.lambda_s);
            cfg.train.weights.lambda_daal =
                detail::get_or<double>(w, "lambda_daal", cfg.train.weights.lambda_daal);
        }
        if (l.contains("daal")) {
            const json& d = l.at("daal");
            detail::reject_unknown_keys(
                d, {"delta", "tau", "eta", "lambda_inter", "init_length", "intra_mode"},
                "loss.daal");
            cfg.train.daal.delta = detail::get_or<double>(d, "delta", cfg.train.daal.delta);
            cfg.train.daal.tau = detail::get_or<double>(d, "tau", cfg.train.daal.tau);
            cfg.train.daal.eta = detail::get_or<double>(d, "eta", cfg.train.daal.eta);
            cfg.train.daal.lambda_inter =
                detail::get_or<double>(d, "lambda_inter", cfg.train.daal.lambda_inter);
            cfg.train.daal.init_length =
                detail::get_or<double>(d, "init_length", cfg.train.daal.init_length);
            const auto mode = detail::get_or<std::string>(d, "intra_mode", "segment");
            if (mode == "segment")
                cfg.train.daal.intra_mode = IntraMode::segment;
            else if (mode == "nearest_vertex")
                cfg.train.daal.intra_mode = IntraMode::nearest_vertex;
            else
                throw ConfigError("config: intra_mode must be 'segment' or 'nearest_vertex'");
        }
        if (l.contains("baseline")) {
            const json& b = l.at("baseline");
            detail::reject_unknown_keys(b,
                                        {"margin", "scale", "center_alpha", "center_lambda",
                                         "triplet_margin", "triplet_center_margin"},
                                        "loss.baseline");
            cfg.train.baseline.margin = detail::get_or<double>(b, "margin", cfg.train.baseline.margin);
            cfg.train.baseline.scale = detail::get_or<double>(b, "scale", cfg.train.baseline.scale);
            cfg.train.baseline.center_alpha =
                detail::get_or<double>(b, "center_alpha", cfg.train.baseline.center_alpha);
            cfg.train.baseline.center_lambda =
                detail::get_or<double>(b, "center_lambda", cfg.train.baseline.center_lambda);
            cfg.train.baseline.triplet_margin =
                detail::get_or<double>(b, "triplet_margin", cfg.train.baseline.triplet_margin);
            cfg.train.baseline.triplet_center_margin = detail::get_or<double>(
                b, "triplet_center_margin", cfg.train.baseline.triplet_center_margin);
        }
    }

    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        detail::reject_unknown_keys(
            m, {"k_list", "kmeans_restarts", "kmeans_max_iter", "normalized"}, "metrics");
        cfg.k_list = detail::get_or<std::vector<std::size_t>>(m, "k_list", cfg.k_list);
        cfg.kmeans_restarts = detail::get_or<std::size_t>(m, "kmeans_restarts", cfg.kmeans_restarts);
        cfg.kmeans_max_iter = detail::get_or<std::size_t>(m, "kmeans_max_iter", cfg.kmeans_max_iter);
        cfg.normalized_retrieval = detail::get_or<bool>(m, "normalized", cfg.normalized_retrieval);
    }

    if (j.contains("compare")) {
        const json& c = j.at("compare");
        detail::reject_unknown_keys(c, {"seeds", "arms"}, "compare");
        cfg.compare_seeds =
            detail::get_or<std::vector<std::uint64_t>>(c, "seeds", cfg.compare_seeds);
        cfg.compare_arms = detail::get_or<std::vector<std::string>>(c, "arms", cfg.compare_arms);
    }

    cfg.validate();
    return cfg;
}

/// Fully-resolved echo of the configuration; every emitted JSON embeds it.
inline json config_to_json(const ExperimentConfig& cfg) {
    json data;
    if (cfg.synthetic) {
        data["synthetic"] = json{{"num_classes", cfg.synthetic->num_classes},
                                 {"modes_per_class", cfg.synthetic->modes_per_class},
                                 {"samples_per_class", cfg.synthetic->samples_per_class},
                                 {"input_dim", cfg.synthetic->input_dim},
                                 {"class_separation", cfg.synthetic->class_separation},
                                 {"mode_spread", cfg.synthetic->mode_spread},
                                 {"within_mode_std", cfg.synthetic->within_mode_std},
                                 {"seed", cfg.synthetic->seed}};
    } else {
        data["csv"] = *cfg.csv_path;
    }
    const char* intra = cfg.train.daal.intra_mode == IntraMode::segment ? "segment"
                                                                        : "nearest_vertex";
    return json{
        {"seed", cfg.seed},
        {"data", data},
        {"test_fraction", cfg.test_fraction},
        {"network",
         json{{"input_dim", cfg.network.input_dim},
              {"hidden_dims", cfg.network.hidden_dims},
              {"embedding_dim", cfg.network.embedding_dim},
              {"num_classes", cfg.network.num_classes},
              {"dropout_rates", cfg.network.dropout_rates}}},
        {"train",
         json{{"learning_rate", cfg.train.learning_rate},
              {"momentum", cfg.train.momentum},
              {"batch_size", cfg.train.batch_size},
              {"epochs", cfg.train.epochs}}},
        {"loss",
         json{{"name", loss_kind_name(cfg.train.loss)},
              {"weights",
               json{{"lambda_s", cfg.train.weights.lambda_s},
                    {"lambda_daal", cfg.train.weights.lambda_daal}}},
              {"daal",
               json{{"delta", cfg.train.daal.delta},
                    {"tau", cfg.train.daal.tau},
                    {"eta", cfg.train.daal.eta},
                    {"lambda_inter", cfg.train.daal.lambda_inter},
                    {"init_length", cfg.train.daal.init_length},
                    {"intra_mode", intra}}},
              {"baseline",
               json{{"margin", cfg.train.baseline.margin},
                    {"scale", cfg.train.baseline.scale},
                    {"center_alpha", cfg.train.baseline.center_alpha},
                    {"center_lambda", cfg.train.baseline.center_lambda},
                    {"triplet_margin", cfg.train.baseline.triplet_margin},
                    {"triplet_center_margin", cfg.train.baseline.triplet_center_margin}}}}},
        {"metrics",
         json{{"k_list", cfg.k_list},
              {"kmeans_restarts", cfg.kmeans_restarts},
              {"kmeans_max_iter", cfg.kmeans_max_iter},
              {"normalized", cfg.normalized_retrieval}}},
        {"compare", json{{"seeds", cfg.compare_seeds}, {"arms", cfg.compare_arms}}},
        {"out_dir", cfg.out_dir}};
}

/// FNV-1a 64 over the compact dump of the resolved config.
inline std::string config_hash(const json& resolved) {
    const std::string dump = resolved.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xF];
    buf[16] = '\0';
    return std::string(buf);
}

inline ExperimentConfig load_config_file(const std::string& path) {
    return config_from_json(read_json_file(path));
}

}  // namespace daal
