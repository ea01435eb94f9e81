#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "experiment.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "network.hpp"

namespace daal {

namespace detail {

inline LabeledDataset resolve_dataset(const ExperimentConfig& cfg) {
    if (cfg.synthetic) return generate_multimodal(*cfg.synthetic);
    return load_features_csv(*cfg.csv_path);
}

inline std::size_t count_classes(const LabeledDataset& ds) {
    std::size_t c = 0;
    for (int y : ds.labels) {
        if (y < 0) throw DomainError("dataset: negative label");
        c = std::max(c, std::size_t(y) + 1);
    }
    return c;
}

/// Fills in input_dim / num_classes from the data and cross-checks any
/// explicit values.
inline NetworkSpec resolve_network(const ExperimentConfig& cfg, const LabeledDataset& ds) {
    NetworkSpec spec = cfg.network;
    const std::size_t classes = count_classes(ds);
    if (spec.input_dim == 0)
        spec.input_dim = ds.dim();
    else if (spec.input_dim != ds.dim())
        throw ConfigError("config: network input_dim " + std::to_string(spec.input_dim) +
                          " does not match data width " + std::to_string(ds.dim()));
    if (spec.num_classes == 0)
        spec.num_classes = classes;
    else if (spec.num_classes < classes)
        throw ConfigError("config: network num_classes " + std::to_string(spec.num_classes) +
                          " is below the " + std::to_string(classes) + " classes in the data");
    spec.validate();
    return spec;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

inline Matrix maybe_normalize_rows(const Matrix& m, bool enabled) {
    if (!enabled) return m;
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < out.cols; ++j) norm += out(i, j) * out(i, j);
        norm = std::sqrt(norm);
        if (norm <= 1e-12) continue;
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) /= norm;
    }
    return out;
}

inline std::vector<std::size_t> effective_k_list(const std::vector<std::size_t>& ks,
                                                 std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t k : ks)
        if (k < n) out.push_back(k);
    if (out.empty())
        throw ConfigError("metrics: every K in k_list is >= the " + std::to_string(n) +
                          " evaluation samples");
    return out;
}

inline EvalReport evaluate_embeddings(const Matrix& embeddings, const std::vector<int>& labels,
                                      const ExperimentConfig& cfg, std::size_t num_classes) {
    EvalReport report;
    report.seed = cfg.seed;

    Partition truth;
    truth.assignments = labels;
    truth.num_clusters = int(num_classes);
    Partition pred = kmeans(embeddings, num_classes, cfg.kmeans_restarts, cfg.kmeans_max_iter,
                            cfg.seed);
    report.nmi = nmi(pred, truth);

    const Matrix retrieval = maybe_normalize_rows(embeddings, cfg.normalized_retrieval);
    report.recall_at = recall_at_k(retrieval, labels, effective_k_list(cfg.k_list, labels.size()));
    report.recall_average = recall_average(report.recall_at);
    return report;
}

}  // namespace detail

/// generate: write the configured synthetic dataset as a CSV feature file.
inline json cmd_generate(const ExperimentConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("generate: config must use a synthetic data source");
    detail::ensure_out_dir(cfg.out_dir);
    const LabeledDataset ds = generate_multimodal(*cfg.synthetic);
    const std::string path = detail::join_path(cfg.out_dir, "dataset.csv");
    save_features_csv(ds, path);

    const json echo = config_to_json(cfg);
    return json{{"command", "generate"},
                {"path", path},
                {"rows", ds.size()},
                {"classes", detail::count_classes(ds)},
                {"input_dim", ds.dim()},
                {"config", echo},
                {"config_hash", config_hash(echo)}};
}

/// train: fit on the train half of the split, persist the network checkpoint,
/// the segment checkpoint (DAAL runs only) and the per-epoch history.
inline json cmd_train(const ExperimentConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    const LabeledDataset ds = detail::resolve_dataset(cfg);
    const NetworkSpec spec = detail::resolve_network(cfg, ds);
    const auto [train_ds, test_ds] = stratified_split(ds, cfg.test_fraction, cfg.seed);

    const TrainResult result = train(spec, train_ds, cfg.train);

    const json echo = config_to_json(cfg);
    const std::string hash = config_hash(echo);

    const std::string ckpt_path = detail::join_path(cfg.out_dir, "checkpoint.json");
    json ckpt = network_to_json(result.state);
    ckpt["config_hash"] = hash;
    write_json_file(ckpt, ckpt_path);

    std::string segments_path;
    if (!result.segments.empty()) {
        segments_path = detail::join_path(cfg.out_dir, "segments.json");
        json seg = segments_to_json(result.segments);
        seg["config_hash"] = hash;
        write_json_file(seg, segments_path);
    }

    json epochs = json::array();
    for (const auto& rec : result.history)
        epochs.push_back(json{{"epoch", rec.epoch},
                              {"total", rec.total},
                              {"softmax", rec.softmax_part},
                              {"daal", rec.daal_part}});
    const std::string history_path = detail::join_path(cfg.out_dir, "history.json");
    json history{{"config", echo}, {"config_hash", hash}, {"epochs", epochs}};
    write_json_file(history, history_path);

    json out{{"command", "train"},
             {"train_rows", train_ds.size()},
             {"test_rows", test_ds.size()},
             {"checkpoint", ckpt_path},
             {"history", history_path},
             {"epochs_run", result.history.size()},
             {"config", echo},
             {"config_hash", hash}};
    if (!segments_path.empty()) out["segments"] = segments_path;
    if (!result.history.empty()) out["final"] = epochs.back();
    return out;
}

/// eval: embed the test half in eval mode and score NMI / Recall@K.
inline json cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    detail::ensure_out_dir(cfg.out_dir);
    const NetworkState state = network_from_json(read_json_file(checkpoint_path));
    const LabeledDataset ds = detail::resolve_dataset(cfg);
    if (state.spec.input_dim != ds.dim())
        throw ConfigError("eval: checkpoint input_dim " + std::to_string(state.spec.input_dim) +
                          " does not match data width " + std::to_string(ds.dim()));
    if (detail::count_classes(ds) > state.spec.num_classes)
        throw ConfigError("eval: data has more classes than the checkpoint");
    const auto [train_ds, test_ds] = stratified_split(ds, cfg.test_fraction, cfg.seed);

    const ForwardCache fwd = forward_eval(state, test_ds.features);
    const json echo = config_to_json(cfg);
    EvalReport report = detail::evaluate_embeddings(fwd.embeddings, test_ds.labels, cfg,
                                                    state.spec.num_classes);
    report.config_hash = config_hash(echo);

    json out = eval_report_to_json(report);
    out["command"] = "eval";
    out["test_rows"] = test_ds.size();
    out["config"] = echo;
    write_json_file(out, detail::join_path(cfg.out_dir, "eval.json"));
    return out;
}

/// gradcheck: finite-difference suite for one loss or all of them.
inline json cmd_gradcheck(const std::string& loss_name, std::uint64_t seed) {
    const auto reports = run_gradcheck(loss_name.empty() ? "all" : loss_name, seed);
    json rows = json::array();
    bool all_pass = true;
    for (const auto& r : reports) {
        all_pass = all_pass && r.pass;
        rows.push_back(json{{"loss", r.loss},
                            {"points", r.points},
                            {"max_rel_err", r.max_rel_err},
                            {"pass", r.pass}});
    }
    return json{{"command", "gradcheck"}, {"seed", seed}, {"losses", rows}, {"pass", all_pass}};
}

/// compare: train both arms on identical data and seeds, report paired
/// metrics and per-seed deltas.
inline json cmd_compare(const ExperimentConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    const json echo = config_to_json(cfg);
    const std::string hash = config_hash(echo);

    json rows = json::array();
    std::vector<double> mean_nmi(2, 0.0), mean_r1(2, 0.0);
    double mean_delta_nmi = 0.0, mean_delta_r1 = 0.0;
    for (const std::uint64_t seed : cfg.compare_seeds) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.seed = seed;
        run_cfg.train.seed = seed;
        if (run_cfg.synthetic) run_cfg.synthetic->seed = seed;

        const LabeledDataset ds = detail::resolve_dataset(run_cfg);
        const NetworkSpec spec = detail::resolve_network(run_cfg, ds);
        const auto [train_ds, test_ds] = stratified_split(ds, run_cfg.test_fraction, seed);

        json arm_results = json::object();
        std::vector<double> nmi_by_arm, r1_by_arm;
        for (const std::string& arm : cfg.compare_arms) {
            TrainConfig tc = run_cfg.train;
            tc.loss = loss_kind_from_name(arm);
            const TrainResult result = train(spec, train_ds, tc);
            const ForwardCache fwd = forward_eval(result.state, test_ds.features);
            const EvalReport report = detail::evaluate_embeddings(fwd.embeddings, test_ds.labels,
                                                                  run_cfg, spec.num_classes);
            json arm_json = eval_report_to_json(report);
            arm_json.erase("seed");
            arm_json.erase("config_hash");
            arm_results[arm] = arm_json;
            nmi_by_arm.push_back(report.nmi);
            r1_by_arm.push_back(report.recall_at.count(1) ? report.recall_at.at(1) : 0.0);
        }
        const double delta_nmi = nmi_by_arm[1] - nmi_by_arm[0];
        const double delta_r1 = r1_by_arm[1] - r1_by_arm[0];
        rows.push_back(json{{"seed", seed},
                            {"arms", arm_results},
                            {"delta", json{{"nmi", delta_nmi}, {"r1", delta_r1}}}});
        for (int a = 0; a < 2; ++a) {
            mean_nmi[std::size_t(a)] += nmi_by_arm[std::size_t(a)];
            mean_r1[std::size_t(a)] += r1_by_arm[std::size_t(a)];
        }
        mean_delta_nmi += delta_nmi;
        mean_delta_r1 += delta_r1;
    }
    const double inv = 1.0 / double(cfg.compare_seeds.size());
    json out{{"command", "compare"},
             {"rows", rows},
             {"mean",
              json{{cfg.compare_arms[0], json{{"nmi", mean_nmi[0] * inv}, {"r1", mean_r1[0] * inv}}},
                   {cfg.compare_arms[1], json{{"nmi", mean_nmi[1] * inv}, {"r1", mean_r1[1] * inv}}},
                   {"delta", json{{"nmi", mean_delta_nmi * inv}, {"r1", mean_delta_r1 * inv}}}}},
             {"config", echo},
             {"config_hash", hash}};
    write_json_file(out, detail::join_path(cfg.out_dir, "compare.json"));
    return out;
}

namespace detail {

inline const char* class_color(std::size_t k) {
    static const char* palette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080"};
    return palette[k % 10];
}

}  // namespace detail

/// plot: 2-D scatter of the embedded test set, one segment line per class
/// when a segment checkpoint is supplied.
inline json cmd_plot(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                     const std::string& segments_path) {
    detail::ensure_out_dir(cfg.out_dir);
    const NetworkState state = network_from_json(read_json_file(checkpoint_path));
    if (state.spec.embedding_dim != 2)
        throw ConfigError("plot: requires embedding_dim = 2 (checkpoint has " +
                          std::to_string(state.spec.embedding_dim) +
                          "); train a 2-D embedding for visual runs");

    const LabeledDataset ds = detail::resolve_dataset(cfg);
    if (state.spec.input_dim != ds.dim())
        throw ConfigError("plot: checkpoint input_dim does not match data width");
    const auto [train_ds, test_ds] = stratified_split(ds, cfg.test_fraction, cfg.seed);
    const ForwardCache fwd = forward_eval(state, test_ds.features);

    LineSegmentSet segments;
    if (!segments_path.empty()) {
        segments = segments_from_json(read_json_file(segments_path));
        if (segments.dim != 2) throw ConfigError("plot: segment checkpoint is not 2-D");
    }

    double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
    bool first = true;
    auto expand = [&](double x, double y) {
        if (first) {
            min_x = max_x = x;
            min_y = max_y = y;
            first = false;
            return;
        }
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    };
    for (std::size_t i = 0; i < fwd.embeddings.rows; ++i)
        expand(fwd.embeddings(i, 0), fwd.embeddings(i, 1));
    for (std::size_t k = 0; k < segments.num_classes(); ++k) {
        expand(segments.a[k][0], segments.a[k][1]);
        expand(segments.b[k][0], segments.b[k][1]);
    }
    const double span_x = std::max(max_x - min_x, 1e-9);
    const double span_y = std::max(max_y - min_y, 1e-9);
    const double width = 800.0, height = 600.0, pad = 40.0;
    auto px = [&](double x) { return pad + (x - min_x) / span_x * (width - 2.0 * pad); };
    auto py = [&](double y) { return height - pad - (y - min_y) / span_y * (height - 2.0 * pad); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    for (std::size_t i = 0; i < fwd.embeddings.rows; ++i) {
        svg << "<circle cx=\"" << format_double(px(fwd.embeddings(i, 0))) << "\" cy=\""
            << format_double(py(fwd.embeddings(i, 1))) << "\" r=\"3\" fill=\""
            << detail::class_color(std::size_t(test_ds.labels[i]))
            << "\" fill-opacity=\"0.75\"/>\n";
    }
    for (std::size_t k = 0; k < segments.num_classes(); ++k) {
        svg << "<line x1=\"" << format_double(px(segments.a[k][0])) << "\" y1=\""
            << format_double(py(segments.a[k][1])) << "\" x2=\""
            << format_double(px(segments.b[k][0])) << "\" y2=\""
            << format_double(py(segments.b[k][1]))
            << "\" stroke=\"#111111\" stroke-width=\"2.5\"/>\n";
    }
    svg << "</svg>\n";

    const std::string path = detail::join_path(cfg.out_dir, "embeddings.svg");
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("plot: cannot open '" + path + "' for writing");
        out << svg.str();
        if (!out) throw IoError("plot: write failed for '" + path + "'");
    }

    const json echo = config_to_json(cfg);
    return json{{"command", "plot"},
                {"path", path},
                {"points", fwd.embeddings.rows},
                {"segments", segments.num_classes()},
                {"config", echo},
                {"config_hash", config_hash(echo)}};
}

// --- text rendering -------------------------------------------------------

inline std::string render_eval_table(const json& eval) {
    std::ostringstream out;
    std::vector<std::pair<std::string, double>> cols;
    cols.emplace_back("NMI", eval.at("nmi").get<double>());
    std::vector<std::pair<long long, double>> recalls;
    for (const auto& [k, v] : eval.at("recall_at").items())
        recalls.emplace_back(std::stoll(k), v.get<double>());
    std::sort(recalls.begin(), recalls.end());
    for (const auto& [k, v] : recalls) cols.emplace_back("R@" + std::to_string(k), v);
    cols.emplace_back("R@Average", eval.at("recall_average").get<double>());

    for (const auto& [name, value] : cols) out << name << '\t';
    out << '\n';
    char buf[32];
    for (const auto& [name, value] : cols) {
        std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * value);
        out << buf << '\t';
    }
    out << '\n';
    return out.str();
}

inline std::string render_compare_table(const json& compare) {
    std::ostringstream out;
    const auto arms = compare.at("config").at("compare").at("arms")
                          .get<std::vector<std::string>>();
    out << "seed\t" << arms[0] << " NMI\t" << arms[1] << " NMI\tdelta\t" << arms[0] << " R@1\t"
        << arms[1] << " R@1\tdelta\n";
    char buf[160];
    auto r1_of = [](const json& arm) {
        const auto& recall = arm.at("recall_at");
        return recall.contains("1") ? recall.at("1").get<double>() : 0.0;
    };
    for (const auto& row : compare.at("rows")) {
        const json& a = row.at("arms").at(arms[0]);
        const json& b = row.at("arms").at(arms[1]);
        std::snprintf(buf, sizeof(buf), "%llu\t%.4f\t%.4f\t%+.4f\t%.4f\t%.4f\t%+.4f\n",
                      (unsigned long long)row.at("seed").get<std::uint64_t>(),
                      a.at("nmi").get<double>(), b.at("nmi").get<double>(),
                      row.at("delta").at("nmi").get<double>(), r1_of(a), r1_of(b),
                      row.at("delta").at("r1").get<double>());
        out << buf;
    }
    const json& mean = compare.at("mean");
    std::snprintf(buf, sizeof(buf), "mean\t%.4f\t%.4f\t%+.4f\t%.4f\t%.4f\t%+.4f\n",
                  mean.at(arms[0]).at("nmi").get<double>(), mean.at(arms[1]).at("nmi").get<double>(),
                  mean.at("delta").at("nmi").get<double>(), mean.at(arms[0]).at("r1").get<double>(),
                  mean.at(arms[1]).at("r1").get<double>(),
                  mean.at("delta").at("r1").get<double>());
    out << buf;
    return out.str();
}

inline std::string render_gradcheck_table(const json& report) {
    std::ostringstream out;
    out << "loss\tpoints\tmax_rel_err\tstatus\n";
    char buf[96];
    for (const auto& row : report.at("losses")) {
        std::snprintf(buf, sizeof(buf), "%s\t%zu\t%.3e\t%s\n",
                      row.at("loss").get<std::string>().c_str(),
                      std::size_t(row.at("points").get<std::size_t>()),
                      row.at("max_rel_err").get<double>(),
                      row.at("pass").get<bool>() ? "pass" : "FAIL");
        out << buf;
    }
    return out.str();
}

}  // namespace daal
