#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include <daal/commands.hpp>

using namespace daal;
namespace fs = std::filesystem;

namespace {

std::string work_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("daal_cmd_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json tiny_config_json(const std::string& out, const std::string& loss = "softmax+daal") {
    return json{
        {"seed", 4},
        {"data", json{{"synthetic", json{{"num_classes", 3},
                                         {"modes_per_class", 2},
                                         {"samples_per_class", 16},
                                         {"input_dim", 6},
                                         {"class_separation", 6.0},
                                         {"mode_spread", 1.0},
                                         {"within_mode_std", 0.4}}}}},
        {"network", json{{"hidden_dims", {16}}, {"embedding_dim", 4}, {"dropout_rates", {0.1}}}},
        {"train", json{{"learning_rate", 0.05}, {"momentum", 0.9}, {"batch_size", 16},
                       {"epochs", 5}}},
        {"loss", json{{"name", loss}}},
        {"metrics", json{{"k_list", {1, 2, 4}}}},
        {"out_dir", out}};
}

}  // namespace

TEST_CASE("config parsing injects defaults and validates", "[commands]") {
    const auto cfg = config_from_json(tiny_config_json("x"));
    CHECK(cfg.train.daal.delta == 1.5);
    CHECK(cfg.train.daal.tau == 0.001);
    CHECK(cfg.train.daal.eta == 5.0);
    CHECK(cfg.train.weights.lambda_s == 1.0);
    CHECK(cfg.train.weights.lambda_daal == 0.01);
    CHECK(cfg.train.loss == LossKind::softmax_daal);
    CHECK(cfg.test_fraction == 0.5);
    CHECK(cfg.compare_seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});

    json both = tiny_config_json("x");
    both["data"]["csv"] = "/nonexistent.csv";
    CHECK_THROWS_AS(config_from_json(both), ConfigError);

    json unknown = tiny_config_json("x");
    unknown["surprise"] = 1;
    CHECK_THROWS_AS(config_from_json(unknown), ConfigError);

    json missing = tiny_config_json("x");
    missing.erase("data");
    CHECK_THROWS_AS(config_from_json(missing), ConfigError);

    json bad_loss = tiny_config_json("x");
    bad_loss["loss"]["name"] = "nosuch";
    CHECK_THROWS_AS(config_from_json(bad_loss), ConfigError);

    json zero_classes = tiny_config_json("x");
    zero_classes["data"]["synthetic"]["num_classes"] = 0;
    CHECK_THROWS_AS(config_from_json(zero_classes), ConfigError);

    // resolved echo hashes are stable
    const json echo = config_to_json(cfg);
    CHECK(config_hash(echo) == config_hash(config_to_json(config_from_json(tiny_config_json("x")))));

    json flagged = tiny_config_json("x");
    flagged["metrics"]["normalized"] = true;
    CHECK(config_from_json(flagged).normalized_retrieval);
    CHECK_FALSE(cfg.normalized_retrieval);
}

TEST_CASE("loss names round-trip through the config layer", "[commands]") {
    for (const char* name :
         {"softmax", "softmax+daal", "normalized_softmax", "sphereface", "cosface", "arcface",
          "softmax+center", "triplet_center", "triplet"}) {
        CHECK(loss_kind_name(loss_kind_from_name(name)) == name);
    }
    CHECK_THROWS_AS(loss_kind_from_name("daal"), ConfigError);
}

TEST_CASE("cmd_generate writes a parseable csv", "[commands]") {
    const std::string out = work_dir("generate");
    const auto cfg = config_from_json(tiny_config_json(out));
    const json result = cmd_generate(cfg);
    CHECK(result.at("rows").get<std::size_t>() == 48);
    CHECK(result.at("classes").get<std::size_t>() == 3);

    const std::string path = result.at("path").get<std::string>();
    const std::string bytes = read_file(path);
    CHECK(bytes.rfind("label,f0,f1,f2,f3,f4,f5\n", 0) == 0);

    // rerun, identical bytes
    cmd_generate(cfg);
    CHECK(read_file(path) == bytes);

    const LabeledDataset loaded = load_features_csv(path);
    CHECK(loaded.size() == 48);
}

TEST_CASE("cmd_train emits checkpoint, history and segments", "[commands]") {
    const std::string out = work_dir("train");
    const auto cfg = config_from_json(tiny_config_json(out));
    const json result = cmd_train(cfg);
    CHECK(fs::exists(out + "/checkpoint.json"));
    CHECK(fs::exists(out + "/history.json"));
    CHECK(fs::exists(out + "/segments.json"));
    CHECK(result.at("epochs_run").get<std::size_t>() == 5);
    CHECK(result.at("config_hash").get<std::string>().size() == 16);

    const json history = read_json_file(out + "/history.json");
    CHECK(history.at("epochs").size() == 5);
    for (const auto& row : history.at("epochs")) {
        CHECK(std::isfinite(row.at("total").get<double>()));
        CHECK(row.at("daal").get<double>() >= 0.0);
    }

    // checkpoint loads back into a matching network
    const NetworkState state = network_from_json(read_json_file(out + "/checkpoint.json"));
    CHECK(state.spec.input_dim == 6);
    CHECK(state.spec.num_classes == 3);

    const LineSegmentSet segments = segments_from_json(read_json_file(out + "/segments.json"));
    CHECK(segments.num_classes() == 3);
    CHECK(segments.dim == 4);
}

TEST_CASE("softmax-only training emits no segment checkpoint", "[commands]") {
    const std::string out = work_dir("train_softmax");
    const auto cfg = config_from_json(tiny_config_json(out, "softmax"));
    const json result = cmd_train(cfg);
    CHECK_FALSE(result.contains("segments"));
    CHECK_FALSE(fs::exists(out + "/segments.json"));
}

TEST_CASE("cmd_eval produces a full report with stable keys", "[commands]") {
    const std::string out = work_dir("eval");
    auto cfg_json = tiny_config_json(out);
    cfg_json["data"]["synthetic"]["class_separation"] = 10.0;  // trivially separable
    cfg_json["train"]["epochs"] = 12;
    const auto cfg = config_from_json(cfg_json);
    cmd_train(cfg);
    const json report = cmd_eval(cfg, out + "/checkpoint.json");

    CHECK(report.at("nmi").get<double>() == Approx(1.0).margin(1e-12));
    CHECK(report.at("recall_at").at("1").get<double>() == 1.0);
    CHECK(report.at("recall_average").get<double>() == 1.0);
    CHECK(report.contains("config_hash"));

    const std::string bytes = read_file(out + "/eval.json");
    cmd_eval(cfg, out + "/checkpoint.json");
    CHECK(read_file(out + "/eval.json") == bytes);

    // table columns follow NMI, R@1..R@max, R@Average
    const std::string table = render_eval_table(report);
    CHECK(table.rfind("NMI\tR@1\tR@2\tR@4\tR@Average", 0) == 0);
}

TEST_CASE("cmd_eval drops K values that reach the test-set size", "[commands]") {
    const std::string out = work_dir("eval_klist");
    auto cfg_json = tiny_config_json(out);
    cfg_json["train"]["epochs"] = 2;
    cfg_json["metrics"]["k_list"] = {1, 2, 4, 999};
    const auto cfg = config_from_json(cfg_json);
    cmd_train(cfg);
    const json report = cmd_eval(cfg, out + "/checkpoint.json");
    CHECK(report.at("recall_at").size() == 3);  // 24 test rows: 999 is dropped
    CHECK_FALSE(report.at("recall_at").contains("999"));
}

TEST_CASE("cmd_eval rejects mismatched checkpoints", "[commands]") {
    const std::string out = work_dir("eval_mismatch");
    const auto cfg = config_from_json(tiny_config_json(out));
    cmd_train(cfg);

    auto other_json = tiny_config_json(out);
    other_json["data"]["synthetic"]["input_dim"] = 9;
    const auto other = config_from_json(other_json);
    CHECK_THROWS_AS(cmd_eval(other, out + "/checkpoint.json"), ConfigError);
}

TEST_CASE("cmd_compare control arms give zero deltas", "[commands]") {
    const std::string out = work_dir("compare_control");
    auto cfg_json = tiny_config_json(out, "softmax");
    cfg_json["train"]["epochs"] = 3;
    cfg_json["compare"] = json{{"seeds", {1, 2}}, {"arms", {"softmax", "softmax"}}};
    const auto cfg = config_from_json(cfg_json);
    const json result = cmd_compare(cfg);
    REQUIRE(result.at("rows").size() == 2);
    for (const auto& row : result.at("rows")) {
        CHECK(row.at("delta").at("nmi").get<double>() == 0.0);
        CHECK(row.at("delta").at("r1").get<double>() == 0.0);
    }
    CHECK(result.at("mean").at("delta").at("nmi").get<double>() == 0.0);
}

TEST_CASE("cmd_compare pairs the requested arms per seed", "[commands]") {
    const std::string out = work_dir("compare");
    auto cfg_json = tiny_config_json(out);
    cfg_json["train"]["epochs"] = 3;
    cfg_json["compare"] = json{{"seeds", {1, 2, 3}}, {"arms", {"softmax", "softmax+daal"}}};
    const auto cfg = config_from_json(cfg_json);
    const json result = cmd_compare(cfg);
    REQUIRE(result.at("rows").size() == 3);
    for (const auto& row : result.at("rows")) {
        CHECK(row.at("arms").contains("softmax"));
        CHECK(row.at("arms").contains("softmax+daal"));
    }
    CHECK(result.at("mean").contains("delta"));
    CHECK_FALSE(render_compare_table(result).empty());

    const std::string bytes = read_file(out + "/compare.json");
    cmd_compare(cfg);
    CHECK(read_file(out + "/compare.json") == bytes);
}

TEST_CASE("cmd_plot draws one segment line per class", "[commands]") {
    const std::string out = work_dir("plot");
    auto cfg_json = tiny_config_json(out);
    cfg_json["network"]["embedding_dim"] = 2;
    cfg_json["train"]["epochs"] = 3;
    const auto cfg = config_from_json(cfg_json);
    cmd_train(cfg);

    const json result = cmd_plot(cfg, out + "/checkpoint.json", out + "/segments.json");
    const std::string svg = read_file(result.at("path").get<std::string>());
    CHECK(svg.rfind("<svg", 0) == 0);
    std::size_t lines = 0, pos = 0;
    while ((pos = svg.find("<line", pos)) != std::string::npos) {
        ++lines;
        pos += 5;
    }
    CHECK(lines == 3);

    // rerun is byte-identical
    cmd_plot(cfg, out + "/checkpoint.json", out + "/segments.json");
    CHECK(read_file(result.at("path").get<std::string>()) == svg);
}

TEST_CASE("cmd_plot rejects non-2d embeddings", "[commands]") {
    const std::string out = work_dir("plot_bad");
    const auto cfg = config_from_json(tiny_config_json(out));  // embedding_dim 4
    cmd_train(cfg);
    CHECK_THROWS_AS(cmd_plot(cfg, out + "/checkpoint.json", out + "/segments.json"), ConfigError);
}

TEST_CASE("cmd_gradcheck reports per-loss errors", "[commands]") {
    const json result = cmd_gradcheck("triplet", 7);
    CHECK(result.at("pass").get<bool>());
    REQUIRE(result.at("losses").size() == 1);
    CHECK(result.at("losses")[0].at("loss").get<std::string>() == "triplet");
    CHECK(result.at("losses")[0].at("max_rel_err").get<double>() < 1e-4);

    const json daal_intra = cmd_gradcheck("daal_intra", 7);
    CHECK(daal_intra.at("pass").get<bool>());
    const json daal_inter = cmd_gradcheck("daal_inter", 7);
    CHECK(daal_inter.at("pass").get<bool>());

    CHECK_THROWS_AS(cmd_gradcheck("nosuch", 7), ConfigError);
}

TEST_CASE("checkpoint json round-trips bit-exactly", "[commands]") {
    Rng rng(91);
    NetworkSpec spec;
    spec.input_dim = 5;
    spec.hidden_dims = {7, 3};
    spec.embedding_dim = 4;
    spec.num_classes = 3;
    spec.dropout_rates = {0.2, 0.1};
    const NetworkState state = init_network(spec, rng);

    const json j1 = network_to_json(state);
    const NetworkState loaded = network_from_json(j1);
    const json j2 = network_to_json(loaded);
    CHECK(j1.dump() == j2.dump());
    for (std::size_t l = 0; l < state.layers.size(); ++l)
        CHECK(loaded.layers[l].w.data == state.layers[l].w.data);

    Rng seg_rng(92);
    const LineSegmentSet segments = init_segments(4, 3, 1.5, seg_rng);
    const json s1 = segments_to_json(segments);
    const json s2 = segments_to_json(segments_from_json(s1));
    CHECK(s1.dump() == s2.dump());
}
