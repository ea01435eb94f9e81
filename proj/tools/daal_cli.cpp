#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <daal/daal.hpp>

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    bool json_output = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

daal::ExperimentConfig load_config(const CommonFlags& flags) {
    daal::ExperimentConfig cfg = daal::load_config_file(flags.config_path);
    if (flags.seed_set) {
        cfg.seed = flags.seed;
        cfg.train.seed = flags.seed;
        if (cfg.synthetic) cfg.synthetic->seed = flags.seed;
    }
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", flags.config_path, "experiment config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--seed", flags.seed, "override every seed in the config")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--out", flags.out_dir, "override the output directory");
    cmd->add_flag("--json", flags.json_output, "machine-readable JSON on stdout");
}

void emit(const daal::json& result, const CommonFlags& flags, const std::string& text) {
    if (flags.json_output)
        std::cout << result.dump(2) << '\n';
    else
        std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DAAL deep metric learning workbench"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string checkpoint_path, segments_path, gradcheck_loss = "all";
    std::uint64_t gradcheck_seed = 7;

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset CSV");
    add_common(generate, flags);

    auto* train = app.add_subcommand("train", "train and persist checkpoint + history");
    add_common(train, flags);

    auto* eval = app.add_subcommand("eval", "score NMI / Recall@K on the test split");
    add_common(eval, flags);
    eval->add_option("--checkpoint", checkpoint_path, "network checkpoint JSON")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--loss", gradcheck_loss, "loss name or 'all'");
    gradcheck->add_option("--seed", gradcheck_seed, "suite seed");
    gradcheck->add_flag("--json", flags.json_output, "machine-readable JSON on stdout");

    auto* compare = app.add_subcommand("compare", "paired arm comparison over seeds");
    add_common(compare, flags);

    auto* plot = app.add_subcommand("plot", "SVG scatter of a 2-D embedding");
    add_common(plot, flags);
    plot->add_option("--checkpoint", checkpoint_path, "network checkpoint JSON")->required();
    plot->add_option("--segments", segments_path, "segment checkpoint JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2
    }

    try {
        if (generate->parsed()) {
            const auto cfg = load_config(flags);
            const auto result = daal::cmd_generate(cfg);
            emit(result, flags,
                 "wrote " + result.at("path").get<std::string>() + " (" +
                     std::to_string(result.at("rows").get<std::size_t>()) + " rows, " +
                     std::to_string(result.at("classes").get<std::size_t>()) + " classes)\n");
        } else if (train->parsed()) {
            const auto cfg = load_config(flags);
            const auto result = daal::cmd_train(cfg);
            std::string text = "trained " +
                               std::to_string(result.at("epochs_run").get<std::size_t>()) +
                               " epochs; checkpoint " +
                               result.at("checkpoint").get<std::string>() + "\n";
            if (result.contains("final"))
                text += "final total loss " +
                        std::to_string(result.at("final").at("total").get<double>()) + "\n";
            emit(result, flags, text);
        } else if (eval->parsed()) {
            const auto cfg = load_config(flags);
            const auto result = daal::cmd_eval(cfg, checkpoint_path);
            emit(result, flags, daal::render_eval_table(result));
        } else if (gradcheck->parsed()) {
            const auto result = daal::cmd_gradcheck(gradcheck_loss, gradcheck_seed);
            emit(result, flags, daal::render_gradcheck_table(result));
            return result.at("pass").get<bool>() ? 0 : 1;
        } else if (compare->parsed()) {
            const auto cfg = load_config(flags);
            const auto result = daal::cmd_compare(cfg);
            emit(result, flags, daal::render_compare_table(result));
        } else if (plot->parsed()) {
            const auto cfg = load_config(flags);
            const auto result = daal::cmd_plot(cfg, checkpoint_path, segments_path);
            emit(result, flags, "wrote " + result.at("path").get<std::string>() + "\n");
        }
    } catch (const daal::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const daal::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const daal::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const daal::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
