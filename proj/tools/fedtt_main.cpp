#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fedtt/commands.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 protocol violation.
int classify_failure(const std::exception& e) {
    if (dynamic_cast<const fedtt::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const fedtt::ProtocolError*>(&e)) return 4;
    return 3;
}

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool deterministic = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", [&args](const std::vector<std::string>& v) {
            args.seed = std::stoull(v.front());
            return true;
        },
        "override the config seed");
    sub->add_option("--out", [&args](const std::vector<std::string>& v) {
            args.out_dir = v.front();
            return true;
        },
        "override the output directory");
    sub->add_flag("--deterministic", args.deterministic,
                  "fixed reduction order; timing fields zeroed");
}

fedtt::ExperimentConfig load_with_overrides(const CommonArgs& args) {
    fedtt::ExperimentConfig cfg = fedtt::load_config(args.config_path);
    fedtt::CliOverrides ov;
    ov.seed = args.seed;
    ov.out_dir = args.out_dir;
    if (args.deterministic) ov.deterministic = true;
    fedtt::apply_overrides(cfg, ov);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedtt: federated traffic-knowledge-transfer simulator"};
    app.require_subcommand(1);

    CommonArgs gen_args, impute_args, transfer_args, eval_args;
    std::string checkpoint_path;

    CLI::App* gen = app.add_subcommand("gen-data", "synthesize per-city datasets");
    add_common(gen, gen_args);
    CLI::App* imp = app.add_subcommand("impute", "complete missing readings with TVI");
    add_common(imp, impute_args);
    CLI::App* tra = app.add_subcommand("transfer", "run the federated transfer experiment");
    add_common(tra, transfer_args);
    CLI::App* eva = app.add_subcommand("eval", "evaluate a predictor checkpoint");
    add_common(eva, eval_args);
    eva->add_option("--checkpoint", checkpoint_path, "predictor checkpoint (FTP1)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            fedtt::cmd_gen_data(load_with_overrides(gen_args));
        } else if (imp->parsed()) {
            fedtt::cmd_impute(load_with_overrides(impute_args));
        } else if (tra->parsed()) {
            fedtt::cmd_transfer(load_with_overrides(transfer_args));
        } else if (eva->parsed()) {
            fedtt::cmd_eval(load_with_overrides(eval_args), checkpoint_path);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify_failure(e);
    }
    return 0;
}
