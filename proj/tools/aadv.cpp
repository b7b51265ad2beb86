#include "aadv/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>

namespace {

struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
};

// Every flag maps onto a config key; precedence is flag > --config file >
// AADV_SEED (seed only) > built-in default.
const FlagSpec kCommonFlags[] = {
    {"--seed", "seed", "global seed; expands into independent per-purpose streams"},
    {"--out", "out", "output directory"},
    {"--model", "model", "model container path"},
    {"--count", "count", "number of validation images to attack"},
    {"--eps", "eps", "l-inf budget, decimal or rational like 16/255"},
    {"--iters", "iters", "attack iterations T"},
    {"--c", "c", "lambda floor C"},
    {"--gamma", "gamma", "lambda range gamma"},
    {"--alpha-start", "alpha_start", "initial sigmoid scaling"},
    {"--alpha-end", "alpha_end", "final sigmoid scaling"},
    {"--mu", "mu", "momentum decay factor"},
    {"--beta", "beta", "update step (0 selects eps/10)"},
    {"--enc-lr", "enc_lr", "encoder SGD learning rate"},
    {"--enc-momentum", "enc_momentum", "encoder SGD momentum"},
    {"--encoder", "encoder", "encoder structure: fc | conv"},
    {"--workers", "workers", "worker pool size"},
    {"--lambda-l1", "lambda_l1", "fixed lambda for the l1-delta ablation"},
    {"--ds-count", "ds_count", "dataset size"},
    {"--ds-w", "ds_w", "image width"},
    {"--ds-h", "ds_h", "image height"},
    {"--ds-c", "ds_c", "image channels"},
    {"--ds-k", "ds_k", "class count"},
    {"--epochs", "epochs", "training epochs"},
    {"--batch", "batch", "training batch size"},
    {"--lr", "lr", "training learning rate"},
    {"--momentum", "momentum", "training momentum"},
    {"--acc-floor", "acc_floor", "minimum val accuracy a model must reach"},
};

void attach(CLI::App* cmd, std::map<std::string, std::string>& values,
            std::string& config_path, bool& channel_shared, bool& dump) {
    cmd->add_option("--config", config_path, "key=value config file");
    for (const FlagSpec& f : kCommonFlags) cmd->add_option(f.flag, values[f.key], f.help);
    cmd->add_flag("--channel-shared", channel_shared,
                  "one mask value per spatial position, shared across channels");
    cmd->add_flag("--dump-images", dump, "write orig/adv/diff/mask pnm files");
}

aadv::ExperimentConfig resolve(const std::map<std::string, std::string>& values,
                               const std::string& config_path, bool channel_shared,
                               bool dump) {
    aadv::ExperimentConfig cfg = aadv::ExperimentConfig::defaults();
    if (const char* env_seed = std::getenv("AADV_SEED")) cfg.set("seed", env_seed);
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [key, value] : values)
        if (!value.empty()) cfg.set(key, value);
    if (channel_shared) cfg.set("channel_shared", "1");
    if (dump) cfg.set("dump_images", "1");
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse adversarial attack toolbox"};
    app.require_subcommand(1);

    std::map<std::string, std::string> values;
    std::string config_path;
    bool channel_shared = false, dump = false;
    std::string report_path;

    CLI::App* train = app.add_subcommand("train", "train the toy classifier");
    CLI::App* attack = app.add_subcommand("attack", "run the sparse attack over sampled images");
    CLI::App* ablate = app.add_subcommand("ablate", "compare full/dense/random/l1-delta/no-encoder");
    CLI::App* encoders = app.add_subcommand("encoders", "compare fc and conv encoder structures");
    CLI::App* report = app.add_subcommand("report", "pretty-print a stored report");
    report->add_option("path", report_path, "report file")->required();

    for (CLI::App* cmd : {train, attack, ablate, encoders})
        attach(cmd, values, config_path, channel_shared, dump);

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) return aadv::cmd_report(report_path);
        const aadv::ExperimentConfig cfg = resolve(values, config_path, channel_shared, dump);
        if (train->parsed()) return aadv::cmd_train(cfg);
        if (attack->parsed()) return aadv::cmd_attack(cfg);
        if (ablate->parsed()) return aadv::cmd_ablate(cfg);
        if (encoders->parsed()) return aadv::cmd_encoders(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
