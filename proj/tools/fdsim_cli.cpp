#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdsim/harness.hpp"
#include "fdsim/metrics.hpp"

namespace {

using fdsim::harness::ExperimentConfig;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string arm;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int devices = 0;
    int workers = 0;
    int repeats = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "experiment config file");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--arm", flags.arm, "method arm: fd, fd-faug, fl, fl-faug");
    cmd->add_option("--seed", flags.seed, "master seed")->each([&](const std::string&) {
        flags.seed_set = true;
    });
    cmd->add_option("--devices", flags.devices, "number of devices M");
    cmd->add_option("--workers", flags.workers, "worker pool size for device phases");
    cmd->add_option("--repeats", flags.repeats, "independent repeats averaged in the summary");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg = flags.config_path.empty()
                               ? ExperimentConfig{}
                               : fdsim::harness::parse_config_file(flags.config_path);
    if (!flags.arm.empty()) cfg.arm = fdsim::harness::parse_arm(flags.arm);
    if (flags.seed_set) cfg.seed = flags.seed;
    if (flags.devices > 0) cfg.devices = flags.devices;
    if (flags.workers > 0) cfg.workers = flags.workers;
    if (flags.repeats > 0) cfg.repeats = flags.repeats;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    cfg.validate();
    return cfg;
}

int cmd_partition(const CommonFlags& flags) {
    ExperimentConfig cfg = resolve_config(flags);
    std::string manifest = fdsim::harness::make_partition_manifest(cfg);
    if (cfg.out_dir.empty()) {
        std::cout << manifest;
    } else {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream out(std::filesystem::path(cfg.out_dir) / "partition_manifest.json");
        out << manifest;
        std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "partition_manifest.json")
                  << "\n";
    }
    return 0;
}

int cmd_run(const CommonFlags& flags) {
    ExperimentConfig cfg = resolve_config(flags);
    auto result = fdsim::harness::run_experiment(cfg);
    std::cout << fdsim::harness::summary_csv_header() << "\n"
              << fdsim::harness::summary_csv_row(cfg, result) << "\n";
    if (!cfg.out_dir.empty()) std::cout << "outputs written to " << cfg.out_dir << "\n";
    return 0;
}

struct CostFlags {
    std::string arm = "fd";
    int rounds = 16;
    int labels = 10;
    std::uint64_t model_params = 1'199'648;
    std::uint64_t generator_params = 1'493'520;
    std::uint64_t seed_samples = 15;
    std::uint64_t pixels_per_sample = 784;
};

int cmd_cost(const CostFlags& flags) {
    auto arm = fdsim::harness::parse_arm(flags.arm);
    auto ledger = fdsim::harness::cost_calculator(arm, flags.rounds, flags.labels,
                                                  flags.model_params, flags.generator_params,
                                                  flags.seed_samples, flags.pixels_per_sample);
    std::cout << fdsim::metrics::cost_csv_header() << "\n"
              << fdsim::metrics::cost_csv_row(arm_name(arm), ledger) << "\n";
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<int>& devices_list,
              const std::vector<int>& redundant_list, const std::vector<int>& targets_list) {
    ExperimentConfig base = resolve_config(flags);
    auto rows = fdsim::harness::run_sweep(base, devices_list, redundant_list, targets_list);
    for (const auto& row : rows) std::cout << row << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fdsim: federated distillation / augmentation simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags, partition_flags, sweep_flags;
    CostFlags cost_flags;
    std::vector<int> devices_list, redundant_list, targets_list;

    CLI::App* run = app.add_subcommand("run", "run a full experiment");
    add_common(run, run_flags);

    CLI::App* partition = app.add_subcommand("partition", "emit the partition manifest only");
    add_common(partition, partition_flags);

    CLI::App* cost = app.add_subcommand("cost", "communication-cost calculator (no training)");
    cost->add_option("--arm", cost_flags.arm, "method arm");
    cost->add_option("--rounds", cost_flags.rounds, "global rounds");
    cost->add_option("--labels", cost_flags.labels, "number of labels L");
    cost->add_option("--model-params", cost_flags.model_params, "declared model parameter count");
    cost->add_option("--generator-params", cost_flags.generator_params,
                     "declared generator parameter count");
    cost->add_option("--seed-samples", cost_flags.seed_samples, "uploaded seed sample count");
    cost->add_option("--pixels-per-sample", cost_flags.pixels_per_sample,
                     "declared pixels per sample");

    CLI::App* sweep = app.add_subcommand("sweep", "grid sweep emitting one summary row per cell");
    add_common(sweep, sweep_flags);
    sweep->add_option("--devices-list", devices_list, "device counts to sweep");
    sweep->add_option("--redundant-list", redundant_list, "redundant label counts to sweep");
    sweep->add_option("--targets-list", targets_list, "target label counts to sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_flags);
        if (partition->parsed()) return cmd_partition(partition_flags);
        if (cost->parsed()) return cmd_cost(cost_flags);
        if (sweep->parsed()) return cmd_sweep(sweep_flags, devices_list, redundant_list,
                                              targets_list);
    } catch (const fdsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fdsim::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
