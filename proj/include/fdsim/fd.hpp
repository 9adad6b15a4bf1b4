#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "fdsim/data.hpp"
#include "fdsim/metrics.hpp"
#include "fdsim/nn.hpp"
#include "fdsim/training_log.hpp"

namespace fdsim::fd {

struct FdConfig {
    int local_steps = 250;  // n: batches per global round
    int global_rounds = 16;
    int batch_size = 64;
    double gamma = 1.0; // distillation regularizer weight
    double eta = 0.05;  // learning rate
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_dims = {32};

    void validate() const;
};

// Per-device protocol state: model weights, the round's per-label logit
// accumulators/counts, and the downloaded global-average logit vectors.
struct DeviceState {
    int device_id = 0;
    int num_labels = 0;
    nn::ModelWeights weights;
    std::vector<std::vector<double>> logit_acc; // label -> running sum of outputs
    std::vector<long> counts;                   // label -> samples accumulated
    std::vector<std::optional<nn::LogitVector>> global_avgs; // teacher per label

    void reset_accumulators();
};

DeviceState make_device_state(int device_id, int num_labels, int feature_dim,
                              const FdConfig& cfg);

// Uplink payload: per-label average logit vectors; labels with no samples
// this round are absent.
struct LocalReport {
    int device_id = 0;
    int round = 0;
    std::vector<std::optional<nn::LogitVector>> per_label;

    int labels_reported() const;
};

// One local training phase: resets accumulators, runs local_steps batches of
// per-sample SGD on ce(output, y_b) + gamma * ce(output, teacher[y_b]) (the
// gamma term is skipped while no teacher is downloaded for that label), and
// accumulates each post-update output into the label's accumulator.
LocalReport local_training_phase(DeviceState& state, const data::DeviceDataset& ds,
                                 const FdConfig& cfg, int round);

// Server side: for each label, every device receives the average of the
// OTHER reporting devices' vectors. The denominator adapts to partial
// reporting; a device reporting alone for a label gets no teacher for it.
std::map<int, std::vector<std::optional<nn::LogitVector>>> global_ensembling_phase(
    const std::vector<LocalReport>& reports);

// Full protocol: alternate local phases (fanned out to `workers` threads)
// and ensembling for global_rounds rounds, scoring each device on test_set
// after its local phase. Appends to `log` as rounds complete (partial logs
// survive a divergence abort) and charges the ledger per LedgerScope.
void run_fd(const std::vector<data::DeviceDataset>& datasets, const FdConfig& cfg,
            const data::Corpus& test_set, metrics::CostLedger& ledger, TrainingLog& log,
            const LedgerScope& scope = {}, int workers = 1,
            std::vector<nn::ModelWeights>* final_models = nullptr);

namespace detail {

// The per-sample SGD loop shared with the FL baseline (teachers and accum
// are null there, making the gamma path inert).
void local_sgd_loop(nn::ModelWeights& weights, const data::DeviceDataset& ds, int steps,
                    int batch_size, double eta, double gamma,
                    const std::vector<std::optional<nn::LogitVector>>* teachers,
                    DeviceState* accum, std::mt19937_64& g, int device_id);

} // namespace detail

} // namespace fdsim::fd
