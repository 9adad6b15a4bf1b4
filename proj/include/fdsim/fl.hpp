#pragma once

#include <cstdint>
#include <vector>

#include "fdsim/data.hpp"
#include "fdsim/metrics.hpp"
#include "fdsim/nn.hpp"
#include "fdsim/training_log.hpp"

namespace fdsim::fl {

struct FlConfig {
    int local_steps = 250;
    int global_rounds = 16;
    int batch_size = 64;
    double eta = 0.05;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_dims = {32};
    // Accounting size per exchange direction; decoupled from the desk-scale
    // model so the cost table stays exactly reproducible.
    std::uint64_t declared_param_count = 1'199'648;

    void validate() const;
};

// local_steps batches of per-sample SGD on plain cross-entropy. Identical to
// the FD local loop with gamma = 0 and no accumulation.
nn::ModelWeights fl_local_phase(const nn::ModelWeights& w, const data::DeviceDataset& ds,
                                const FlConfig& cfg, int round);

// Element-wise unweighted mean; summation order fixed by list position.
nn::ModelWeights fl_average(const std::vector<nn::ModelWeights>& models);

// Federated averaging: rounds of broadcast -> local phase -> average. Each
// round charges 2 * declared_param_count per device (uplink + downlink) per
// LedgerScope; accuracy is scored on the freshly averaged model.
void run_fl(const std::vector<data::DeviceDataset>& datasets, const FlConfig& cfg,
            const data::Corpus& test_set, metrics::CostLedger& ledger, TrainingLog& log,
            const LedgerScope& scope = {}, int workers = 1,
            nn::ModelWeights* final_model = nullptr);

} // namespace fdsim::fl
