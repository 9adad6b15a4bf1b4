#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fdsim/error.hpp"

namespace fdsim::metrics {

// Exchanged-payload counters. total_bits is exact integer arithmetic.
struct CostLedger {
    std::uint64_t logit_scalars = 0;
    std::uint64_t model_parameters = 0;
    std::uint64_t sample_pixels = 0;
    std::uint64_t seed_samples = 0; // sample count behind sample_pixels

    static constexpr std::uint64_t bits_per_logit = 32;
    static constexpr std::uint64_t bits_per_parameter = 32;
    static constexpr std::uint64_t bits_per_pixel = 8;

    std::uint64_t total_bits() const {
        return bits_per_logit * logit_scalars + bits_per_parameter * model_parameters +
               bits_per_pixel * sample_pixels;
    }
};

// Per-device target/redundant label sets backing the leakage formulas.
struct LabelInventory {
    struct PerDevice {
        std::set<int> targets;
        std::set<int> redundants;
    };
    int num_labels = 0;
    std::vector<PerDevice> devices;
};

// |L_t| / (|L_t| + |L_r|) for device i; errors when the device has no
// target labels (the ratio is undefined).
double device_server_pl(const LabelInventory& inv, int device);

// |L_t(i)| / |union_j (L_t(j) ∪ L_r(j))|.
double inter_device_pl(const LabelInventory& inv, int device);

// One FD exchange: M * (labels_up + labels_down) logit vectors of L scalars.
// M = 1 gives the per-reference-device view used by the cost table.
void charge_fd_round(CostLedger& ledger, std::uint64_t devices, std::uint64_t labels_up,
                     std::uint64_t labels_down, std::uint64_t num_labels);

// One FL exchange: uplink + downlink of the declared parameter count.
void charge_fl_round(CostLedger& ledger, std::uint64_t devices, std::uint64_t declared_params);

// FAug: seed-sample upload pixels plus the generator download.
void charge_faug(CostLedger& ledger, std::uint64_t num_seed_samples,
                 std::uint64_t pixels_per_sample, std::uint64_t generator_params);

// CSV mirroring the cost table columns.
std::string cost_csv_header();
std::string cost_csv_row(const std::string& method, const CostLedger& ledger);

} // namespace fdsim::metrics
