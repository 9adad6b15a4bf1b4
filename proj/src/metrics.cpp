#include "fdsim/metrics.hpp"

#include <sstream>

namespace fdsim::metrics {

static const LabelInventory::PerDevice& device_entry(const LabelInventory& inv, int device) {
    if (device < 0 || static_cast<std::size_t>(device) >= inv.devices.size())
        throw Error("label inventory: no such device " + std::to_string(device));
    return inv.devices[static_cast<std::size_t>(device)];
}

double device_server_pl(const LabelInventory& inv, int device) {
    const auto& d = device_entry(inv, device);
    if (d.targets.empty())
        throw Error("device_server_pl: device " + std::to_string(device) +
                    " has no target labels; ratio undefined");
    const double t = static_cast<double>(d.targets.size());
    const double r = static_cast<double>(d.redundants.size());
    return t / (t + r);
}

double inter_device_pl(const LabelInventory& inv, int device) {
    const auto& d = device_entry(inv, device);
    std::set<int> uploaded_union;
    for (const auto& dev : inv.devices) {
        uploaded_union.insert(dev.targets.begin(), dev.targets.end());
        uploaded_union.insert(dev.redundants.begin(), dev.redundants.end());
    }
    if (uploaded_union.empty())
        throw Error("inter_device_pl: no labels were uploaded by any device");
    return static_cast<double>(d.targets.size()) / static_cast<double>(uploaded_union.size());
}

void charge_fd_round(CostLedger& ledger, std::uint64_t devices, std::uint64_t labels_up,
                     std::uint64_t labels_down, std::uint64_t num_labels) {
    ledger.logit_scalars += devices * (labels_up + labels_down) * num_labels;
}

void charge_fl_round(CostLedger& ledger, std::uint64_t devices, std::uint64_t declared_params) {
    ledger.model_parameters += 2 * devices * declared_params;
}

void charge_faug(CostLedger& ledger, std::uint64_t num_seed_samples,
                 std::uint64_t pixels_per_sample, std::uint64_t generator_params) {
    ledger.sample_pixels += num_seed_samples * pixels_per_sample;
    ledger.seed_samples += num_seed_samples;
    ledger.model_parameters += generator_params;
}

std::string cost_csv_header() { return "method,logits,model_parameters,samples,total_bits"; }

std::string cost_csv_row(const std::string& method, const CostLedger& ledger) {
    std::ostringstream row;
    row << method << ',' << ledger.logit_scalars << ',' << ledger.model_parameters << ','
        << ledger.seed_samples << ',' << ledger.total_bits();
    return row.str();
}

} // namespace fdsim::metrics
