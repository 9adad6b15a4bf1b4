#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fdsim {

// One record per (round, device). FD rounds fill labels_reported and
// cumulative_logit_scalars; FL rounds fill cumulative_parameters.
struct RoundRecord {
    std::string arm;
    int round = 0;
    int device_id = 0;
    double test_accuracy = 0.0;
    int labels_reported = -1;
    std::uint64_t cumulative_logit_scalars = 0;
    std::uint64_t cumulative_parameters = 0;
};

struct TrainingLog {
    std::vector<RoundRecord> records;

    void write_jsonl(std::ostream& out) const;
};

// How protocol runs charge the cost ledger. The per-device view (aggregate =
// false) follows one reference device, matching the cost table; the aggregate
// view sums traffic over all devices.
struct LedgerScope {
    bool aggregate = false;
    int reference_device = 0;
};

} // namespace fdsim
