#include "fdsim/training_log.hpp"

#include <ostream>

#include "json.hpp"

namespace fdsim {

void TrainingLog::write_jsonl(std::ostream& out) const {
    for (const RoundRecord& r : records) {
        nlohmann::json j;
        j["arm"] = r.arm;
        j["round"] = r.round;
        j["device_id"] = r.device_id;
        j["test_accuracy"] = r.test_accuracy;
        if (r.labels_reported >= 0) {
            j["labels_reported"] = r.labels_reported;
            j["cumulative_logit_scalars"] = r.cumulative_logit_scalars;
        } else {
            j["cumulative_parameters"] = r.cumulative_parameters;
        }
        out << j.dump() << "\n";
    }
}

} // namespace fdsim
