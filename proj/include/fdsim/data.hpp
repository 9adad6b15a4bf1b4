#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fdsim/nn.hpp"

namespace fdsim::data {

using nn::Sample;

struct Corpus {
    std::vector<Sample> samples;
    int num_labels = 0;

    std::map<int, long> samples_per_label() const;
};

struct PartitionSpec {
    int num_devices = 2;
    int per_device_draw = 2000;
    int num_target_labels = 3;
    int target_keep_count = 5;
    std::uint64_t seed = 0;
};

struct DeviceDataset {
    int device_id = 0;
    int num_labels = 0;
    std::vector<Sample> samples;
    std::set<int> target_labels;
    bool targets_redrawn = false; // first target draw hit a label missing from the device draw

    std::map<int, long> label_counts() const;
};

// Synthetic labeled corpus: per-label prototype anchors on a ring in the
// first two feature dims, a few sub-modes per label, bounded noise, values
// clamped to [0,1]. Separable enough for a small net to clear 90% on IID
// splits while scarce labels stay genuinely under-fit.
Corpus generate_corpus(int num_labels, int per_label, int feature_dim, std::uint64_t seed);

// Stratified split into (train, test); test gets ceil(fraction * count) of
// each label's samples, chosen uniformly.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction,
                                       std::uint64_t seed);

// Per device: draw per_device_draw samples uniformly without replacement
// (independent draws across devices), pick num_target_labels target labels
// uniformly, then downsample each target label to exactly target_keep_count
// samples. Targets hitting a label absent from the draw are redrawn among
// labels with enough samples (logged to stderr, flagged on the dataset).
std::vector<DeviceDataset> partition_non_iid(const Corpus& corpus, const PartitionSpec& spec);

// true iff max label count <= (1 + tolerance) * min label count, counting
// every label in [0, num_labels).
bool is_iid(const DeviceDataset& ds, double tolerance);

// IDX-format loaders (big-endian magic + dims header, raw bytes); pixels
// scaled to [0,1].
Corpus load_idx_corpus(const std::string& images_path, const std::string& labels_path);

// JSON manifest with per-device label_counts and target_labels.
std::string partition_manifest_json(const std::vector<DeviceDataset>& devices,
                                    const PartitionSpec& spec);

} // namespace fdsim::data
