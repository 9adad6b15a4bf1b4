#include "fdsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fdsim/rng.hpp"
#include "json.hpp"

namespace fdsim::data {

namespace {

constexpr int kModesPerLabel = 6;
constexpr double kNoiseAmplitude = 0.04;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// k samples out of [0, n) without replacement, via partial Fisher-Yates.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k,
                                                  std::mt19937_64& g) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t r = j + rng::uniform_index(g, n - j);
        std::swap(idx[j], idx[r]);
    }
    idx.resize(k);
    return idx;
}

} // namespace

std::map<int, long> Corpus::samples_per_label() const {
    std::map<int, long> counts;
    for (const Sample& s : samples) ++counts[s.label];
    return counts;
}

std::map<int, long> DeviceDataset::label_counts() const {
    std::map<int, long> counts;
    for (const Sample& s : samples) ++counts[s.label];
    return counts;
}

Corpus generate_corpus(int num_labels, int per_label, int feature_dim, std::uint64_t seed) {
    if (num_labels < 2) throw Error("generate_corpus: need at least 2 labels");
    if (per_label < 1) throw Error("generate_corpus: need at least 1 sample per label");
    if (feature_dim < 2) throw Error("generate_corpus: need feature_dim >= 2");

    Corpus corpus;
    corpus.num_labels = num_labels;
    corpus.samples.reserve(static_cast<std::size_t>(num_labels) * per_label);

    // Each label is a union of several tight blobs. A handful of samples
    // covers only some blobs, so starved labels stay genuinely under-fit
    // until they are replenished; with plenty of samples the blobs are far
    // apart relative to the noise and easy to classify.
    for (int label = 0; label < num_labels; ++label) {
        auto g = rng::make_stream(seed, {0xC0DEu, static_cast<std::uint64_t>(label)});
        std::vector<std::vector<double>> modes(kModesPerLabel);
        for (auto& center : modes) {
            center.resize(feature_dim);
            for (double& c : center) c = rng::uniform(g, 0.15, 0.85);
        }
        for (int i = 0; i < per_label; ++i) {
            Sample s;
            s.label = label;
            const auto& center = modes[rng::uniform_index(g, kModesPerLabel)];
            s.features.resize(feature_dim);
            for (int d = 0; d < feature_dim; ++d)
                s.features[d] =
                    clamp01(center[d] + rng::uniform(g, -kNoiseAmplitude, kNoiseAmplitude));
            corpus.samples.push_back(std::move(s));
        }
    }
    return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double test_fraction,
                                       std::uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw Error("split_corpus: test_fraction must be in [0, 1)");
    Corpus train, test;
    train.num_labels = test.num_labels = corpus.num_labels;

    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i)
        by_label[corpus.samples[i].label].push_back(i);

    for (auto& [label, idx] : by_label) {
        auto g = rng::make_stream(seed, {0x59117u, static_cast<std::uint64_t>(label)});
        std::size_t n_test =
            static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(idx.size())));
        auto picked = draw_without_replacement(idx.size(), n_test, g);
        std::vector<bool> in_test(idx.size(), false);
        for (std::size_t p : picked) in_test[p] = true;
        for (std::size_t j = 0; j < idx.size(); ++j)
            (in_test[j] ? test : train).samples.push_back(corpus.samples[idx[j]]);
    }
    return {std::move(train), std::move(test)};
}

std::vector<DeviceDataset> partition_non_iid(const Corpus& corpus, const PartitionSpec& spec) {
    const int L = corpus.num_labels;
    if (spec.num_target_labels >= L)
        throw Error("partition_non_iid: num_target_labels must be < num_labels");
    if (spec.target_keep_count < 1)
        throw Error("partition_non_iid: target_keep_count must be >= 1");
    if (static_cast<std::size_t>(spec.per_device_draw) > corpus.samples.size())
        throw Error("partition_non_iid: per_device_draw exceeds corpus size");

    std::vector<DeviceDataset> devices;
    devices.reserve(spec.num_devices);

    for (int dev = 0; dev < spec.num_devices; ++dev) {
        // One stream per device, derived from (seed, device_id): adding
        // devices never perturbs earlier devices' draws.
        auto g = rng::make_stream(spec.seed, {0x9A27u, static_cast<std::uint64_t>(dev)});

        auto picked = draw_without_replacement(corpus.samples.size(),
                                               static_cast<std::size_t>(spec.per_device_draw), g);
        std::map<int, std::vector<std::size_t>> by_label;
        for (std::size_t p : picked) by_label[corpus.samples[p].label].push_back(p);

        DeviceDataset ds;
        ds.device_id = dev;
        ds.num_labels = L;

        // Target labels drawn uniformly over all labels first; redraw among
        // labels with enough drawn samples if that picks an absent one.
        auto pick_targets = [&](const std::vector<int>& pool) {
            std::set<int> targets;
            std::vector<int> shuffled = pool;
            for (std::size_t j = 0; j < shuffled.size() && targets.size() <
                 static_cast<std::size_t>(spec.num_target_labels); ++j) {
                std::size_t r = j + rng::uniform_index(g, shuffled.size() - j);
                std::swap(shuffled[j], shuffled[r]);
                targets.insert(shuffled[j]);
            }
            return targets;
        };

        std::vector<int> all_labels(L);
        std::iota(all_labels.begin(), all_labels.end(), 0);
        std::set<int> targets = pick_targets(all_labels);

        bool usable = std::all_of(targets.begin(), targets.end(), [&](int t) {
            auto it = by_label.find(t);
            return it != by_label.end() &&
                   it->second.size() >= static_cast<std::size_t>(spec.target_keep_count);
        });
        if (!usable) {
            std::vector<int> eligible;
            for (const auto& [label, idx] : by_label)
                if (idx.size() >= static_cast<std::size_t>(spec.target_keep_count))
                    eligible.push_back(label);
            if (eligible.size() < static_cast<std::size_t>(spec.num_target_labels))
                throw Error("partition_non_iid: device draw has too few populated labels "
                            "for the requested target count");
            std::cerr << "partition: device " << dev
                      << " redrew target labels (original pick absent from draw)\n";
            targets = pick_targets(eligible);
            ds.targets_redrawn = true;
        }
        ds.target_labels = targets;

        for (auto& [label, idx] : by_label) {
            if (targets.count(label)) {
                // Keep a uniform subset of exactly target_keep_count samples.
                auto keep =
                    draw_without_replacement(idx.size(),
                                             static_cast<std::size_t>(spec.target_keep_count), g);
                for (std::size_t k : keep) ds.samples.push_back(corpus.samples[idx[k]]);
            } else {
                for (std::size_t p : idx) ds.samples.push_back(corpus.samples[p]);
            }
        }
        devices.push_back(std::move(ds));
    }
    return devices;
}

bool is_iid(const DeviceDataset& ds, double tolerance) {
    auto counts = ds.label_counts();
    long min_count = -1, max_count = 0;
    for (int l = 0; l < ds.num_labels; ++l) {
        long c = counts.count(l) ? counts.at(l) : 0;
        if (min_count < 0 || c < min_count) min_count = c;
        if (c > max_count) max_count = c;
    }
    if (min_count <= 0) return max_count == 0;
    return static_cast<double>(max_count) <=
           (1.0 + tolerance) * static_cast<double>(min_count);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw Error("idx: truncated header in " + path);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

} // namespace

Corpus load_idx_corpus(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw Error("idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw Error("idx: cannot open " + labels_path);

    if (read_be32(img, images_path) != 0x00000803u)
        throw Error("idx: bad magic in " + images_path + " (want 0x803 image file)");
    std::uint32_t n = read_be32(img, images_path);
    std::uint32_t rows = read_be32(img, images_path);
    std::uint32_t cols = read_be32(img, images_path);

    if (read_be32(lab, labels_path) != 0x00000801u)
        throw Error("idx: bad magic in " + labels_path + " (want 0x801 label file)");
    std::uint32_t n_labels = read_be32(lab, labels_path);
    if (n != n_labels) throw Error("idx: image/label count mismatch");

    Corpus corpus;
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixel_buf(dim);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_buf.data()), static_cast<std::streamsize>(dim)))
            throw Error("idx: truncated image data in " + images_path);
        char lbl = 0;
        if (!lab.read(&lbl, 1)) throw Error("idx: truncated label data in " + labels_path);
        Sample s;
        s.label = static_cast<unsigned char>(lbl);
        s.features.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) s.features[d] = pixel_buf[d] / 255.0;
        max_label = std::max(max_label, s.label);
        corpus.samples.push_back(std::move(s));
    }
    corpus.num_labels = max_label + 1;
    return corpus;
}

std::string partition_manifest_json(const std::vector<DeviceDataset>& devices,
                                    const PartitionSpec& spec) {
    nlohmann::json doc;
    doc["num_devices"] = spec.num_devices;
    doc["per_device_draw"] = spec.per_device_draw;
    doc["num_target_labels"] = spec.num_target_labels;
    doc["target_keep_count"] = spec.target_keep_count;
    doc["seed"] = spec.seed;
    // Draws are independent per device; the source never states disjointness.
    doc["draws_across_devices"] = "independent";
    doc["devices"] = nlohmann::json::array();
    for (const DeviceDataset& ds : devices) {
        nlohmann::json d;
        d["device_id"] = ds.device_id;
        d["target_labels"] = ds.target_labels;
        d["targets_redrawn"] = ds.targets_redrawn;
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [label, count] : ds.label_counts())
            counts[std::to_string(label)] = count;
        d["label_counts"] = counts;
        doc["devices"].push_back(d);
    }
    return doc.dump(2) + "\n";
}

} // namespace fdsim::data
