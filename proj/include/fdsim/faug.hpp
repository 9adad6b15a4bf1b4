#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "fdsim/data.hpp"
#include "fdsim/nn.hpp"

namespace fdsim::faug {

// What the server actually sees: a device id and a bag of labeled samples.
// Target/redundant designations never leave the device.
struct SeedUpload {
    int device_id = 0;
    std::vector<nn::Sample> samples;
};

// Upload plus the device-private split behind it (kept for the leakage
// metrics; not part of the wire form).
struct SeedPlan {
    SeedUpload upload;
    std::set<int> target_labels;
    std::set<int> redundant_labels;
};

// Labels whose count falls below threshold_ratio * median(per-label counts),
// counting absent labels as zero.
std::set<int> detect_target_labels(const data::DeviceDataset& ds, double threshold_ratio);

// seeds_per_label samples from each target label (all of them if fewer
// exist) plus seeds_per_label from each of redundant_count uniformly chosen
// non-target labels. A target label with no samples at all is an error: the
// device cannot seed it.
SeedPlan build_seed_upload(const data::DeviceDataset& ds, const std::set<int>& targets,
                           int redundant_count, int seeds_per_label, std::uint64_t seed);

// Replicate every uploaded sample `factor` times with bounded uniform
// feature jitter (clamped to [0,1]); stands in for external oversampling.
data::Corpus server_oversample(const std::vector<SeedUpload>& uploads, int factor,
                               double jitter_amplitude, int num_labels, std::uint64_t seed);

enum class BackendKind { OracleGaussian, ConditionalGan };

// Plain MLP with leaky-ReLU hiddens, used by the GAN nets (the classifier
// in nn.hpp is softmax-only). sigmoid_output squashes the final layer.
struct Mlp {
    std::vector<std::size_t> dims;
    std::vector<nn::Layer> layers;
    double leaky_slope = 0.2;
    bool sigmoid_output = false;
};

struct MlpTrace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> zs;
};

Mlp make_mlp(const std::vector<std::size_t>& dims, bool sigmoid_output, std::uint64_t seed);
std::vector<double> mlp_forward(const Mlp& m, std::span<const double> input, MlpTrace* trace);
// dout is dLoss/d(output); ACCUMULATES into `grad` (zero it between batches)
// and optionally returns dLoss/d(input) for chaining through the
// discriminator into the generator.
void mlp_backward(const Mlp& m, const MlpTrace& trace, std::span<const double> dout, Mlp& grad,
                  std::vector<double>* dinput);

struct GeneratorConfig {
    BackendKind kind = BackendKind::OracleGaussian;
    std::uint64_t seed = 0;
    std::uint64_t declared_param_count = 1'493'520;
    // cGAN knobs
    int noise_dim = 8;
    std::vector<std::size_t> hidden_dims = {32, 32};
    int steps = 2000;
    int batch_size = 16;
    double eta_generator = 0.05;
    double eta_discriminator = 0.05;
};

// Label-conditioned sample generator. Oracle backend: per-label feature mean
// and diagonal variance. cGAN backend: generator net conditioned by one-hot
// concatenation.
struct GenerativeBackend {
    BackendKind kind = BackendKind::OracleGaussian;
    int num_labels = 0;
    int feature_dim = 0;
    std::set<int> generable_labels;
    std::uint64_t declared_param_count = 1'493'520;

    std::map<int, std::vector<double>> mean; // oracle
    std::map<int, std::vector<double>> var;  // oracle (fitted, may be zero)

    Mlp generator; // cGAN
    int noise_dim = 0;

    bool can_generate(int label) const { return generable_labels.count(label) > 0; }
    nn::Sample sample(int label, std::mt19937_64& g) const;
};

// Fit the chosen backend on the (oversampled) seed corpus. Every label in
// train needs >= 2 samples. generable_labels = labels present in train.
GenerativeBackend train_generator(const data::Corpus& train, const GeneratorConfig& cfg);

// Replenish deficient labels with generated samples until is_iid holds at
// `tolerance`. Real samples are never touched; generated ones are flagged
// synthetic. A deficient label outside generable_labels is an error.
data::DeviceDataset augment_to_iid(const data::DeviceDataset& ds, const GenerativeBackend& gen,
                                   double tolerance, std::uint64_t seed);

// Wire form: device_id, then a length-prefixed list of (label u16, feature
// count u32, features as 32-bit floats), little-endian.
std::vector<std::uint8_t> serialize_seed_upload(const SeedUpload& upload);
SeedUpload parse_seed_upload(std::span<const std::uint8_t> bytes);

// Checkpoint: dims header + flat parameter list + generable labels.
void save_generator(const GenerativeBackend& gen, std::ostream& out);
GenerativeBackend load_generator(std::istream& in);

} // namespace fdsim::faug
