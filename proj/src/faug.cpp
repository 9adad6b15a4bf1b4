#include "fdsim/faug.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include "fdsim/rng.hpp"
#include "json.hpp"

namespace fdsim::faug {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

std::set<int> detect_target_labels(const data::DeviceDataset& ds, double threshold_ratio) {
    if (threshold_ratio <= 0.0 || threshold_ratio >= 1.0)
        throw Error("detect_target_labels: threshold_ratio must be in (0, 1)");
    if (ds.num_labels <= 0) throw Error("detect_target_labels: dataset has no label space");
    auto counts = ds.label_counts();
    std::vector<long> all(ds.num_labels, 0);
    for (int l = 0; l < ds.num_labels; ++l)
        if (counts.count(l)) all[static_cast<std::size_t>(l)] = counts.at(l);

    std::vector<long> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = (n % 2 == 1)
                              ? static_cast<double>(sorted[n / 2])
                              : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);

    std::set<int> targets;
    for (int l = 0; l < ds.num_labels; ++l)
        if (static_cast<double>(all[static_cast<std::size_t>(l)]) < threshold_ratio * median)
            targets.insert(l);
    return targets;
}

SeedPlan build_seed_upload(const data::DeviceDataset& ds, const std::set<int>& targets,
                           int redundant_count, int seeds_per_label, std::uint64_t seed) {
    if (seeds_per_label < 1) throw Error("build_seed_upload: seeds_per_label must be >= 1");
    if (redundant_count < 0) throw Error("build_seed_upload: redundant_count must be >= 0");
    if (redundant_count > ds.num_labels - static_cast<int>(targets.size()))
        throw Error("build_seed_upload: redundant_count exceeds available non-target labels");

    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        by_label[ds.samples[i].label].push_back(i);

    auto g = rng::make_stream(seed, {0x5EEDu, static_cast<std::uint64_t>(ds.device_id)});

    SeedPlan plan;
    plan.upload.device_id = ds.device_id;
    plan.target_labels = targets;

    auto take_seeds = [&](int label) {
        auto& idx = by_label.at(label);
        std::size_t take = std::min<std::size_t>(idx.size(),
                                                 static_cast<std::size_t>(seeds_per_label));
        // uniform subset via partial shuffle
        for (std::size_t j = 0; j < take; ++j) {
            std::size_t r = j + rng::uniform_index(g, idx.size() - j);
            std::swap(idx[j], idx[r]);
            plan.upload.samples.push_back(ds.samples[idx[j]]);
        }
    };

    for (int label : targets) {
        if (!by_label.count(label) || by_label.at(label).empty())
            throw Error("build_seed_upload: device " + std::to_string(ds.device_id) +
                        " has no samples of target label " + std::to_string(label));
        take_seeds(label);
    }

    // Redundant labels drawn uniformly from the non-target labels that have
    // samples to contribute.
    std::vector<int> candidates;
    for (int l = 0; l < ds.num_labels; ++l)
        if (!targets.count(l) && by_label.count(l) && !by_label.at(l).empty())
            candidates.push_back(l);
    if (static_cast<int>(candidates.size()) < redundant_count)
        throw Error("build_seed_upload: not enough populated non-target labels for " +
                    std::to_string(redundant_count) + " redundant labels");
    for (int j = 0; j < redundant_count; ++j) {
        std::size_t r = static_cast<std::size_t>(j) +
                        rng::uniform_index(g, candidates.size() - static_cast<std::size_t>(j));
        std::swap(candidates[static_cast<std::size_t>(j)], candidates[r]);
        int label = candidates[static_cast<std::size_t>(j)];
        plan.redundant_labels.insert(label);
        take_seeds(label);
    }
    return plan;
}

data::Corpus server_oversample(const std::vector<SeedUpload>& uploads, int factor,
                               double jitter_amplitude, int num_labels, std::uint64_t seed) {
    if (factor < 1) throw Error("server_oversample: factor must be >= 1");
    if (jitter_amplitude < 0.0) throw Error("server_oversample: jitter_amplitude must be >= 0");

    data::Corpus out;
    out.num_labels = num_labels;
    auto g = rng::make_stream(seed, {0x05A3u});
    for (const SeedUpload& up : uploads) {
        for (const nn::Sample& s : up.samples) {
            for (int k = 0; k < factor; ++k) {
                nn::Sample copy = s;
                if (jitter_amplitude > 0.0)
                    for (double& f : copy.features)
                        f = clamp01(f + rng::uniform(g, -jitter_amplitude, jitter_amplitude));
                out.samples.push_back(std::move(copy));
            }
        }
    }
    return out;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, bool sigmoid_output, std::uint64_t seed) {
    if (dims.size() < 2) throw DimensionError("make_mlp: need at least input and output dims");
    Mlp m;
    m.dims = dims;
    m.sigmoid_output = sigmoid_output;
    auto g = rng::make_stream(seed, {0x6A4u});
    for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
        nn::Layer l;
        l.in_dim = dims[t];
        l.out_dim = dims[t + 1];
        double r = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
        l.w.resize(l.in_dim * l.out_dim);
        for (double& v : l.w) v = rng::uniform(g, -r, r);
        l.b.assign(l.out_dim, 0.0);
        m.layers.push_back(std::move(l));
    }
    return m;
}

std::vector<double> mlp_forward(const Mlp& m, std::span<const double> input, MlpTrace* trace) {
    if (input.size() != m.dims.front())
        throw DimensionError("mlp_forward: input size mismatch");
    const std::size_t T = m.layers.size();
    if (trace) {
        trace->acts.resize(T + 1);
        trace->zs.resize(T);
        trace->acts[0].assign(input.begin(), input.end());
    }
    std::vector<double> cur(input.begin(), input.end());
    for (std::size_t t = 0; t < T; ++t) {
        const nn::Layer& l = m.layers[t];
        std::vector<double> next(l.out_dim, 0.0);
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            const double* row = l.w.data() + o * l.in_dim;
            double z = l.b[o];
            for (std::size_t i = 0; i < l.in_dim; ++i) z += row[i] * cur[i];
            next[o] = z;
        }
        if (trace) trace->zs[t] = next;
        if (t + 1 < T) {
            for (double& v : next) v = v > 0.0 ? v : m.leaky_slope * v;
        } else if (m.sigmoid_output) {
            for (double& v : next) v = sigmoid(v);
        }
        if (trace) trace->acts[t + 1] = next;
        cur.swap(next);
    }
    return cur;
}

void mlp_backward(const Mlp& m, const MlpTrace& trace, std::span<const double> dout, Mlp& grad,
                  std::vector<double>* dinput) {
    if (grad.dims != m.dims) {
        grad = m;
        for (auto& l : grad.layers) {
            std::fill(l.w.begin(), l.w.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
    }
    const std::size_t T = m.layers.size();
    std::vector<double> delta(dout.begin(), dout.end());
    if (m.sigmoid_output) {
        const auto& a = trace.acts[T];
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= a[i] * (1.0 - a[i]);
    }
    for (std::size_t t = T; t-- > 0;) {
        const nn::Layer& l = m.layers[t];
        nn::Layer& gl = grad.layers[t];
        const auto& a_prev = trace.acts[t];
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            double d = delta[o];
            gl.b[o] += d;
            double* grow = gl.w.data() + o * l.in_dim;
            for (std::size_t i = 0; i < l.in_dim; ++i) grow[i] += d * a_prev[i];
        }
        if (t == 0 && !dinput) break;
        std::vector<double> dprev(l.in_dim, 0.0);
        for (std::size_t o = 0; o < l.out_dim; ++o) {
            double d = delta[o];
            const double* row = l.w.data() + o * l.in_dim;
            for (std::size_t i = 0; i < l.in_dim; ++i) dprev[i] += d * row[i];
        }
        if (t > 0) {
            const auto& z = trace.zs[t - 1];
            for (std::size_t i = 0; i < l.in_dim; ++i)
                dprev[i] *= z[i] > 0.0 ? 1.0 : m.leaky_slope;
        }
        if (t == 0) {
            *dinput = std::move(dprev);
            break;
        }
        delta = std::move(dprev);
    }
}

namespace {

void scale_mlp(Mlp& m, double s) {
    for (auto& l : m.layers) {
        for (double& v : l.w) v *= s;
        for (double& v : l.b) v *= s;
    }
}

void sgd_mlp(Mlp& m, const Mlp& grad, double eta) {
    for (std::size_t t = 0; t < m.layers.size(); ++t) {
        for (std::size_t i = 0; i < m.layers[t].w.size(); ++i)
            m.layers[t].w[i] -= eta * grad.layers[t].w[i];
        for (std::size_t i = 0; i < m.layers[t].b.size(); ++i)
            m.layers[t].b[i] -= eta * grad.layers[t].b[i];
    }
}

void zero_mlp(Mlp& m) {
    for (auto& l : m.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
}

GenerativeBackend train_conditional_gan(const data::Corpus& train, const GeneratorConfig& cfg) {
    const int L = train.num_labels;
    const int d = static_cast<int>(train.samples.front().features.size());

    GenerativeBackend gen;
    gen.kind = BackendKind::ConditionalGan;
    gen.num_labels = L;
    gen.feature_dim = d;
    gen.noise_dim = cfg.noise_dim;
    gen.declared_param_count = cfg.declared_param_count;
    for (const auto& s : train.samples) gen.generable_labels.insert(s.label);

    std::vector<std::size_t> g_dims, d_dims;
    g_dims.push_back(static_cast<std::size_t>(cfg.noise_dim + L));
    for (auto h : cfg.hidden_dims) g_dims.push_back(h);
    g_dims.push_back(static_cast<std::size_t>(d));
    d_dims.push_back(static_cast<std::size_t>(d + L));
    for (auto h : cfg.hidden_dims) d_dims.push_back(h);
    d_dims.push_back(1);

    Mlp G = make_mlp(g_dims, /*sigmoid_output=*/true, rng::mix(cfg.seed, 0x6E6u));
    Mlp D = make_mlp(d_dims, /*sigmoid_output=*/false, rng::mix(cfg.seed, 0xD15Cu));
    Mlp g_grad = G, d_grad = D;

    auto g = rng::make_stream(cfg.seed, {0x6A2u});
    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);

    std::vector<double> g_in(g_dims.front(), 0.0), d_in(d_dims.front(), 0.0);
    MlpTrace g_trace, d_trace;

    auto fill_noise_input = [&](int label) {
        for (int i = 0; i < cfg.noise_dim; ++i) g_in[static_cast<std::size_t>(i)] = rng::normal(g);
        std::fill(g_in.begin() + cfg.noise_dim, g_in.end(), 0.0);
        g_in[static_cast<std::size_t>(cfg.noise_dim + label)] = 1.0;
    };
    auto fill_disc_input = [&](std::span<const double> x, int label) {
        std::copy(x.begin(), x.end(), d_in.begin());
        std::fill(d_in.begin() + d, d_in.end(), 0.0);
        d_in[static_cast<std::size_t>(d + label)] = 1.0;
    };

    for (int step = 0; step < cfg.steps; ++step) {
        // Discriminator: -log D(real) - log(1 - D(fake)), batch-averaged.
        zero_mlp(d_grad);
        for (std::size_t k = 0; k < B; ++k) {
            const nn::Sample& real = train.samples[rng::uniform_index(g, train.samples.size())];
            fill_disc_input(real.features, real.label);
            double z_real = mlp_forward(D, d_in, &d_trace)[0];
            double dz[1] = {sigmoid(z_real) - 1.0};
            mlp_backward(D, d_trace, dz, d_grad, nullptr);

            fill_noise_input(real.label);
            auto fake = mlp_forward(G, g_in, nullptr);
            fill_disc_input(fake, real.label);
            double z_fake = mlp_forward(D, d_in, &d_trace)[0];
            dz[0] = sigmoid(z_fake);
            mlp_backward(D, d_trace, dz, d_grad, nullptr);
        }
        scale_mlp(d_grad, 1.0 / static_cast<double>(B));
        sgd_mlp(D, d_grad, cfg.eta_discriminator);

        // Generator, non-saturating: -log D(fake), gradient chained through
        // the (frozen) discriminator back into G.
        zero_mlp(g_grad);
        Mlp d_scratch = d_grad; // shape donor; values discarded per sample
        std::vector<double> d_dinput;
        for (std::size_t k = 0; k < B; ++k) {
            const nn::Sample& ref = train.samples[rng::uniform_index(g, train.samples.size())];
            fill_noise_input(ref.label);
            auto fake = mlp_forward(G, g_in, &g_trace);
            fill_disc_input(fake, ref.label);
            double z_fake = mlp_forward(D, d_in, &d_trace)[0];
            double dz[1] = {sigmoid(z_fake) - 1.0};
            mlp_backward(D, d_trace, dz, d_scratch, &d_dinput);
            d_dinput.resize(static_cast<std::size_t>(d)); // feature part only
            mlp_backward(G, g_trace, d_dinput, g_grad, nullptr);
        }
        scale_mlp(g_grad, 1.0 / static_cast<double>(B));
        sgd_mlp(G, g_grad, cfg.eta_generator);
    }

    gen.generator = std::move(G);
    return gen;
}

} // namespace

GenerativeBackend train_generator(const data::Corpus& train, const GeneratorConfig& cfg) {
    if (train.samples.empty()) throw Error("train_generator: empty training corpus");
    auto counts = train.samples_per_label();
    for (const auto& [label, count] : counts)
        if (count < 2)
            throw Error("train_generator: label " + std::to_string(label) +
                        " has fewer than 2 samples");

    if (cfg.kind == BackendKind::ConditionalGan) return train_conditional_gan(train, cfg);

    const int d = static_cast<int>(train.samples.front().features.size());
    GenerativeBackend gen;
    gen.kind = BackendKind::OracleGaussian;
    gen.num_labels = train.num_labels;
    gen.feature_dim = d;
    gen.declared_param_count = cfg.declared_param_count;

    for (const auto& [label, count] : counts) {
        gen.generable_labels.insert(label);
        gen.mean[label].assign(static_cast<std::size_t>(d), 0.0);
        gen.var[label].assign(static_cast<std::size_t>(d), 0.0);
    }
    for (const auto& s : train.samples) {
        auto& m = gen.mean[s.label];
        for (int k = 0; k < d; ++k) m[static_cast<std::size_t>(k)] += s.features[static_cast<std::size_t>(k)];
    }
    for (auto& [label, m] : gen.mean)
        for (double& v : m) v /= static_cast<double>(counts.at(label));
    for (const auto& s : train.samples) {
        const auto& m = gen.mean[s.label];
        auto& v = gen.var[s.label];
        for (int k = 0; k < d; ++k) {
            double diff = s.features[static_cast<std::size_t>(k)] - m[static_cast<std::size_t>(k)];
            v[static_cast<std::size_t>(k)] += diff * diff;
        }
    }
    for (auto& [label, v] : gen.var)
        for (double& x : v) x /= static_cast<double>(counts.at(label));
    return gen;
}

nn::Sample GenerativeBackend::sample(int label, std::mt19937_64& g) const {
    if (!can_generate(label))
        throw Error("generator cannot produce label " + std::to_string(label));
    nn::Sample s;
    s.label = label;
    s.synthetic = true;
    if (kind == BackendKind::OracleGaussian) {
        const auto& m = mean.at(label);
        const auto& v = var.at(label);
        s.features.resize(m.size());
        for (std::size_t k = 0; k < m.size(); ++k) {
            // 1e-6 variance floor keeps degenerate fits sampleable.
            double sd = std::sqrt(v[k] + 1e-6);
            s.features[k] = clamp01(m[k] + sd * rng::normal(g));
        }
        return s;
    }
    std::vector<double> in(static_cast<std::size_t>(noise_dim + num_labels), 0.0);
    for (int i = 0; i < noise_dim; ++i) in[static_cast<std::size_t>(i)] = rng::normal(g);
    in[static_cast<std::size_t>(noise_dim + label)] = 1.0;
    s.features = mlp_forward(generator, in, nullptr);
    for (double& f : s.features) f = clamp01(f);
    return s;
}

data::DeviceDataset augment_to_iid(const data::DeviceDataset& ds, const GenerativeBackend& gen,
                                   double tolerance, std::uint64_t seed) {
    if (tolerance < 0.0) throw Error("augment_to_iid: tolerance must be >= 0");
    for (int t : ds.target_labels)
        if (!gen.can_generate(t))
            throw Error("augment_to_iid: target label " + std::to_string(t) +
                        " is not generable");

    data::DeviceDataset out = ds;
    if (data::is_iid(out, tolerance)) return out;

    auto counts = out.label_counts();
    long max_count = 0;
    for (int l = 0; l < out.num_labels; ++l)
        max_count = std::max(max_count, counts.count(l) ? counts.at(l) : 0L);

    // Smallest per-label floor m with max <= (1 + tol) * m.
    long target_min = static_cast<long>(
        std::ceil(static_cast<double>(max_count) / (1.0 + tolerance) - 1e-9));
    while ((1.0 + tolerance) * static_cast<double>(target_min) <
           static_cast<double>(max_count))
        ++target_min;

    auto g = rng::make_stream(seed, {0xA06u, static_cast<std::uint64_t>(ds.device_id)});
    for (int l = 0; l < out.num_labels; ++l) {
        long have = counts.count(l) ? counts.at(l) : 0L;
        if (have >= target_min) continue;
        if (!gen.can_generate(l))
            throw Error("augment_to_iid: label " + std::to_string(l) +
                        " is deficient but not generable (no device uploaded seeds for it; "
                        "more redundant labels or a looser tolerance would cover it)");
        for (long k = have; k < target_min; ++k) out.samples.push_back(gen.sample(l, g));
    }
    return out;
}

std::vector<std::uint8_t> serialize_seed_upload(const SeedUpload& upload) {
    std::vector<std::uint8_t> out;
    auto put_u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    };
    put_u32(static_cast<std::uint32_t>(upload.device_id));
    put_u32(static_cast<std::uint32_t>(upload.samples.size()));
    for (const nn::Sample& s : upload.samples) {
        if (s.label < 0 || s.label > 0xFFFF)
            throw Error("serialize_seed_upload: label does not fit in 16 bits");
        put_u16(static_cast<std::uint16_t>(s.label));
        put_u32(static_cast<std::uint32_t>(s.features.size()));
        for (double f : s.features) {
            float f32 = static_cast<float>(f);
            std::uint32_t bits;
            std::memcpy(&bits, &f32, 4);
            put_u32(bits);
        }
    }
    return out;
}

SeedUpload parse_seed_upload(std::span<const std::uint8_t> bytes) {
    std::size_t at = 0;
    auto need = [&](std::size_t n) {
        if (at + n > bytes.size()) throw Error("parse_seed_upload: truncated payload");
    };
    auto get_u16 = [&]() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8));
        at += 2;
        return v;
    };
    auto get_u32 = [&]() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
        at += 4;
        return v;
    };
    SeedUpload up;
    up.device_id = static_cast<int>(get_u32());
    std::uint32_t count = get_u32();
    up.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        nn::Sample s;
        s.label = get_u16();
        std::uint32_t nfeat = get_u32();
        s.features.resize(nfeat);
        for (std::uint32_t k = 0; k < nfeat; ++k) {
            std::uint32_t bits = get_u32();
            float f32;
            std::memcpy(&f32, &bits, 4);
            s.features[k] = static_cast<double>(f32);
        }
        up.samples.push_back(std::move(s));
    }
    if (at != bytes.size()) throw Error("parse_seed_upload: trailing bytes");
    return up;
}

void save_generator(const GenerativeBackend& gen, std::ostream& out) {
    nlohmann::json doc;
    doc["kind"] = gen.kind == BackendKind::OracleGaussian ? "oracle-gaussian" : "conditional-gan";
    doc["num_labels"] = gen.num_labels;
    doc["feature_dim"] = gen.feature_dim;
    doc["declared_param_count"] = gen.declared_param_count;
    doc["generable_labels"] = gen.generable_labels;
    if (gen.kind == BackendKind::OracleGaussian) {
        // flat parameter list: mean then var per label, labels ascending
        std::vector<double> params;
        for (const auto& [label, m] : gen.mean) {
            params.insert(params.end(), m.begin(), m.end());
            const auto& v = gen.var.at(label);
            params.insert(params.end(), v.begin(), v.end());
        }
        doc["params"] = params;
    } else {
        doc["noise_dim"] = gen.noise_dim;
        doc["dims"] = gen.generator.dims;
        std::vector<double> params;
        for (const auto& l : gen.generator.layers) {
            params.insert(params.end(), l.w.begin(), l.w.end());
            params.insert(params.end(), l.b.begin(), l.b.end());
        }
        doc["params"] = params;
    }
    out << doc.dump(2) << "\n";
}

GenerativeBackend load_generator(std::istream& in) {
    nlohmann::json doc = nlohmann::json::parse(in);
    GenerativeBackend gen;
    gen.kind = doc.at("kind").get<std::string>() == "oracle-gaussian"
                   ? BackendKind::OracleGaussian
                   : BackendKind::ConditionalGan;
    gen.num_labels = doc.at("num_labels").get<int>();
    gen.feature_dim = doc.at("feature_dim").get<int>();
    gen.declared_param_count = doc.at("declared_param_count").get<std::uint64_t>();
    for (int l : doc.at("generable_labels").get<std::vector<int>>()) gen.generable_labels.insert(l);

    auto params = doc.at("params").get<std::vector<double>>();
    if (gen.kind == BackendKind::OracleGaussian) {
        const std::size_t d = static_cast<std::size_t>(gen.feature_dim);
        if (params.size() != gen.generable_labels.size() * 2 * d)
            throw Error("load_generator: parameter list size mismatch");
        std::size_t at = 0;
        for (int label : gen.generable_labels) {
            gen.mean[label].assign(params.begin() + at, params.begin() + at + d);
            at += d;
            gen.var[label].assign(params.begin() + at, params.begin() + at + d);
            at += d;
        }
    } else {
        gen.noise_dim = doc.at("noise_dim").get<int>();
        auto dims = doc.at("dims").get<std::vector<std::size_t>>();
        gen.generator = make_mlp(dims, /*sigmoid_output=*/true, 0);
        std::size_t at = 0;
        for (auto& l : gen.generator.layers) {
            if (at + l.w.size() + l.b.size() > params.size())
                throw Error("load_generator: parameter list too short");
            std::copy(params.begin() + at, params.begin() + at + l.w.size(), l.w.begin());
            at += l.w.size();
            std::copy(params.begin() + at, params.begin() + at + l.b.size(), l.b.begin());
            at += l.b.size();
        }
        if (at != params.size()) throw Error("load_generator: parameter list size mismatch");
    }
    return gen;
}

} // namespace fdsim::faug
