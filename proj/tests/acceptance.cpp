// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "fdsim/data.hpp"
#include "fdsim/faug.hpp"
#include "fdsim/fd.hpp"
#include "fdsim/fl.hpp"
#include "fdsim/harness.hpp"
#include "fdsim/metrics.hpp"
#include "fdsim/nn.hpp"
#include "fdsim/rng.hpp"

using namespace fdsim;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.str().empty()) detail << "; ";
            detail << what;
        }
    }
};

// ---------------------------------------------------------------- criterion 1

bool cost_table_reproduction(Check& c) {
    using harness::Arm;
    auto fd = harness::cost_calculator(Arm::Fd, 16, 10, 1'199'648, 1'493'520, 15, 784);
    c.expect(fd.logit_scalars == 3'200, "fd logits != 3,200");
    c.expect(fd.model_parameters == 0, "fd parameters != 0");
    c.expect(fd.total_bits() == 102'400, "fd bits != 102,400");

    auto fd_faug = harness::cost_calculator(Arm::FdFaug, 16, 10, 1'199'648, 1'493'520, 15, 784);
    c.expect(fd_faug.logit_scalars == 3'200, "fd+faug logits != 3,200");
    c.expect(fd_faug.model_parameters == 1'493'520, "fd+faug parameters != 1,493,520");
    c.expect(fd_faug.seed_samples == 15, "fd+faug samples != 15");
    c.expect(fd_faug.total_bits() == 47'989'120, "fd+faug bits != 47,989,120");

    auto fl = harness::cost_calculator(Arm::Fl, 16, 10, 1'199'648, 1'493'520, 15, 784);
    c.expect(fl.model_parameters == 38'388'736, "fl parameters != 38,388,736");
    c.expect(fl.total_bits() == 1'228'439'552, "fl bits != 1,228,439,552");

    auto fl_faug = harness::cost_calculator(Arm::FlFaug, 16, 10, 1'199'648, 1'493'520, 15, 784);
    c.expect(fl_faug.model_parameters == 39'882'256, "fl+faug parameters != 39,882,256");
    c.expect(fl_faug.seed_samples == 15, "fl+faug samples != 15");
    c.expect(fl_faug.total_bits() == 1'276'326'272, "fl+faug bits != 1,276,326,272");
    return c.ok;
}

// ---------------------------------------------------------------- criterion 2

nn::LogitVector random_logit_vector(std::size_t n, std::mt19937_64& g) {
    nn::LogitVector v;
    v.probs.resize(n);
    double sum = 0.0;
    for (double& p : v.probs) {
        p = rng::uniform(g) + 1e-3;
        sum += p;
    }
    for (double& p : v.probs) p /= sum;
    return v;
}

bool ensembling_oracle(Check& c) {
    auto g = rng::make_stream(0xACCE97, {});
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int M = 2 + static_cast<int>(rng::uniform_index(g, 5));
        const int L = 2 + static_cast<int>(rng::uniform_index(g, 9));
        std::vector<fd::LocalReport> reports;
        for (int i = 0; i < M; ++i) {
            fd::LocalReport r;
            r.device_id = i;
            r.per_label.assign(static_cast<std::size_t>(L), std::nullopt);
            for (int l = 0; l < L; ++l)
                if (rng::uniform(g) < 0.65)
                    r.per_label[static_cast<std::size_t>(l)] =
                        random_logit_vector(static_cast<std::size_t>(L), g);
            reports.push_back(std::move(r));
        }
        auto teachers = fd::global_ensembling_phase(reports);
        for (int i = 0; i < M; ++i)
            for (int l = 0; l < L; ++l) {
                std::vector<double> sum(static_cast<std::size_t>(L), 0.0);
                int n = 0;
                for (int j = 0; j < M; ++j) {
                    if (j == i) continue;
                    const auto& e =
                        reports[static_cast<std::size_t>(j)].per_label[static_cast<std::size_t>(l)];
                    if (!e) continue;
                    for (int k = 0; k < L; ++k)
                        sum[static_cast<std::size_t>(k)] += e->probs[static_cast<std::size_t>(k)];
                    ++n;
                }
                const auto& got = teachers.at(i)[static_cast<std::size_t>(l)];
                if (n == 0) {
                    c.expect(!got.has_value(), "teacher present where oracle has no reporters");
                    continue;
                }
                c.expect(got.has_value(), "teacher missing where oracle has reporters");
                if (!got) continue;
                for (int k = 0; k < L; ++k) {
                    double diff = std::abs(got->probs[static_cast<std::size_t>(k)] -
                                           sum[static_cast<std::size_t>(k)] / n);
                    worst = std::max(worst, diff);
                }
            }
    }
    c.expect(worst <= 1e-12, "worst per-element deviation " + std::to_string(worst));
    c.detail << "worst deviation " << worst;
    return c.ok;
}

// ---------------------------------------------------------------- criterion 3

double combined_loss(const nn::ModelWeights& w, const nn::Sample& b,
                     const std::optional<nn::LogitVector>& teacher, double gamma) {
    auto pred = nn::forward(w, b.features);
    std::vector<double> onehot(w.num_labels(), 0.0);
    onehot[static_cast<std::size_t>(b.label)] = 1.0;
    double loss = nn::cross_entropy(pred, onehot);
    if (teacher) loss += gamma * nn::cross_entropy(pred, teacher->probs);
    return loss;
}

bool gradient_correctness(Check& c) {
    auto g = rng::make_stream(0xACCE9703, {});
    const std::vector<std::vector<std::size_t>> shapes = {{2, 4, 3}, {3, 5, 4}, {4, 3, 3, 2}};
    int nets = 0;
    double worst_rel = 0.0;
    for (int trial = 0; trial < 24; ++trial) {
        const auto& dims = shapes[static_cast<std::size_t>(trial) % shapes.size()];
        nn::ModelWeights w = nn::zero_weights(dims);
        for (auto& l : w.layers) {
            for (double& v : l.w) v = rng::uniform(g, -1.0, 1.0);
            for (double& v : l.b) v = rng::uniform(g, -0.5, 0.5);
        }
        nn::Sample b;
        b.features.resize(dims.front());
        for (double& f : b.features) f = rng::uniform(g);
        b.label = static_cast<int>(rng::uniform_index(g, dims.back()));
        std::optional<nn::LogitVector> teacher;
        double gamma = 0.0;
        if (trial % 2 == 0) {
            teacher = random_logit_vector(dims.back(), g);
            gamma = 0.25 + rng::uniform(g, 0.0, 1.75);
        }

        auto analytic = nn::flatten(nn::fd_loss_gradient(w, b, teacher, gamma));
        auto params = nn::flatten(w);
        const double h = 1e-5;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto up = params, down = params;
            up[i] += h;
            down[i] -= h;
            double numeric = (combined_loss(nn::unflatten(dims, up), b, teacher, gamma) -
                              combined_loss(nn::unflatten(dims, down), b, teacher, gamma)) /
                             (2 * h);
            double diff = std::abs(analytic[i] - numeric);
            double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
            if (diff > 1e-8) worst_rel = std::max(worst_rel, diff / std::max(scale, 1e-300));
        }
        ++nets;
    }
    c.expect(nets >= 20, "fewer than 20 nets checked");
    c.expect(worst_rel <= 1e-4, "worst relative error " + std::to_string(worst_rel));
    c.detail << nets << " nets, worst rel err " << worst_rel;
    return c.ok;
}

// ---------------------------------------------------------------- criterion 4

harness::ExperimentConfig trend_config(std::uint64_t seed) {
    harness::ExperimentConfig cfg;
    cfg.num_labels = 10;
    cfg.per_label = 250;
    cfg.feature_dim = 32;
    cfg.test_fraction = 0.1;
    cfg.devices = 4;
    cfg.per_device_draw = 2000;
    cfg.num_target_labels = 3;
    cfg.target_keep_count = 5;
    cfg.rounds = 16;
    cfg.local_steps = 250;
    cfg.batch_size = 64;
    cfg.eta = 0.05;
    cfg.gamma = 1.0;
    cfg.hidden_dims = {32};
    cfg.seed = seed;
    cfg.redundant_count = 7;
    cfg.iid_tolerance = 0.05;
    cfg.oversample_factor = 20;
    cfg.backend = faug::BackendKind::OracleGaussian;
    return cfg;
}

bool accuracy_trends(Check& c) {
    int wins_gap = 0, wins_label = 0, wins_order = 0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        auto cfg = trend_config(seed);
        cfg.arm = harness::Arm::Fd;
        auto fd_run = harness::run_experiment(cfg);
        cfg.arm = harness::Arm::FdFaug;
        auto faug_run = harness::run_experiment(cfg);
        cfg.arm = harness::Arm::Fl;
        auto fl_run = harness::run_experiment(cfg);

        // standalone baseline: device 0 training alone on its non-IID data,
        // same update budget, no exchange
        auto corpus = data::generate_corpus(cfg.num_labels, cfg.per_label, cfg.feature_dim,
                                            rng::mix(seed, 0xC0u));
        auto [train, test] = data::split_corpus(corpus, cfg.test_fraction, rng::mix(seed, 0x7Eu));
        data::PartitionSpec ps;
        ps.num_devices = cfg.devices;
        ps.per_device_draw = cfg.per_device_draw;
        ps.num_target_labels = cfg.num_target_labels;
        ps.target_keep_count = cfg.target_keep_count;
        ps.seed = rng::mix(seed, 0x9Au);
        auto devices = data::partition_non_iid(train, ps);
        fl::FlConfig scfg;
        scfg.local_steps = cfg.local_steps;
        scfg.batch_size = cfg.batch_size;
        scfg.eta = cfg.eta;
        scfg.seed = rng::mix(seed, 0x7Au);
        scfg.hidden_dims = cfg.hidden_dims;
        auto w = nn::init_weights({32, 32, 10}, rng::mix(scfg.seed, 0x57A0u));
        for (int r = 1; r <= cfg.rounds; ++r) w = fl::fl_local_phase(w, devices[0], scfg, r);
        auto standalone_per_label = nn::per_label_accuracy(w, test.samples, cfg.num_labels);
        const int target = *devices[0].target_labels.begin();

        if (faug_run.mean_final_accuracy - fd_run.mean_final_accuracy >= 0.05) ++wins_gap;
        if (faug_run.per_label_accuracy[0][static_cast<std::size_t>(target)] >
            standalone_per_label[static_cast<std::size_t>(target)])
            ++wins_label;
        if (fl_run.mean_final_accuracy >= fd_run.mean_final_accuracy) ++wins_order;
    }
    c.expect(wins_gap >= 3, "fd+faug vs fd gap >= 5pp on only " + std::to_string(wins_gap) + "/5");
    c.expect(wins_label >= 3,
             "target-label recovery beat standalone on only " + std::to_string(wins_label) + "/5");
    c.expect(wins_order >= 3, "fl >= fd held on only " + std::to_string(wins_order) + "/5");
    c.detail << "gap " << wins_gap << "/5, target label " << wins_label << "/5, fl>=fd "
             << wins_order << "/5";
    return c.ok;
}

// ---------------------------------------------------------------- criterion 5

metrics::LabelInventory sized_inventory(int num_labels,
                                        const std::vector<std::pair<int, int>>& sizes) {
    metrics::LabelInventory inv;
    inv.num_labels = num_labels;
    int offset = 0;
    for (auto [t, r] : sizes) {
        metrics::LabelInventory::PerDevice dev;
        for (int i = 0; i < t; ++i) dev.targets.insert((offset + i) % num_labels);
        for (int i = 0; i < r; ++i) dev.redundants.insert((offset + t + i) % num_labels);
        inv.devices.push_back(std::move(dev));
        offset += 3;
    }
    return inv;
}

bool pl_formulas(Check& c) {
    {
        metrics::LabelInventory inv;
        inv.num_labels = 10;
        inv.devices.push_back({{0, 1, 2}, {3, 4, 5}});
        inv.devices.push_back({{0, 1, 2}, {}});
        c.expect(metrics::device_server_pl(inv, 0) == 0.5, "pl(3,3) != 0.5");
        c.expect(metrics::device_server_pl(inv, 1) == 1.0, "pl(3,0) != 1.0");
    }
    {
        metrics::LabelInventory inv;
        inv.num_labels = 10;
        inv.devices.push_back({{0, 1, 2}, {3, 4}});
        inv.devices.push_back({{5, 6, 7}, {8, 9}});
        c.expect(std::abs(metrics::inter_device_pl(inv, 0) - 0.3) < 1e-15,
                 "inter-device pl != 0.3 on a full union");
    }

    // device-server monotonicity: exhaustive over all sizes at L = 10
    for (int t = 1; t <= 10 && c.ok; ++t) {
        double prev = 2.0;
        for (int r = 0; r + t <= 10; ++r) {
            auto inv = sized_inventory(10, {{t, r}});
            double pl = metrics::device_server_pl(inv, 0);
            c.expect(std::abs(pl - static_cast<double>(t) / (t + r)) < 1e-15, "pl formula value");
            c.expect(pl < prev, "pl not decreasing in redundant count");
            prev = pl;
        }
    }

    // inter-device trends: exhaustive per-device size combinations, M <= 4
    std::vector<std::pair<int, int>> combos;
    for (int t = 1; t <= 3; ++t)
        for (int r = 0; r <= 3; ++r) combos.push_back({t, r});
    for (auto first : combos) {
        for (auto second : combos) {
            std::vector<std::pair<int, int>> sizes = {first, second};
            for (int extra = 0; extra < 2 && c.ok; ++extra) {
                auto inv = sized_inventory(10, sizes);
                std::set<int> uni;
                for (const auto& d : inv.devices) {
                    uni.insert(d.targets.begin(), d.targets.end());
                    uni.insert(d.redundants.begin(), d.redundants.end());
                }
                for (std::size_t i = 0; i < inv.devices.size(); ++i) {
                    double pl = metrics::inter_device_pl(inv, static_cast<int>(i));
                    double bound = static_cast<double>(inv.devices[i].targets.size()) / 10.0;
                    c.expect(pl >= bound - 1e-15, "pl below its |Lt|/L floor");
                    if (uni.size() == 10)
                        c.expect(std::abs(pl - bound) < 1e-15, "full union not at the floor");
                    else
                        c.expect(pl > bound, "partial union at the floor");

                    auto grown = inv;
                    for (int l = 0; l < 10; ++l)
                        if (!grown.devices.back().targets.count(l)) {
                            grown.devices.back().redundants.insert(l);
                            break;
                        }
                    c.expect(metrics::inter_device_pl(grown, static_cast<int>(i)) <= pl + 1e-15,
                             "pl increased when the union grew");

                    auto extended = inv;
                    extended.devices.push_back({{9}, {0}});
                    c.expect(metrics::inter_device_pl(extended, static_cast<int>(i)) <= pl + 1e-15,
                             "pl increased when a device joined");
                }
                if (sizes.size() < 4) sizes.push_back({1 + extra, extra});
            }
        }
    }
    return c.ok;
}

// ---------------------------------------------------------------- criterion 6

bool iid_restoration(Check& c) {
    auto cfg = trend_config(9);
    auto corpus = data::generate_corpus(cfg.num_labels, cfg.per_label, cfg.feature_dim,
                                        rng::mix(cfg.seed, 0xC0u));
    auto [train, test] = data::split_corpus(corpus, cfg.test_fraction, rng::mix(cfg.seed, 0x7Eu));
    data::PartitionSpec ps;
    ps.num_devices = cfg.devices;
    ps.per_device_draw = cfg.per_device_draw;
    ps.num_target_labels = cfg.num_target_labels;
    ps.target_keep_count = cfg.target_keep_count;
    ps.seed = rng::mix(cfg.seed, 0x9Au);
    auto devices = data::partition_non_iid(train, ps);

    std::vector<faug::SeedUpload> uploads;
    for (const auto& ds : devices) {
        auto targets = faug::detect_target_labels(ds, cfg.threshold_ratio);
        auto plan = faug::build_seed_upload(ds, targets, cfg.redundant_count, cfg.seeds_per_label,
                                            rng::mix(cfg.seed, 0x5EU));
        uploads.push_back(std::move(plan.upload));
    }
    auto seed_corpus = faug::server_oversample(uploads, cfg.oversample_factor, cfg.jitter,
                                               cfg.num_labels, rng::mix(cfg.seed, 0x05u));
    faug::GeneratorConfig gcfg;
    gcfg.kind = faug::BackendKind::OracleGaussian;
    gcfg.seed = rng::mix(cfg.seed, 0x6Eu);
    auto gen = faug::train_generator(seed_corpus, gcfg);

    for (const auto& ds : devices) {
        c.expect(!data::is_iid(ds, 0.05), "pre-augmentation dataset unexpectedly IID");
        auto out = faug::augment_to_iid(ds, gen, 0.05, rng::mix(cfg.seed, 0xA0u));
        c.expect(data::is_iid(out, 0.05),
                 "device " + std::to_string(ds.device_id) + " not IID after augmentation");
        bool preserved = out.samples.size() >= ds.samples.size();
        for (std::size_t i = 0; i < ds.samples.size() && preserved; ++i)
            preserved = out.samples[i].features == ds.samples[i].features &&
                        out.samples[i].label == ds.samples[i].label &&
                        !out.samples[i].synthetic;
        c.expect(preserved, "real samples not preserved by identity");
        for (std::size_t i = ds.samples.size(); i < out.samples.size(); ++i)
            if (!out.samples[i].synthetic) {
                c.expect(false, "generated sample not flagged synthetic");
                break;
            }
    }
    return c.ok;
}

// ---------------------------------------------------------------- criterion 7

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool determinism(Check& c) {
    for (auto arm : {harness::Arm::FdFaug, harness::Arm::Fl}) {
        auto cfg = trend_config(4);
        cfg.arm = arm;
        cfg.rounds = 3;
        cfg.local_steps = 25;
        cfg.batch_size = 16;

        std::vector<std::pair<std::string, std::string>> outputs;
        int variant = 0;
        for (int workers : {1, 4, 1}) {
            auto dir = fs::temp_directory_path() /
                       ("fdsim_acc7_" + harness::arm_name(arm) + "_" + std::to_string(variant++));
            fs::remove_all(dir);
            cfg.workers = workers;
            cfg.out_dir = dir.string();
            (void)harness::run_experiment(cfg);
            outputs.emplace_back(slurp(dir / "summary.csv"), slurp(dir / "log.jsonl"));
            fs::remove_all(dir);
        }
        c.expect(!outputs[0].first.empty() && !outputs[0].second.empty(),
                 harness::arm_name(arm) + ": empty outputs");
        c.expect(outputs[0] == outputs[1],
                 harness::arm_name(arm) + ": workers 1 vs 4 outputs differ");
        c.expect(outputs[0] == outputs[2], harness::arm_name(arm) + ": reruns differ");
    }
    return c.ok;
}

// ---------------------------------------------------------------- criterion 8

bool cgan_sanity(Check& c) {
    auto g = rng::make_stream(42, {});
    data::Corpus toy;
    toy.num_labels = 2;
    for (int label = 0; label < 2; ++label) {
        double center = label == 0 ? 0.3 : 0.7;
        for (int i = 0; i < 300; ++i) {
            nn::Sample s;
            s.label = label;
            s.features = {std::min(1.0, std::max(0.0, center + 0.05 * rng::normal(g))),
                          std::min(1.0, std::max(0.0, center + 0.05 * rng::normal(g)))};
            toy.samples.push_back(std::move(s));
        }
    }

    // probe trained on real data is the oracle
    data::DeviceDataset all;
    all.device_id = 0;
    all.num_labels = 2;
    all.samples = toy.samples;
    fd::FdConfig pc;
    pc.local_steps = 100;
    pc.batch_size = 20;
    pc.eta = 0.1;
    pc.seed = 7;
    pc.hidden_dims = {16};
    auto probe = fd::make_device_state(0, 2, 2, pc);
    (void)fd::local_training_phase(probe, all, pc, 1);
    double real_acc = nn::evaluate_accuracy(probe.weights, toy.samples);
    c.expect(real_acc >= 0.95, "probe under-trained on real data");

    faug::GeneratorConfig gc;
    gc.kind = faug::BackendKind::ConditionalGan;
    gc.seed = 11;
    gc.noise_dim = 4;
    gc.hidden_dims = {24, 24};
    gc.steps = 2000;
    gc.batch_size = 16;
    gc.eta_generator = 0.05;
    gc.eta_discriminator = 0.05;
    auto gen = faug::train_generator(toy, gc);

    auto gs = rng::make_stream(3, {});
    int correct = 0, total = 0;
    for (int label = 0; label < 2; ++label)
        for (int i = 0; i < 200; ++i) {
            auto s = gen.sample(label, gs);
            if (nn::argmax(nn::forward(probe.weights, s.features).probs) == label) ++correct;
            ++total;
        }
    double acc = static_cast<double>(correct) / total;
    c.detail << "probe on generated: " << acc;
    c.expect(acc >= 0.80, "conditional samples classified at " + std::to_string(acc));
    return c.ok;
}

} // namespace

int main() {
    struct Criterion {
        int number;
        std::string name;
        std::function<bool(Check&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "cost table reproduction (bit-exact)", cost_table_reproduction},
        {2, "leave-one-out ensembling oracle equivalence", ensembling_oracle},
        {3, "combined-loss gradient vs central finite differences", gradient_correctness},
        {4, "accuracy trend properties (majority over 5 seeds)", accuracy_trends},
        {5, "privacy-leakage formulas and trends", pl_formulas},
        {6, "IID restoration via augmentation", iid_restoration},
        {7, "byte-identical reruns across worker counts", determinism},
        {8, "conditional GAN sanity via real-data probe", cgan_sanity},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        Check check;
        bool ok = false;
        std::string error;
        auto start = std::chrono::steady_clock::now();
        try {
            ok = criterion.run(check);
        } catch (const std::exception& e) {
            ok = false;
            error = e.what();
        }
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
        std::ostringstream line;
        line << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion.number << ": "
             << criterion.name;
        std::string detail = check.detail.str();
        if (!error.empty()) detail = "exception: " + error;
        if (!detail.empty()) line << " (" << detail << ")";
        line << " [" << ms << " ms]";
        std::cout << line.str() << std::endl;
        if (!ok) ++failures;
    }
    if (failures == 0) std::cout << "acceptance: all " << criteria.size() << " criteria passed"
                                 << std::endl;
    else std::cout << "acceptance: " << failures << " criteria FAILED" << std::endl;
    return failures;
}
