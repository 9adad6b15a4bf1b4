#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <sstream>

#include "fdsim/data.hpp"
#include "fdsim/fl.hpp"
#include "fdsim/rng.hpp"

using namespace fdsim;

namespace {

nn::ModelWeights scalar_model(double w, double b = 0.0) {
    auto m = nn::zero_weights({1, 1});
    m.layers[0].w[0] = w;
    m.layers[0].b[0] = b;
    return m;
}

nn::ModelWeights random_model(std::mt19937_64& g, const std::vector<std::size_t>& dims = {3, 4, 2}) {
    auto m = nn::zero_weights(dims);
    for (auto& l : m.layers) {
        for (double& v : l.w) v = rng::uniform(g, -1.0, 1.0);
        for (double& v : l.b) v = rng::uniform(g, -1.0, 1.0);
    }
    return m;
}

} // namespace

TEST_CASE("averaging identical models returns the same model") {
    auto g = rng::make_stream(201, {});
    auto m = random_model(g);
    auto avg = nn::flatten(fl::fl_average({m, m, m}));
    auto orig = nn::flatten(m);
    for (std::size_t i = 0; i < orig.size(); ++i)
        CHECK(avg[i] == doctest::Approx(orig[i]).epsilon(1e-15)); // (3m)/3 rounds once
}

TEST_CASE("averaging w and -w gives the zero model") {
    auto g = rng::make_stream(202, {});
    auto m = random_model(g);
    auto neg = m;
    for (auto& l : neg.layers) {
        for (double& v : l.w) v = -v;
        for (double& v : l.b) v = -v;
    }
    for (double v : nn::flatten(fl::fl_average({m, neg}))) CHECK(v == 0.0);
}

TEST_CASE("three scalar models average to their arithmetic mean") {
    auto avg = fl::fl_average({scalar_model(1.0), scalar_model(2.0), scalar_model(6.0)});
    CHECK(avg.layers[0].w[0] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("averaging matches the brute-force per-element oracle exactly") {
    auto g = rng::make_stream(203, {});
    std::vector<nn::ModelWeights> models;
    for (int i = 0; i < 5; ++i) models.push_back(random_model(g));
    auto avg = nn::flatten(fl::fl_average(models));

    std::vector<double> oracle(avg.size(), 0.0);
    for (const auto& m : models) {
        auto f = nn::flatten(m);
        for (std::size_t i = 0; i < f.size(); ++i) oracle[i] += f[i];
    }
    for (double& v : oracle) v /= 5.0;
    CHECK(avg == oracle); // same summation order: bit-exact
}

TEST_CASE("averaging is permutation-invariant") {
    auto g = rng::make_stream(204, {});
    std::vector<nn::ModelWeights> models;
    for (int i = 0; i < 4; ++i) models.push_back(random_model(g));
    auto base = nn::flatten(fl::fl_average(models));
    std::reverse(models.begin(), models.end());
    auto reversed = nn::flatten(fl::fl_average(models));
    REQUIRE(base.size() == reversed.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(base[i] == doctest::Approx(reversed[i]).epsilon(1e-12));
}

TEST_CASE("perturbing one model shifts the average by delta over M") {
    auto g = rng::make_stream(205, {});
    std::vector<nn::ModelWeights> models;
    for (int i = 0; i < 4; ++i) models.push_back(random_model(g));
    auto before = nn::flatten(fl::fl_average(models));
    const double delta = 0.6;
    models[2].layers[1].w[3] += delta;
    auto after = nn::flatten(fl::fl_average(models));
    for (std::size_t i = 0; i < before.size(); ++i) {
        double expected_shift = 0.0;
        // locate the perturbed coordinate in flat order
        auto probe = nn::zero_weights({3, 4, 2});
        probe.layers[1].w[3] = delta;
        expected_shift = nn::flatten(probe)[i] / 4.0;
        CHECK(after[i] - before[i] == doctest::Approx(expected_shift).epsilon(1e-12));
    }
}

TEST_CASE("dimension-incongruent models are rejected") {
    auto g = rng::make_stream(206, {});
    CHECK_THROWS_AS(fl::fl_average({random_model(g, {3, 4, 2}), random_model(g, {3, 5, 2})}),
                    DimensionError);
    CHECK_THROWS_AS(fl::fl_average({}), ProtocolError);
}

TEST_CASE("zero local steps leave the weights untouched") {
    auto g = rng::make_stream(207, {});
    auto w = random_model(g, {4, 5, 3});
    data::DeviceDataset ds;
    ds.num_labels = 3;
    nn::Sample s;
    s.features = {0.1, 0.2, 0.3, 0.4};
    s.label = 1;
    ds.samples.push_back(s);
    fl::FlConfig cfg;
    cfg.local_steps = 0;
    auto out = fl::fl_local_phase(w, ds, cfg, 1);
    CHECK(nn::flatten(out) == nn::flatten(w));
}

TEST_CASE("fl local phase is deterministic and replays a single step") {
    auto g = rng::make_stream(208, {});
    auto w = random_model(g, {2, 4, 3});
    data::DeviceDataset ds;
    ds.device_id = 5;
    ds.num_labels = 3;
    nn::Sample s;
    s.features = {0.3, 0.8};
    s.label = 2;
    ds.samples.push_back(s);

    fl::FlConfig cfg;
    cfg.local_steps = 1;
    cfg.batch_size = 1;
    cfg.eta = 0.2;
    cfg.seed = 99;

    auto a = fl::fl_local_phase(w, ds, cfg, 7);
    auto b = fl::fl_local_phase(w, ds, cfg, 7);
    CHECK(nn::flatten(a) == nn::flatten(b));

    auto grad = nn::fd_loss_gradient(w, s, std::nullopt, 0.0);
    auto manual = nn::sgd_step(w, grad, cfg.eta);
    CHECK(nn::flatten(a) == nn::flatten(manual));
}

TEST_CASE("run_fl charges the declared parameter count") {
    auto corpus = data::generate_corpus(3, 60, 4, 44);
    auto [train, test] = data::split_corpus(corpus, 0.2, 1);
    data::PartitionSpec spec;
    spec.num_devices = 2;
    spec.per_device_draw = 100;
    spec.num_target_labels = 0;
    spec.seed = 3;
    auto devices = data::partition_non_iid(train, spec);

    fl::FlConfig cfg;
    cfg.local_steps = 2;
    cfg.batch_size = 2;
    cfg.global_rounds = 16;
    cfg.seed = 10;
    cfg.hidden_dims = {4};
    cfg.declared_param_count = 1'199'648;

    SUBCASE("per-device scope reproduces the table row") {
        metrics::CostLedger ledger;
        TrainingLog log;
        fl::run_fl(devices, cfg, test, ledger, log);
        CHECK(ledger.model_parameters == 38'388'736);
        CHECK(ledger.total_bits() == 1'228'439'552);
        CHECK(log.records.back().cumulative_parameters == 38'388'736);
    }
    SUBCASE("aggregate scope scales by M") {
        metrics::CostLedger ledger;
        TrainingLog log;
        LedgerScope scope;
        scope.aggregate = true;
        fl::run_fl(devices, cfg, test, ledger, log, scope);
        CHECK(ledger.model_parameters == 2ULL * 38'388'736);
    }
    SUBCASE("zero rounds zero ledger") {
        metrics::CostLedger ledger;
        TrainingLog log;
        cfg.global_rounds = 0;
        fl::run_fl(devices, cfg, test, ledger, log);
        CHECK(ledger.total_bits() == 0);
        CHECK(log.records.empty());
    }
    SUBCASE("declared count equal to the true desk model size") {
        metrics::CostLedger ledger;
        TrainingLog log;
        auto true_size = nn::init_weights({4, 4, 3}, 0).param_count();
        cfg.declared_param_count = true_size;
        cfg.global_rounds = 3;
        fl::run_fl(devices, cfg, test, ledger, log);
        CHECK(ledger.model_parameters == 2ULL * 3ULL * true_size);
    }
}

TEST_CASE("run_fl is deterministic and worker-count independent") {
    auto corpus = data::generate_corpus(4, 50, 5, 17);
    auto [train, test] = data::split_corpus(corpus, 0.2, 2);
    data::PartitionSpec spec;
    spec.num_devices = 4;
    spec.per_device_draw = 80;
    spec.num_target_labels = 1;
    spec.target_keep_count = 2;
    spec.seed = 5;
    auto devices = data::partition_non_iid(train, spec);

    fl::FlConfig cfg;
    cfg.local_steps = 4;
    cfg.batch_size = 3;
    cfg.global_rounds = 3;
    cfg.seed = 12;
    cfg.hidden_dims = {5};

    auto run = [&](int workers) {
        metrics::CostLedger ledger;
        TrainingLog log;
        fl::run_fl(devices, cfg, test, ledger, log, {}, workers);
        std::ostringstream s;
        log.write_jsonl(s);
        return s.str();
    };
    CHECK(run(1) == run(4));
}
