#include "fdsim/fl.hpp"

#include <atomic>
#include <exception>
#include <thread>

#include "fdsim/fd.hpp"
#include "fdsim/rng.hpp"

namespace fdsim::fl {

void FlConfig::validate() const {
    if (local_steps < 0) throw ConfigError("fl: local_steps must be >= 0");
    if (global_rounds < 0) throw ConfigError("fl: global_rounds must be >= 0");
    if (batch_size <= 0) throw ConfigError("fl: batch_size must be positive");
    if (eta <= 0.0) throw ConfigError("fl: eta must be positive");
    if (declared_param_count == 0) throw ConfigError("fl: declared_param_count must be positive");
}

nn::ModelWeights fl_local_phase(const nn::ModelWeights& w, const data::DeviceDataset& ds,
                                const FlConfig& cfg, int round) {
    cfg.validate();
    nn::ModelWeights out = w;
    if (cfg.local_steps == 0) return out;
    auto g = rng::make_stream(cfg.seed, {0xFDu, static_cast<std::uint64_t>(ds.device_id),
                                         static_cast<std::uint64_t>(round)});
    fd::detail::local_sgd_loop(out, ds, cfg.local_steps, cfg.batch_size, cfg.eta,
                               /*gamma=*/0.0, nullptr, nullptr, g, ds.device_id);
    return out;
}

nn::ModelWeights fl_average(const std::vector<nn::ModelWeights>& models) {
    if (models.empty()) throw ProtocolError("fl_average: no models");
    nn::ModelWeights avg = models.front();
    for (std::size_t m = 1; m < models.size(); ++m) {
        const nn::ModelWeights& w = models[m];
        if (w.dims != avg.dims)
            throw DimensionError("fl_average: model " + std::to_string(m) +
                                 " is not dimension-congruent");
        for (std::size_t t = 0; t < avg.layers.size(); ++t) {
            for (std::size_t i = 0; i < avg.layers[t].w.size(); ++i)
                avg.layers[t].w[i] += w.layers[t].w[i];
            for (std::size_t i = 0; i < avg.layers[t].b.size(); ++i)
                avg.layers[t].b[i] += w.layers[t].b[i];
        }
    }
    const double count = static_cast<double>(models.size());
    for (auto& l : avg.layers) {
        for (double& v : l.w) v /= count;
        for (double& v : l.b) v /= count;
    }
    return avg;
}

void run_fl(const std::vector<data::DeviceDataset>& datasets, const FlConfig& cfg,
            const data::Corpus& test_set, metrics::CostLedger& ledger, TrainingLog& log,
            const LedgerScope& scope, int workers, nn::ModelWeights* final_model) {
    cfg.validate();
    const int M = static_cast<int>(datasets.size());
    if (M < 2) throw ProtocolError("run_fl: need at least 2 devices");
    for (const auto& ds : datasets)
        if (ds.samples.empty())
            throw ProtocolError("run_fl: device " + std::to_string(ds.device_id) +
                                " has no samples");
    if (scope.reference_device < 0 || scope.reference_device >= M)
        throw ConfigError("run_fl: reference_device out of range");
    const int L = datasets.front().num_labels;
    const int feature_dim = static_cast<int>(datasets.front().samples.front().features.size());

    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(feature_dim));
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(static_cast<std::size_t>(L));
    nn::ModelWeights global = nn::init_weights(dims, rng::mix(cfg.seed, 0xF1u));

    std::vector<std::uint64_t> device_params(static_cast<std::size_t>(M), 0);

    for (int round = 1; round <= cfg.global_rounds; ++round) {
        std::vector<nn::ModelWeights> locals(static_cast<std::size_t>(M));
        {
            int n_workers = std::max(1, std::min(workers, M));
            std::atomic<int> next{0};
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(M));
            auto body = [&](int i) {
                locals[static_cast<std::size_t>(i)] =
                    fl_local_phase(global, datasets[static_cast<std::size_t>(i)], cfg, round);
            };
            if (n_workers == 1) {
                for (int i = 0; i < M; ++i) body(i);
            } else {
                std::vector<std::thread> pool;
                for (int t = 0; t < n_workers; ++t)
                    pool.emplace_back([&] {
                        for (int i = next.fetch_add(1); i < M; i = next.fetch_add(1)) {
                            try {
                                body(i);
                            } catch (...) {
                                errors[static_cast<std::size_t>(i)] = std::current_exception();
                            }
                        }
                    });
                for (auto& th : pool) th.join();
                for (const auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }
        }

        global = fl_average(locals);
        const double acc = nn::evaluate_accuracy(global, test_set.samples);

        for (int i = 0; i < M; ++i) {
            device_params[static_cast<std::size_t>(i)] += 2 * cfg.declared_param_count;
            if (scope.aggregate || i == scope.reference_device)
                metrics::charge_fl_round(ledger, 1, cfg.declared_param_count);

            RoundRecord rec;
            rec.arm = "fl";
            rec.round = round;
            rec.device_id = i;
            rec.test_accuracy = acc;
            rec.cumulative_parameters = device_params[static_cast<std::size_t>(i)];
            log.records.push_back(std::move(rec));
        }
    }

    if (final_model) *final_model = global;
}

} // namespace fdsim::fl
