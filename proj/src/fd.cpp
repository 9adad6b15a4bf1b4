#include "fdsim/fd.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

#include "fdsim/rng.hpp"

namespace fdsim::fd {

void FdConfig::validate() const {
    if (local_steps <= 0) throw ConfigError("fd: local_steps must be positive");
    if (global_rounds < 0) throw ConfigError("fd: global_rounds must be >= 0");
    if (batch_size <= 0) throw ConfigError("fd: batch_size must be positive");
    if (gamma < 0.0) throw ConfigError("fd: gamma must be >= 0");
    if (eta <= 0.0) throw ConfigError("fd: eta must be positive");
}

void DeviceState::reset_accumulators() {
    logit_acc.assign(num_labels, std::vector<double>(num_labels, 0.0));
    counts.assign(num_labels, 0);
}

DeviceState make_device_state(int device_id, int num_labels, int feature_dim,
                              const FdConfig& cfg) {
    DeviceState st;
    st.device_id = device_id;
    st.num_labels = num_labels;
    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(feature_dim));
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(static_cast<std::size_t>(num_labels));
    st.weights = nn::init_weights(dims, rng::mix(cfg.seed, 0x77E16u + device_id));
    st.reset_accumulators();
    st.global_avgs.assign(num_labels, std::nullopt);
    return st;
}

int LocalReport::labels_reported() const {
    int n = 0;
    for (const auto& e : per_label)
        if (e) ++n;
    return n;
}

namespace detail {

// Shared per-sample SGD loop: `steps` batches of `batch_size` samples, one
// update each. FD passes teachers and an accumulating state; FL passes
// neither (the gamma path is then inert).
void local_sgd_loop(nn::ModelWeights& weights, const data::DeviceDataset& ds, int steps,
                    int batch_size, double eta, double gamma,
                    const std::vector<std::optional<nn::LogitVector>>* teachers,
                    DeviceState* accum, std::mt19937_64& g, int device_id) {
    if (ds.samples.empty())
        throw ProtocolError("device " + std::to_string(device_id) + " has an empty dataset");
    nn::GradWorkspace ws;
    long update_idx = 0;
    for (int step = 0; step < steps; ++step) {
        for (int j = 0; j < batch_size; ++j, ++update_idx) {
            const nn::Sample& b = ds.samples[rng::uniform_index(g, ds.samples.size())];
            const nn::LogitVector* teacher = nullptr;
            if (teachers) {
                const auto& t = (*teachers)[static_cast<std::size_t>(b.label)];
                if (t) teacher = &*t;
            }
            nn::fd_loss_gradient_into(weights, b, teacher, gamma, ws);
            try {
                nn::sgd_step_inplace(weights, ws.grad, eta);
            } catch (const DivergenceError&) {
                std::ostringstream msg;
                msg << "divergence: non-finite gradient on device " << device_id
                    << " at local update " << update_idx;
                throw DivergenceError(device_id, update_idx, msg.str());
            }
            if (!weights.finite()) {
                std::ostringstream msg;
                msg << "divergence: non-finite weights on device " << device_id
                    << " at local update " << update_idx;
                throw DivergenceError(device_id, update_idx, msg.str());
            }
            if (accum) {
                // Post-update output is what gets averaged and shared.
                nn::forward_into(weights, b.features, ws);
                auto& acc = accum->logit_acc[static_cast<std::size_t>(b.label)];
                for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += ws.output.probs[l];
                ++accum->counts[static_cast<std::size_t>(b.label)];
            }
        }
    }
}

} // namespace detail

LocalReport local_training_phase(DeviceState& state, const data::DeviceDataset& ds,
                                 const FdConfig& cfg, int round) {
    cfg.validate();
    state.reset_accumulators();
    auto g = rng::make_stream(cfg.seed, {0xFDu, static_cast<std::uint64_t>(state.device_id),
                                         static_cast<std::uint64_t>(round)});
    detail::local_sgd_loop(state.weights, ds, cfg.local_steps, cfg.batch_size, cfg.eta, cfg.gamma,
                           &state.global_avgs, &state, g, state.device_id);

    LocalReport report;
    report.device_id = state.device_id;
    report.round = round;
    report.per_label.assign(state.num_labels, std::nullopt);
    for (int l = 0; l < state.num_labels; ++l) {
        long c = state.counts[static_cast<std::size_t>(l)];
        if (c == 0) continue;
        nn::LogitVector avg;
        avg.probs.resize(state.num_labels);
        const auto& acc = state.logit_acc[static_cast<std::size_t>(l)];
        for (int k = 0; k < state.num_labels; ++k)
            avg.probs[static_cast<std::size_t>(k)] =
                acc[static_cast<std::size_t>(k)] / static_cast<double>(c);
        report.per_label[static_cast<std::size_t>(l)] = std::move(avg);
    }
    return report;
}

std::map<int, std::vector<std::optional<nn::LogitVector>>> global_ensembling_phase(
    const std::vector<LocalReport>& reports) {
    if (reports.size() < 2)
        throw ProtocolError("global_ensembling_phase: need at least 2 reports, got " +
                            std::to_string(reports.size()));
    const std::size_t L = reports.front().per_label.size();
    for (const auto& r : reports)
        if (r.per_label.size() != L)
            throw ProtocolError("global_ensembling_phase: report label-count mismatch");

    // Aggregation iterates reports sorted by device id so results never
    // depend on arrival order.
    std::vector<const LocalReport*> sorted;
    sorted.reserve(reports.size());
    for (const auto& r : reports) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const LocalReport* a, const LocalReport* b) { return a->device_id < b->device_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->device_id == sorted[i - 1]->device_id)
            throw ProtocolError("global_ensembling_phase: duplicate device id " +
                                std::to_string(sorted[i]->device_id));

    std::vector<std::vector<double>> sums(L);
    std::vector<int> reporting(L, 0);
    for (const LocalReport* r : sorted) {
        for (std::size_t l = 0; l < L; ++l) {
            const auto& e = r->per_label[l];
            if (!e) continue;
            if (sums[l].empty()) sums[l].assign(L, 0.0);
            for (std::size_t k = 0; k < L; ++k) sums[l][k] += e->probs[k];
            ++reporting[l];
        }
    }

    std::map<int, std::vector<std::optional<nn::LogitVector>>> out;
    for (const LocalReport* r : sorted) {
        auto& teachers = out[r->device_id];
        teachers.assign(L, std::nullopt);
        for (std::size_t l = 0; l < L; ++l) {
            const bool self_reported = r->per_label[l].has_value();
            const int denom = reporting[l] - (self_reported ? 1 : 0);
            if (denom <= 0) continue;
            nn::LogitVector avg;
            avg.probs.resize(L);
            for (std::size_t k = 0; k < L; ++k) {
                double sum = sums[l][k];
                if (self_reported) sum -= r->per_label[l]->probs[k];
                avg.probs[k] = sum / static_cast<double>(denom);
            }
            teachers[l] = std::move(avg);
        }
    }
    return out;
}

namespace {

// Fan per-device work out to `workers` threads; device i's result lands in
// slot i, so aggregation order is fixed regardless of scheduling.
void parallel_devices(int num_devices, int workers,
                      const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, num_devices));
    if (workers == 1) {
        for (int i = 0; i < num_devices; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_devices));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < num_devices; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e); // lowest device id wins
}

} // namespace

void run_fd(const std::vector<data::DeviceDataset>& datasets, const FdConfig& cfg,
            const data::Corpus& test_set, metrics::CostLedger& ledger, TrainingLog& log,
            const LedgerScope& scope, int workers,
            std::vector<nn::ModelWeights>* final_models) {
    cfg.validate();
    const int M = static_cast<int>(datasets.size());
    if (M < 2) throw ProtocolError("run_fd: need at least 2 devices");
    for (const auto& ds : datasets)
        if (ds.samples.empty())
            throw ProtocolError("run_fd: device " + std::to_string(ds.device_id) +
                                " has no samples");
    if (scope.reference_device < 0 || scope.reference_device >= M)
        throw ConfigError("run_fd: reference_device out of range");
    const int L = datasets.front().num_labels;
    const int feature_dim = static_cast<int>(datasets.front().samples.front().features.size());

    std::vector<DeviceState> states;
    states.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) states.push_back(make_device_state(i, L, feature_dim, cfg));

    std::vector<std::uint64_t> device_scalars(static_cast<std::size_t>(M), 0);

    for (int round = 1; round <= cfg.global_rounds; ++round) {
        std::vector<LocalReport> reports(static_cast<std::size_t>(M));
        std::vector<double> accuracy(static_cast<std::size_t>(M), 0.0);
        parallel_devices(M, workers, [&](int i) {
            auto idx = static_cast<std::size_t>(i);
            reports[idx] = local_training_phase(states[idx], datasets[idx], cfg, round);
            accuracy[idx] = nn::evaluate_accuracy(states[idx].weights, test_set.samples);
        });

        auto teachers = global_ensembling_phase(reports);
        for (auto& st : states) st.global_avgs = teachers.at(st.device_id);

        for (int i = 0; i < M; ++i) {
            auto idx = static_cast<std::size_t>(i);
            const int up = reports[idx].labels_reported();
            int down = 0;
            for (const auto& t : states[idx].global_avgs)
                if (t) ++down;
            device_scalars[idx] +=
                static_cast<std::uint64_t>(up + down) * static_cast<std::uint64_t>(L);
            if (scope.aggregate || i == scope.reference_device)
                metrics::charge_fd_round(ledger, 1, static_cast<std::uint64_t>(up),
                                         static_cast<std::uint64_t>(down),
                                         static_cast<std::uint64_t>(L));

            RoundRecord rec;
            rec.arm = "fd";
            rec.round = round;
            rec.device_id = i;
            rec.test_accuracy = accuracy[idx];
            rec.labels_reported = up;
            rec.cumulative_logit_scalars = device_scalars[idx];
            log.records.push_back(std::move(rec));
        }
    }

    if (final_models) {
        final_models->clear();
        for (const auto& st : states) final_models->push_back(st.weights);
    }
}

} // namespace fdsim::fd
