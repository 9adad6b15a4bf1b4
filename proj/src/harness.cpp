#include "fdsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fdsim/fd.hpp"
#include "fdsim/fl.hpp"
#include "fdsim/rng.hpp"

namespace fdsim::harness {

namespace fs = std::filesystem;

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::Fd: return "fd";
        case Arm::FdFaug: return "fd-faug";
        case Arm::Fl: return "fl";
        case Arm::FlFaug: return "fl-faug";
    }
    return "?";
}

Arm parse_arm(const std::string& name) {
    if (name == "fd") return Arm::Fd;
    if (name == "fd-faug") return Arm::FdFaug;
    if (name == "fl") return Arm::Fl;
    if (name == "fl-faug") return Arm::FlFaug;
    throw ConfigError("run.arm: unknown arm '" + name + "' (want fd, fd-faug, fl, fl-faug)");
}

void ExperimentConfig::validate() const {
    auto positive = [](long v, const std::string& path) {
        if (v <= 0) throw ConfigError(path + ": must be positive");
    };
    if (num_labels < 2) throw ConfigError("corpus.num_labels: need at least 2 labels");
    positive(per_label, "corpus.per_label");
    if (feature_dim < 2) throw ConfigError("corpus.feature_dim: need at least 2 dims");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("corpus.test_fraction: must be in [0, 1)");
    if (devices < 2) throw ConfigError("partition.devices: need at least 2 devices");
    positive(per_device_draw, "partition.per_device_draw");
    if (num_target_labels < 0 || num_target_labels >= num_labels)
        throw ConfigError("partition.num_target_labels: must be in [0, num_labels)");
    positive(target_keep_count, "partition.target_keep_count");
    if (rounds < 0) throw ConfigError("run.rounds: must be >= 0");
    positive(local_steps, "run.local_steps");
    positive(batch_size, "run.batch_size");
    if (eta <= 0.0) throw ConfigError("run.eta: must be positive");
    if (gamma < 0.0) throw ConfigError("run.gamma: must be >= 0");
    positive(workers, "run.workers");
    positive(repeats, "run.repeats");
    for (std::size_t h : hidden_dims)
        if (h == 0) throw ConfigError("run.hidden_dims: zero-sized hidden layer");
    if (uses_faug()) {
        if (threshold_ratio <= 0.0 || threshold_ratio >= 1.0)
            throw ConfigError("faug.threshold_ratio: must be in (0, 1)");
        if (redundant_count < 0) throw ConfigError("faug.redundant_count: must be >= 0");
        if (redundant_count > num_labels - num_target_labels)
            throw ConfigError("faug.redundant_count: exceeds num_labels - num_target_labels");
        positive(seeds_per_label, "faug.seeds_per_label");
        if (iid_tolerance < 0.0) throw ConfigError("faug.tolerance: must be >= 0");
        positive(oversample_factor, "faug.oversample_factor");
        if (jitter < 0.0) throw ConfigError("faug.jitter: must be >= 0");
        positive(gan_steps, "faug.gan_steps");
        positive(gan_noise_dim, "faug.gan_noise_dim");
        positive(gan_batch_size, "faug.gan_batch_size");
        if (gan_eta <= 0.0) throw ConfigError("faug.gan_eta: must be positive");
    }
    positive(static_cast<long>(declared_model_params), "accounting.model_parameters");
    positive(static_cast<long>(declared_generator_params), "accounting.generator_parameters");
    positive(static_cast<long>(pixels_per_sample), "accounting.pixels_per_sample");
    if (reference_device < 0 || reference_device >= devices)
        throw ConfigError("accounting.reference_device: must be in [0, devices)");
    if (idx_images.empty() != idx_labels.empty())
        throw ConfigError("corpus.images/corpus.labels: set both or neither");
    if (idx_images.empty()) {
        const long corpus_size = static_cast<long>(num_labels) * per_label;
        const long train_floor =
            corpus_size - static_cast<long>(std::ceil(test_fraction * corpus_size)) - num_labels;
        if (per_device_draw > train_floor)
            throw ConfigError("partition.per_device_draw: exceeds the training split size");
    }
}

namespace {

struct RawConfig {
    // section -> key -> (value, seen)
    std::map<std::string, std::map<std::string, std::string>> values;
    std::string origin;

    std::string path(const std::string& section, const std::string& key) const {
        return origin + ": " + section + "." + key;
    }
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

RawConfig tokenize_config(const std::string& text, const std::string& origin) {
    RawConfig raw;
    raw.origin = origin;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + t + "'");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": key outside of any [section]");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (raw.values[section].count(key))
            throw ConfigError(raw.path(section, key) + ": duplicate key");
        raw.values[section][key] = value;
    }
    return raw;
}

class ConfigReader {
public:
    ConfigReader(RawConfig raw) : raw_(std::move(raw)) {}

    template <typename Fn>
    void take(const std::string& section, const std::string& key, Fn&& apply) {
        auto sit = raw_.values.find(section);
        if (sit == raw_.values.end()) return;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return;
        apply(kit->second, raw_.path(section, key));
        sit->second.erase(kit);
    }

    void reject_unknown() const {
        for (const auto& [section, keys] : raw_.values)
            for (const auto& [key, value] : keys)
                throw ConfigError(raw_.path(section, key) + ": unknown key");
    }

private:
    RawConfig raw_;
};

long parse_long(const std::string& v, const std::string& path) {
    try {
        std::size_t used = 0;
        long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& path) {
    try {
        std::size_t used = 0;
        unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& path) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError(path + ": expected number, got '" + v + "'");
    }
}

std::vector<std::size_t> parse_dims(const std::string& v, const std::string& path) {
    std::vector<std::size_t> dims;
    std::istringstream in(v);
    std::string part;
    while (std::getline(in, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        long d = parse_long(part, path);
        if (d <= 0) throw ConfigError(path + ": layer sizes must be positive");
        dims.push_back(static_cast<std::size_t>(d));
    }
    if (dims.empty()) throw ConfigError(path + ": expected comma-separated layer sizes");
    return dims;
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ConfigReader reader(tokenize_config(text, origin));
    ExperimentConfig cfg;

    auto as_int = [&](int& field) {
        return [&field](const std::string& v, const std::string& p) {
            field = static_cast<int>(parse_long(v, p));
        };
    };
    auto as_u64 = [&](std::uint64_t& field) {
        return [&field](const std::string& v, const std::string& p) { field = parse_u64(v, p); };
    };
    auto as_double = [&](double& field) {
        return [&field](const std::string& v, const std::string& p) { field = parse_double(v, p); };
    };

    reader.take("corpus", "num_labels", as_int(cfg.num_labels));
    reader.take("corpus", "per_label", as_int(cfg.per_label));
    reader.take("corpus", "feature_dim", as_int(cfg.feature_dim));
    reader.take("corpus", "test_fraction", as_double(cfg.test_fraction));
    reader.take("corpus", "images", [&](const std::string& v, const std::string&) {
        cfg.idx_images = v;
    });
    reader.take("corpus", "labels", [&](const std::string& v, const std::string&) {
        cfg.idx_labels = v;
    });

    reader.take("partition", "devices", as_int(cfg.devices));
    reader.take("partition", "per_device_draw", as_int(cfg.per_device_draw));
    reader.take("partition", "num_target_labels", as_int(cfg.num_target_labels));
    reader.take("partition", "target_keep_count", as_int(cfg.target_keep_count));

    reader.take("run", "arm", [&](const std::string& v, const std::string&) {
        cfg.arm = parse_arm(v);
    });
    reader.take("run", "seed", as_u64(cfg.seed));
    reader.take("run", "rounds", as_int(cfg.rounds));
    reader.take("run", "local_steps", as_int(cfg.local_steps));
    reader.take("run", "batch_size", as_int(cfg.batch_size));
    reader.take("run", "eta", as_double(cfg.eta));
    reader.take("run", "gamma", as_double(cfg.gamma));
    reader.take("run", "hidden_dims", [&](const std::string& v, const std::string& p) {
        cfg.hidden_dims = parse_dims(v, p);
    });
    reader.take("run", "workers", as_int(cfg.workers));
    reader.take("run", "repeats", as_int(cfg.repeats));
    reader.take("run", "out_dir", [&](const std::string& v, const std::string&) {
        cfg.out_dir = v;
    });

    reader.take("faug", "threshold_ratio", as_double(cfg.threshold_ratio));
    reader.take("faug", "redundant_count", as_int(cfg.redundant_count));
    reader.take("faug", "seeds_per_label", as_int(cfg.seeds_per_label));
    reader.take("faug", "backend", [&](const std::string& v, const std::string& p) {
        if (v == "oracle-gaussian") cfg.backend = faug::BackendKind::OracleGaussian;
        else if (v == "conditional-gan") cfg.backend = faug::BackendKind::ConditionalGan;
        else throw ConfigError(p + ": unknown backend '" + v +
                               "' (want oracle-gaussian or conditional-gan)");
    });
    reader.take("faug", "tolerance", as_double(cfg.iid_tolerance));
    reader.take("faug", "oversample_factor", as_int(cfg.oversample_factor));
    reader.take("faug", "jitter", as_double(cfg.jitter));
    reader.take("faug", "gan_steps", as_int(cfg.gan_steps));
    reader.take("faug", "gan_noise_dim", as_int(cfg.gan_noise_dim));
    reader.take("faug", "gan_batch_size", as_int(cfg.gan_batch_size));
    reader.take("faug", "gan_eta", as_double(cfg.gan_eta));

    reader.take("accounting", "model_parameters", as_u64(cfg.declared_model_params));
    reader.take("accounting", "generator_parameters", as_u64(cfg.declared_generator_params));
    reader.take("accounting", "pixels_per_sample", as_u64(cfg.pixels_per_sample));
    reader.take("accounting", "scope", [&](const std::string& v, const std::string& p) {
        if (v == "per-device") cfg.aggregate_costs = false;
        else if (v == "aggregate") cfg.aggregate_costs = true;
        else throw ConfigError(p + ": unknown scope '" + v + "' (want per-device or aggregate)");
    });
    reader.take("accounting", "reference_device", as_int(cfg.reference_device));

    reader.reject_unknown();
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str(), path);
}

metrics::CostLedger cost_calculator(Arm arm, int rounds, int num_labels,
                                    std::uint64_t declared_model_params,
                                    std::uint64_t declared_generator_params,
                                    std::uint64_t seed_samples, std::uint64_t pixels_per_sample) {
    if (rounds < 0) throw ConfigError("cost_calculator: rounds must be >= 0");
    metrics::CostLedger ledger;
    const auto L = static_cast<std::uint64_t>(num_labels);
    for (int r = 0; r < rounds; ++r) {
        if (arm == Arm::Fd || arm == Arm::FdFaug) metrics::charge_fd_round(ledger, 1, L, L, L);
        else metrics::charge_fl_round(ledger, 1, declared_model_params);
    }
    if (arm == Arm::FdFaug || arm == Arm::FlFaug)
        metrics::charge_faug(ledger, seed_samples, pixels_per_sample, declared_generator_params);
    return ledger;
}

namespace {

struct SingleRun {
    metrics::CostLedger ledger;
    PlReport pl;
    metrics::LabelInventory inventory;
    std::vector<double> final_accuracy_per_device;
    double mean_final_accuracy = 0.0;
    std::vector<std::vector<double>> per_label_accuracy;
    std::string manifest;
};

// Appends round records to `log` as they complete, so the caller still has
// the partial trace if a divergence aborts the run.
SingleRun run_once(const ExperimentConfig& cfg, std::uint64_t master_seed, TrainingLog& log) {
    SingleRun out;

    data::Corpus corpus = cfg.idx_images.empty()
                              ? data::generate_corpus(cfg.num_labels, cfg.per_label,
                                                      cfg.feature_dim, rng::mix(master_seed, 0xC0u))
                              : data::load_idx_corpus(cfg.idx_images, cfg.idx_labels);
    const int L = corpus.num_labels;
    auto [train, test] = data::split_corpus(corpus, cfg.test_fraction, rng::mix(master_seed, 0x7Eu));

    data::PartitionSpec pspec;
    pspec.num_devices = cfg.devices;
    pspec.per_device_draw = cfg.per_device_draw;
    pspec.num_target_labels = cfg.num_target_labels;
    pspec.target_keep_count = cfg.target_keep_count;
    pspec.seed = rng::mix(master_seed, 0x9Au);
    std::vector<data::DeviceDataset> devices = data::partition_non_iid(train, pspec);
    out.manifest = data::partition_manifest_json(devices, pspec);

    out.inventory.num_labels = L;
    out.inventory.devices.resize(static_cast<std::size_t>(cfg.devices));

    if (cfg.uses_faug()) {
        std::vector<faug::SeedUpload> uploads;
        std::uint64_t ref_samples = 0;
        for (const auto& ds : devices) {
            std::set<int> targets = faug::detect_target_labels(ds, cfg.threshold_ratio);
            faug::SeedPlan plan = faug::build_seed_upload(ds, targets, cfg.redundant_count,
                                                          cfg.seeds_per_label,
                                                          rng::mix(master_seed, 0x5EU));
            auto idx = static_cast<std::size_t>(ds.device_id);
            out.inventory.devices[idx].targets = plan.target_labels;
            out.inventory.devices[idx].redundants = plan.redundant_labels;
            if (ds.device_id == cfg.reference_device)
                ref_samples = plan.upload.samples.size();
            // The server receives the wire form: (device_id, samples) only.
            uploads.push_back(faug::parse_seed_upload(faug::serialize_seed_upload(plan.upload)));
        }

        data::Corpus seed_corpus = faug::server_oversample(uploads, cfg.oversample_factor,
                                                           cfg.jitter, L,
                                                           rng::mix(master_seed, 0x05u));
        faug::GeneratorConfig gcfg;
        gcfg.kind = cfg.backend;
        gcfg.seed = rng::mix(master_seed, 0x6Eu);
        gcfg.declared_param_count = cfg.declared_generator_params;
        gcfg.noise_dim = cfg.gan_noise_dim;
        gcfg.steps = cfg.gan_steps;
        gcfg.batch_size = cfg.gan_batch_size;
        gcfg.eta_generator = cfg.gan_eta;
        gcfg.eta_discriminator = cfg.gan_eta;
        faug::GenerativeBackend gen = faug::train_generator(seed_corpus, gcfg);

        for (auto& ds : devices)
            ds = faug::augment_to_iid(ds, gen, cfg.iid_tolerance, rng::mix(master_seed, 0xA0u));

        if (cfg.aggregate_costs) {
            for (const auto& up : uploads)
                metrics::charge_faug(out.ledger, up.samples.size(), cfg.pixels_per_sample,
                                     cfg.declared_generator_params);
        } else {
            metrics::charge_faug(out.ledger, ref_samples, cfg.pixels_per_sample,
                                 cfg.declared_generator_params);
        }

        out.pl.applicable = true;
        for (int i = 0; i < cfg.devices; ++i) {
            double ds_pl = -1.0, id_pl = -1.0;
            try {
                ds_pl = metrics::device_server_pl(out.inventory, i);
            } catch (const Error&) {
            }
            try {
                id_pl = metrics::inter_device_pl(out.inventory, i);
            } catch (const Error&) {
            }
            out.pl.device_server.push_back(ds_pl);
            out.pl.inter_device.push_back(id_pl);
        }
        out.pl.ref_device_server = out.pl.device_server[static_cast<std::size_t>(cfg.reference_device)];
        out.pl.ref_inter_device = out.pl.inter_device[static_cast<std::size_t>(cfg.reference_device)];
    }

    LedgerScope scope;
    scope.aggregate = cfg.aggregate_costs;
    scope.reference_device = cfg.reference_device;

    std::vector<nn::ModelWeights> final_models;
    if (cfg.arm == Arm::Fd || cfg.arm == Arm::FdFaug) {
        fd::FdConfig fcfg;
        fcfg.local_steps = cfg.local_steps;
        fcfg.global_rounds = cfg.rounds;
        fcfg.batch_size = cfg.batch_size;
        fcfg.gamma = cfg.gamma;
        fcfg.eta = cfg.eta;
        fcfg.seed = rng::mix(master_seed, 0x7Au);
        fcfg.hidden_dims = cfg.hidden_dims;
        fd::run_fd(devices, fcfg, test, out.ledger, log, scope, cfg.workers, &final_models);
    } else {
        fl::FlConfig fcfg;
        fcfg.local_steps = cfg.local_steps;
        fcfg.global_rounds = cfg.rounds;
        fcfg.batch_size = cfg.batch_size;
        fcfg.eta = cfg.eta;
        fcfg.seed = rng::mix(master_seed, 0x7Au);
        fcfg.hidden_dims = cfg.hidden_dims;
        fcfg.declared_param_count = cfg.declared_model_params;
        nn::ModelWeights global;
        fl::run_fl(devices, fcfg, test, out.ledger, log, scope, cfg.workers, &global);
        final_models.assign(static_cast<std::size_t>(cfg.devices), global);
    }

    for (const auto& w : final_models) {
        out.final_accuracy_per_device.push_back(nn::evaluate_accuracy(w, test.samples));
        out.per_label_accuracy.push_back(nn::per_label_accuracy(w, test.samples, L));
    }
    double sum = 0.0;
    for (double a : out.final_accuracy_per_device) sum += a;
    out.mean_final_accuracy =
        out.final_accuracy_per_device.empty()
            ? 0.0
            : sum / static_cast<double>(out.final_accuracy_per_device.size());
    return out;
}

std::string format_fixed(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << v;
    return s.str();
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result) {
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "summary.csv");
        out << summary_csv_header() << "\n" << summary_csv_row(cfg, result) << "\n";
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "log.jsonl");
        result.log.write_jsonl(out);
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "cost.csv");
        out << metrics::cost_csv_header() << "\n"
            << metrics::cost_csv_row(arm_name(cfg.arm), result.ledger) << "\n";
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "per_label_accuracy.csv");
        out << "device_id,label,accuracy\n";
        for (std::size_t i = 0; i < result.per_label_accuracy.size(); ++i)
            for (std::size_t l = 0; l < result.per_label_accuracy[i].size(); ++l) {
                double a = result.per_label_accuracy[i][l];
                out << i << ',' << l << ',' << (a < 0.0 ? "" : format_fixed(a)) << "\n";
            }
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "partition_manifest.json");
        out << result.partition_manifest;
    }
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult result;
    result.run_count = cfg.repeats;

    double acc_sum = 0.0;
    for (int r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t master =
            r == 0 ? cfg.seed : rng::mix(cfg.seed, static_cast<std::uint64_t>(r));
        SingleRun run;
        TrainingLog scratch;
        TrainingLog& log = r == 0 ? result.log : scratch;
        try {
            run = run_once(cfg, master, log);
        } catch (const DivergenceError&) {
            // Flush whatever the canonical run got through before giving up.
            if (r == 0 && !cfg.out_dir.empty()) {
                fs::create_directories(cfg.out_dir);
                std::ofstream out(fs::path(cfg.out_dir) / "log.jsonl");
                result.log.write_jsonl(out);
            }
            throw;
        }
        acc_sum += run.mean_final_accuracy;
        if (r == 0) {
            result.ledger = run.ledger;
            result.pl = std::move(run.pl);
            result.inventory = std::move(run.inventory);
            result.final_accuracy_per_device = std::move(run.final_accuracy_per_device);
            result.per_label_accuracy = std::move(run.per_label_accuracy);
            result.partition_manifest = std::move(run.manifest);
        }
    }
    result.mean_final_accuracy = acc_sum / static_cast<double>(cfg.repeats);

    if (!cfg.out_dir.empty()) write_outputs(cfg, result);
    return result;
}

std::string make_partition_manifest(const ExperimentConfig& cfg) {
    cfg.validate();
    data::Corpus corpus = cfg.idx_images.empty()
                              ? data::generate_corpus(cfg.num_labels, cfg.per_label,
                                                      cfg.feature_dim, rng::mix(cfg.seed, 0xC0u))
                              : data::load_idx_corpus(cfg.idx_images, cfg.idx_labels);
    auto [train, test] = data::split_corpus(corpus, cfg.test_fraction, rng::mix(cfg.seed, 0x7Eu));
    data::PartitionSpec pspec;
    pspec.num_devices = cfg.devices;
    pspec.per_device_draw = cfg.per_device_draw;
    pspec.num_target_labels = cfg.num_target_labels;
    pspec.target_keep_count = cfg.target_keep_count;
    pspec.seed = rng::mix(cfg.seed, 0x9Au);
    auto devices = data::partition_non_iid(train, pspec);
    return data::partition_manifest_json(devices, pspec);
}

std::string summary_csv_header() {
    return "arm,devices,rounds,repeats,seed,mean_final_accuracy,final_accuracy_per_device,"
           "logits,model_parameters,samples,total_bits,device_server_pl,inter_device_pl";
}

std::string summary_csv_row(const ExperimentConfig& cfg, const ExperimentResult& result) {
    std::ostringstream row;
    row << arm_name(cfg.arm) << ',' << cfg.devices << ',' << cfg.rounds << ','
        << result.run_count << ',' << cfg.seed << ',' << format_fixed(result.mean_final_accuracy)
        << ',';
    for (std::size_t i = 0; i < result.final_accuracy_per_device.size(); ++i) {
        if (i) row << ';';
        row << format_fixed(result.final_accuracy_per_device[i]);
    }
    row << ',' << result.ledger.logit_scalars << ',' << result.ledger.model_parameters << ','
        << result.ledger.seed_samples << ',' << result.ledger.total_bits() << ',';
    if (result.pl.applicable && result.pl.ref_device_server >= 0.0)
        row << format_fixed(result.pl.ref_device_server);
    row << ',';
    if (result.pl.applicable && result.pl.ref_inter_device >= 0.0)
        row << format_fixed(result.pl.ref_inter_device);
    return row.str();
}

std::vector<std::string> run_sweep(const ExperimentConfig& base, const std::vector<int>& devices,
                                   const std::vector<int>& redundant_counts,
                                   const std::vector<int>& target_counts) {
    std::vector<int> ms = devices.empty() ? std::vector<int>{base.devices} : devices;
    std::vector<int> rs =
        redundant_counts.empty() ? std::vector<int>{base.redundant_count} : redundant_counts;
    std::vector<int> ts =
        target_counts.empty() ? std::vector<int>{base.num_target_labels} : target_counts;

    std::vector<std::string> rows;
    rows.push_back(summary_csv_header());
    for (int m : ms)
        for (int rc : rs)
            for (int tc : ts) {
                ExperimentConfig cfg = base;
                cfg.devices = m;
                cfg.redundant_count = rc;
                cfg.num_target_labels = tc;
                if (!base.out_dir.empty()) {
                    std::ostringstream sub;
                    sub << "m" << m << "_r" << rc << "_t" << tc;
                    cfg.out_dir = (fs::path(base.out_dir) / sub.str()).string();
                }
                ExperimentResult result = run_experiment(cfg);
                rows.push_back(summary_csv_row(cfg, result));
            }
    if (!base.out_dir.empty()) {
        fs::create_directories(base.out_dir);
        std::ofstream out(fs::path(base.out_dir) / "summary.csv");
        for (const auto& r : rows) out << r << "\n";
    }
    return rows;
}

} // namespace fdsim::harness
