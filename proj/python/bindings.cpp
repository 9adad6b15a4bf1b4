#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fdsim/data.hpp"
#include "fdsim/faug.hpp"
#include "fdsim/fd.hpp"
#include "fdsim/fl.hpp"
#include "fdsim/harness.hpp"
#include "fdsim/metrics.hpp"
#include "fdsim/nn.hpp"

namespace py = pybind11;
using namespace fdsim;

namespace {

nn::LogitVector to_logit_vector(const std::vector<double>& probs) {
    nn::LogitVector lv;
    lv.probs = probs;
    return lv;
}

py::dict summary_dict(const harness::ExperimentConfig& cfg,
                      const harness::ExperimentResult& result) {
    py::dict d;
    d["arm"] = harness::arm_name(cfg.arm);
    d["devices"] = cfg.devices;
    d["rounds"] = cfg.rounds;
    d["mean_final_accuracy"] = result.mean_final_accuracy;
    d["final_accuracy_per_device"] = result.final_accuracy_per_device;
    d["logits"] = result.ledger.logit_scalars;
    d["model_parameters"] = result.ledger.model_parameters;
    d["samples"] = result.ledger.seed_samples;
    d["total_bits"] = result.ledger.total_bits();
    if (result.pl.applicable) {
        d["device_server_pl"] = result.pl.ref_device_server;
        d["inter_device_pl"] = result.pl.ref_inter_device;
    } else {
        d["device_server_pl"] = py::none();
        d["inter_device_pl"] = py::none();
    }
    d["summary_row"] = harness::summary_csv_row(cfg, result);
    return d;
}

} // namespace

PYBIND11_MODULE(_fdsim, m) {
    m.doc() = "federated distillation / augmentation simulator core";

    // Base first: translators run newest-first, so the derived types must be
    // registered after their base to win dispatch.
    auto base = py::register_exception<Error>(m, "FdsimError");
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<DivergenceError>(m, "DivergenceError", base);

    py::class_<nn::Sample>(m, "Sample")
        .def(py::init<>())
        .def(py::init([](std::vector<double> features, int label) {
                 nn::Sample s;
                 s.features = std::move(features);
                 s.label = label;
                 return s;
             }),
             py::arg("features"), py::arg("label"))
        .def_readwrite("features", &nn::Sample::features)
        .def_readwrite("label", &nn::Sample::label)
        .def_readwrite("synthetic", &nn::Sample::synthetic);

    py::class_<nn::ModelWeights>(m, "ModelWeights")
        .def_readonly("dims", &nn::ModelWeights::dims)
        .def("param_count", &nn::ModelWeights::param_count)
        .def("flatten", [](const nn::ModelWeights& w) { return nn::flatten(w); });

    m.def("init_weights",
          [](const std::vector<std::size_t>& dims, std::uint64_t seed) {
              return nn::init_weights(dims, seed);
          },
          py::arg("dims"), py::arg("seed"));
    m.def("zero_weights",
          [](const std::vector<std::size_t>& dims) { return nn::zero_weights(dims); },
          py::arg("dims"));
    m.def("forward",
          [](const nn::ModelWeights& w, const std::vector<double>& features) {
              return nn::forward(w, features).probs;
          },
          py::arg("weights"), py::arg("features"), "softmax output for one input");
    m.def("cross_entropy",
          [](const std::vector<double>& pred, const std::vector<double>& target) {
              return nn::cross_entropy(to_logit_vector(pred), target);
          },
          py::arg("pred"), py::arg("target"));
    m.def("fd_loss_gradient",
          [](const nn::ModelWeights& w, const nn::Sample& b,
             const std::optional<std::vector<double>>& teacher, double gamma) {
              std::optional<nn::LogitVector> t;
              if (teacher) t = to_logit_vector(*teacher);
              return nn::fd_loss_gradient(w, b, t, gamma);
          },
          py::arg("weights"), py::arg("sample"), py::arg("teacher") = py::none(),
          py::arg("gamma") = 1.0);
    m.def("sgd_step", &nn::sgd_step, py::arg("weights"), py::arg("grad"), py::arg("eta"));
    m.def("evaluate_accuracy",
          [](const nn::ModelWeights& w, const std::vector<nn::Sample>& samples) {
              return nn::evaluate_accuracy(w, samples);
          },
          py::arg("weights"), py::arg("samples"));

    py::class_<data::Corpus>(m, "Corpus")
        .def(py::init<>())
        .def_readwrite("samples", &data::Corpus::samples)
        .def_readwrite("num_labels", &data::Corpus::num_labels)
        .def("samples_per_label", &data::Corpus::samples_per_label)
        .def("__len__", [](const data::Corpus& c) { return c.samples.size(); });

    py::class_<data::PartitionSpec>(m, "PartitionSpec")
        .def(py::init<>())
        .def_readwrite("num_devices", &data::PartitionSpec::num_devices)
        .def_readwrite("per_device_draw", &data::PartitionSpec::per_device_draw)
        .def_readwrite("num_target_labels", &data::PartitionSpec::num_target_labels)
        .def_readwrite("target_keep_count", &data::PartitionSpec::target_keep_count)
        .def_readwrite("seed", &data::PartitionSpec::seed);

    py::class_<data::DeviceDataset>(m, "DeviceDataset")
        .def_readonly("device_id", &data::DeviceDataset::device_id)
        .def_readonly("num_labels", &data::DeviceDataset::num_labels)
        .def_readonly("samples", &data::DeviceDataset::samples)
        .def_readonly("target_labels", &data::DeviceDataset::target_labels)
        .def("label_counts", &data::DeviceDataset::label_counts)
        .def("__len__", [](const data::DeviceDataset& d) { return d.samples.size(); });

    m.def("generate_corpus", &data::generate_corpus, py::arg("num_labels"), py::arg("per_label"),
          py::arg("feature_dim"), py::arg("seed"));
    m.def("split_corpus", &data::split_corpus, py::arg("corpus"), py::arg("test_fraction"),
          py::arg("seed"));
    m.def("partition_non_iid", &data::partition_non_iid, py::arg("corpus"), py::arg("spec"));
    m.def("is_iid", &data::is_iid, py::arg("dataset"), py::arg("tolerance"));
    m.def("partition_manifest_json", &data::partition_manifest_json, py::arg("devices"),
          py::arg("spec"));

    m.def("detect_target_labels", &faug::detect_target_labels, py::arg("dataset"),
          py::arg("threshold_ratio"));

    m.def("global_ensembling_phase",
          [](const std::vector<std::pair<int, std::map<int, std::vector<double>>>>& reports,
             int num_labels) {
              std::vector<fd::LocalReport> rs;
              for (const auto& [device_id, per_label] : reports) {
                  fd::LocalReport r;
                  r.device_id = device_id;
                  r.per_label.assign(static_cast<std::size_t>(num_labels), std::nullopt);
                  for (const auto& [label, probs] : per_label)
                      r.per_label.at(static_cast<std::size_t>(label)) = to_logit_vector(probs);
                  rs.push_back(std::move(r));
              }
              auto teachers = fd::global_ensembling_phase(rs);
              std::map<int, std::map<int, std::vector<double>>> out;
              for (const auto& [device_id, per_label] : teachers) {
                  std::map<int, std::vector<double>> entry;
                  for (std::size_t l = 0; l < per_label.size(); ++l)
                      if (per_label[l]) entry[static_cast<int>(l)] = per_label[l]->probs;
                  out[device_id] = std::move(entry);
              }
              return out;
          },
          py::arg("reports"), py::arg("num_labels"),
          "leave-one-out averaging of per-label reports;\n"
          "reports: list of (device_id, {label: probs}) pairs");

    m.def("fl_average", &fl::fl_average, py::arg("models"));

    py::class_<metrics::CostLedger>(m, "CostLedger")
        .def(py::init<>())
        .def_readonly("logit_scalars", &metrics::CostLedger::logit_scalars)
        .def_readonly("model_parameters", &metrics::CostLedger::model_parameters)
        .def_readonly("sample_pixels", &metrics::CostLedger::sample_pixels)
        .def_readonly("seed_samples", &metrics::CostLedger::seed_samples)
        .def("total_bits", &metrics::CostLedger::total_bits);

    py::class_<metrics::LabelInventory>(m, "LabelInventory")
        .def(py::init([](int num_labels) {
                 metrics::LabelInventory inv;
                 inv.num_labels = num_labels;
                 return inv;
             }),
             py::arg("num_labels"))
        .def("add_device",
             [](metrics::LabelInventory& inv, const std::set<int>& targets,
                const std::set<int>& redundants) {
                 inv.devices.push_back({targets, redundants});
             },
             py::arg("targets"), py::arg("redundants"));

    m.def("device_server_pl", &metrics::device_server_pl, py::arg("inventory"), py::arg("device"));
    m.def("inter_device_pl", &metrics::inter_device_pl, py::arg("inventory"), py::arg("device"));

    m.def("cost_calculator",
          [](const std::string& arm, int rounds, int num_labels, std::uint64_t model_params,
             std::uint64_t generator_params, std::uint64_t seed_samples,
             std::uint64_t pixels_per_sample) {
              return harness::cost_calculator(harness::parse_arm(arm), rounds, num_labels,
                                              model_params, generator_params, seed_samples,
                                              pixels_per_sample);
          },
          py::arg("arm"), py::arg("rounds") = 16, py::arg("num_labels") = 10,
          py::arg("model_params") = 1'199'648, py::arg("generator_params") = 1'493'520,
          py::arg("seed_samples") = 15, py::arg("pixels_per_sample") = 784);

    py::class_<harness::ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_property("arm",
                      [](const harness::ExperimentConfig& c) { return harness::arm_name(c.arm); },
                      [](harness::ExperimentConfig& c, const std::string& v) {
                          c.arm = harness::parse_arm(v);
                      })
        .def_readwrite("num_labels", &harness::ExperimentConfig::num_labels)
        .def_readwrite("per_label", &harness::ExperimentConfig::per_label)
        .def_readwrite("feature_dim", &harness::ExperimentConfig::feature_dim)
        .def_readwrite("test_fraction", &harness::ExperimentConfig::test_fraction)
        .def_readwrite("devices", &harness::ExperimentConfig::devices)
        .def_readwrite("per_device_draw", &harness::ExperimentConfig::per_device_draw)
        .def_readwrite("num_target_labels", &harness::ExperimentConfig::num_target_labels)
        .def_readwrite("target_keep_count", &harness::ExperimentConfig::target_keep_count)
        .def_readwrite("seed", &harness::ExperimentConfig::seed)
        .def_readwrite("rounds", &harness::ExperimentConfig::rounds)
        .def_readwrite("local_steps", &harness::ExperimentConfig::local_steps)
        .def_readwrite("batch_size", &harness::ExperimentConfig::batch_size)
        .def_readwrite("eta", &harness::ExperimentConfig::eta)
        .def_readwrite("gamma", &harness::ExperimentConfig::gamma)
        .def_readwrite("hidden_dims", &harness::ExperimentConfig::hidden_dims)
        .def_readwrite("workers", &harness::ExperimentConfig::workers)
        .def_readwrite("repeats", &harness::ExperimentConfig::repeats)
        .def_readwrite("out_dir", &harness::ExperimentConfig::out_dir)
        .def_readwrite("threshold_ratio", &harness::ExperimentConfig::threshold_ratio)
        .def_readwrite("redundant_count", &harness::ExperimentConfig::redundant_count)
        .def_readwrite("seeds_per_label", &harness::ExperimentConfig::seeds_per_label)
        .def_readwrite("iid_tolerance", &harness::ExperimentConfig::iid_tolerance)
        .def_readwrite("oversample_factor", &harness::ExperimentConfig::oversample_factor)
        .def_readwrite("gan_steps", &harness::ExperimentConfig::gan_steps)
        .def_property("backend",
                      [](const harness::ExperimentConfig& c) {
                          return c.backend == faug::BackendKind::OracleGaussian
                                     ? "oracle-gaussian"
                                     : "conditional-gan";
                      },
                      [](harness::ExperimentConfig& c, const std::string& v) {
                          if (v == "oracle-gaussian") c.backend = faug::BackendKind::OracleGaussian;
                          else if (v == "conditional-gan")
                              c.backend = faug::BackendKind::ConditionalGan;
                          else throw ConfigError("backend: unknown backend '" + v + "'");
                      })
        .def("validate", &harness::ExperimentConfig::validate);

    m.def("load_config", &harness::parse_config_file, py::arg("path"));
    m.def("run_experiment",
          [](const harness::ExperimentConfig& cfg) {
              auto result = harness::run_experiment(cfg);
              return summary_dict(cfg, result);
          },
          py::arg("config"),
          "run one experiment and return the summary record as a dict");
}
