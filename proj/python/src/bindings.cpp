#include "combtrack/errors.hpp"
#include "combtrack/io.hpp"
#include "combtrack/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace combtrack;

namespace {

py::array_t<double> to_array(const std::vector<double>& v)
{
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a)
{
    if (a.ndim() != 1) throw DimensionError("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Phase tracking of optical frequency comb lines from a heterodyne photocurrent.";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

    // comb model
    py::class_<CombSpec>(m, "CombSpec")
        .def(py::init<>())
        .def_readwrite("line_indices", &CombSpec::line_indices)
        .def_readwrite("amplitudes", &CombSpec::amplitudes)
        .def_readwrite("rel_angular_freqs", &CombSpec::rel_angular_freqs)
        .def_readwrite("sample_rate", &CombSpec::sample_rate)
        .def_property_readonly("line_count", &CombSpec::line_count)
        .def("validate", &CombSpec::validate);

    py::class_<NoiseModel>(m, "NoiseModel")
        .def(py::init<>())
        .def(py::init([](Eigen::MatrixXd q, double r) { return NoiseModel{std::move(q), r}; }), py::arg("process_cov"),
             py::arg("meas_var"))
        .def_readwrite("process_cov", &NoiseModel::process_cov)
        .def_readwrite("meas_var", &NoiseModel::meas_var);

    py::class_<ElectroOpticNoiseParams>(m, "ElectroOpticNoiseParams")
        .def(py::init([](double c, double rf) { return ElectroOpticNoiseParams{c, rf}; }), py::arg("var_carrier"),
             py::arg("var_rf"))
        .def_readwrite("var_carrier", &ElectroOpticNoiseParams::var_carrier)
        .def_readwrite("var_rf", &ElectroOpticNoiseParams::var_rf);

    py::class_<PhaseTrajectories>(m, "PhaseTrajectories")
        .def(py::init<>())
        .def_readwrite("phases", &PhaseTrajectories::phases)
        .def_readwrite("sample_rate", &PhaseTrajectories::sample_rate)
        .def_readwrite("line_indices", &PhaseTrajectories::line_indices)
        .def_readwrite("guard_samples", &PhaseTrajectories::guard_samples);

    py::class_<SignalRecord>(m, "SignalRecord")
        .def(py::init([](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples,
                         double sample_rate, std::string source, std::optional<std::uint64_t> seed) {
                 SignalRecord r;
                 r.samples = from_array(samples);
                 r.sample_rate = sample_rate;
                 r.source = std::move(source);
                 r.seed = seed;
                 r.validate();
                 return r;
             }),
             py::arg("samples"), py::arg("sample_rate"), py::arg("source") = "python", py::arg("seed") = py::none())
        .def_property(
            "samples", [](const SignalRecord& r) { return to_array(r.samples); },
            [](SignalRecord& r, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
                r.samples = from_array(a);
            })
        .def_readwrite("sample_rate", &SignalRecord::sample_rate)
        .def_readwrite("source", &SignalRecord::source)
        .def_readwrite("seed", &SignalRecord::seed)
        .def("__len__", &SignalRecord::size);

    m.def("symmetric_line_indices", &symmetric_line_indices, py::arg("half_width"));
    m.def("fitted_center_hz", &fitted_center_hz, py::arg("line_indices"), py::arg("spacing_hz"), py::arg("center_hz"),
          py::arg("sample_rate"));
    m.def("make_comb_grid", &make_comb_grid, py::arg("line_indices"), py::arg("spacing_hz"), py::arg("center_hz"),
          py::arg("sample_rate"), py::arg("amplitude") = 1.0);
    m.def("true_process_covariance", &true_process_covariance, py::arg("params"), py::arg("line_indices"));
    m.def("generate_wiener_phases", &generate_wiener_phases, py::arg("spec"), py::arg("params"), py::arg("steps"),
          py::arg("seed"));
    m.def("generate_correlated_phases", &generate_correlated_phases, py::arg("spec"), py::arg("process_cov"),
          py::arg("steps"), py::arg("seed"));
    m.def("synthesize_photocurrent", &synthesize_photocurrent, py::arg("spec"), py::arg("phases"), py::arg("meas_var"),
          py::arg("seed"));
    m.def("average_snr_db", &average_snr_db, py::arg("spec"), py::arg("meas_var"));
    m.def("meas_var_for_average_snr", &meas_var_for_average_snr, py::arg("spec"), py::arg("target_db"));

    // spectral estimation
    py::class_<Periodogram>(m, "Periodogram")
        .def_property_readonly("freqs", [](const Periodogram& p) { return to_array(p.freqs); })
        .def_property_readonly("power", [](const Periodogram& p) { return to_array(p.power); })
        .def_readonly("resolution_hz", &Periodogram::resolution_hz)
        .def_readonly("segment_len", &Periodogram::segment_len);
    py::class_<LineEstimate>(m, "LineEstimate")
        .def_readonly("freq_hz", &LineEstimate::freq_hz)
        .def_readonly("amplitude", &LineEstimate::amplitude)
        .def_readonly("snr_db", &LineEstimate::snr_db);
    py::class_<LineEstimates>(m, "LineEstimates")
        .def_readonly("lines", &LineEstimates::lines)
        .def_readonly("noise_floor", &LineEstimates::noise_floor)
        .def("__len__", &LineEstimates::size);
    m.def("periodogram", py::overload_cast<const SignalRecord&>(&periodogram), py::arg("signal"));
    m.def("detect_lines", &detect_lines, py::arg("psd"), py::arg("expected_count"));
    m.def("comb_from_lines", &comb_from_lines, py::arg("lines"), py::arg("line_indices"), py::arg("sample_rate"));

    // phase tracking and learning
    py::class_<GaussianBelief>(m, "GaussianBelief")
        .def(py::init([](Eigen::VectorXd mean, Eigen::MatrixXd cov) { return GaussianBelief{std::move(mean), std::move(cov)}; }),
             py::arg("mean"), py::arg("cov"))
        .def_readwrite("mean", &GaussianBelief::mean)
        .def_readwrite("cov", &GaussianBelief::cov);
    m.def("default_initial_belief", &default_initial_belief, py::arg("lines"));

    py::class_<FilterResult>(m, "FilterResult")
        .def_readonly("predicted_means", &FilterResult::predicted_means)
        .def_readonly("updated_means", &FilterResult::updated_means)
        .def_readonly("innovations", &FilterResult::innovations)
        .def_readonly("innovation_vars", &FilterResult::innovation_vars)
        .def_readonly("log_likelihood", &FilterResult::log_likelihood);
    py::class_<SmootherResult>(m, "SmootherResult")
        .def_readonly("means", &SmootherResult::means)
        .def_readonly("log_likelihood", &SmootherResult::log_likelihood);
    m.def(
        "run_filter",
        [](const SignalRecord& s, const CombSpec& spec, const NoiseModel& n, const GaussianBelief& init) {
            return run_filter(s, spec, n, init, FilterOptions{false});
        },
        py::arg("signal"), py::arg("spec"), py::arg("noise"), py::arg("init"));
    m.def(
        "smooth",
        [](const SignalRecord& s, const CombSpec& spec, const NoiseModel& n, const GaussianBelief& init) {
            return smooth_moments(s, CombMeasurement(spec), n, init);
        },
        py::arg("signal"), py::arg("spec"), py::arg("noise"), py::arg("init"));

    py::enum_<QStructure>(m, "QStructure").value("full", QStructure::full).value("rank2", QStructure::rank2);
    py::enum_<EmAcceleration>(m, "EmAcceleration")
        .value("none", EmAcceleration::none)
        .value("squarem", EmAcceleration::squarem);
    py::class_<EmOptions>(m, "EmOptions")
        .def(py::init<>())
        .def_readwrite("max_iters", &EmOptions::max_iters)
        .def_readwrite("rel_loglik_tol", &EmOptions::rel_loglik_tol)
        .def_readwrite("q_structure", &EmOptions::q_structure)
        .def_readwrite("psd_floor", &EmOptions::psd_floor)
        .def_readwrite("acceleration", &EmOptions::acceleration);
    py::class_<EmTraceEntry>(m, "EmTraceEntry")
        .def_readonly("iteration", &EmTraceEntry::iteration)
        .def_readonly("loglik", &EmTraceEntry::loglik)
        .def_readonly("sigma2", &EmTraceEntry::sigma2)
        .def_readonly("q_trace", &EmTraceEntry::q_trace)
        .def_readonly("extrapolated", &EmTraceEntry::extrapolated);
    py::class_<EmTrace>(m, "EmTrace")
        .def_readonly("entries", &EmTrace::entries)
        .def_readonly("evaluations", &EmTrace::evaluations)
        .def_readonly("converged", &EmTrace::converged)
        .def_readonly("warning", &EmTrace::warning);
    py::class_<EmResult>(m, "EmResult")
        .def_readonly("noise", &EmResult::noise)
        .def_readonly("trace", &EmResult::trace)
        .def_readonly("smoother", &EmResult::smoother);
    m.def("run_em", py::overload_cast<const SignalRecord&, const CombSpec&, const NoiseModel&, const GaussianBelief&,
                                      const EmOptions&>(&run_em),
          py::arg("signal"), py::arg("spec"), py::arg("init_noise"), py::arg("init"), py::arg("options") = EmOptions{},
          py::call_guard<py::gil_scoped_release>());
    m.def("fit_rank2", &fit_rank2, py::arg("process_cov"), py::arg("line_indices"));
    m.def("initial_process_cov", &initial_process_cov, py::arg("lines"), py::arg("sample_rate"),
          py::arg("linewidth_hz") = 10e3);

    // conventional baseline
    py::class_<BaselineOptions>(m, "BaselineOptions")
        .def(py::init<>())
        .def_readwrite("bandwidth_hz", &BaselineOptions::bandwidth_hz)
        .def_readwrite("guard_fraction", &BaselineOptions::guard_fraction);
    m.def("run_conventional", &run_conventional, py::arg("signal"), py::arg("spec"),
          py::arg("options") = BaselineOptions{});

    // noise analysis
    py::class_<CorrelationMatrix>(m, "CorrelationMatrix")
        .def_readonly("values", &CorrelationMatrix::values)
        .def_readonly("line_indices", &CorrelationMatrix::line_indices);
    py::class_<VarianceCurve>(m, "VarianceCurve")
        .def_readonly("line_indices", &VarianceCurve::line_indices)
        .def_property_readonly("variance", [](const VarianceCurve& v) { return to_array(v.variance); })
        .def_readonly("reference_index", &VarianceCurve::reference_index);
    py::class_<MatrixError>(m, "MatrixError")
        .def_readonly("frobenius", &MatrixError::frobenius)
        .def_readonly("max_abs", &MatrixError::max_abs);
    m.def("correlation_from_covariance", &correlation_from_covariance, py::arg("process_cov"), py::arg("line_indices"));
    m.def("sample_increment_correlation", &sample_increment_correlation, py::arg("trajectories"));
    m.def("differential_phases", &differential_phases, py::arg("trajectories"), py::arg("reference_index") = 0);
    m.def("empirical_variance_curve", &empirical_variance_curve, py::arg("differential"),
          py::arg("reference_index") = 0);
    m.def("expected_variance_curve", &expected_variance_curve, py::arg("line_indices"), py::arg("var_rf"),
          py::arg("samples"), py::arg("reference_index") = 0);
    m.def("matrix_error", &matrix_error, py::arg("a"), py::arg("b"));
    m.def("quadratic_fit_r2", &quadratic_fit_r2, py::arg("curve"));

    // files and experiments
    m.def("format_double", &format_double, py::arg("x"));
    m.def("write_signal", &write_signal, py::arg("record"), py::arg("path"));
    m.def("read_signal", &read_signal, py::arg("path"));
    m.def("read_correlation_csv", &read_correlation_csv, py::arg("path"));

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def("to_json", [](const ExperimentConfig& c) { return config_to_json(c); })
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("samples", &ExperimentConfig::samples)
        .def_readwrite("method", &ExperimentConfig::method)
        .def_readwrite("signal_path", &ExperimentConfig::signal_path);
    m.def("parse_config", &parse_config, py::arg("json_text"));
    m.def("load_config", &load_config, py::arg("path"));

    py::class_<Simulation>(m, "Simulation")
        .def_readonly("spec", &Simulation::spec)
        .def_readonly("truth", &Simulation::truth)
        .def_readonly("phases", &Simulation::phases)
        .def_readonly("signal", &Simulation::signal);
    m.def("noise_targets", [](const ExperimentConfig& c) {
        std::vector<double> out;
        for (const auto& t : noise_targets(c)) out.push_back(t.meas_var);
        return out;
    });
    m.def("simulate", &simulate, py::arg("config"), py::arg("meas_var"), py::arg("seed"),
          py::arg("samples") = py::none());

    py::class_<Characterization>(m, "Characterization")
        .def_readonly("method", &Characterization::method)
        .def_readonly("spec", &Characterization::spec)
        .def_readonly("phases", &Characterization::phases)
        .def_readonly("correlation", &Characterization::correlation)
        .def_readonly("variance", &Characterization::variance)
        .def_readonly("em", &Characterization::em)
        .def_readonly("meas_var", &Characterization::meas_var)
        .def_readonly("seconds", &Characterization::seconds);
    m.def(
        "characterize",
        [](const SignalRecord& s, const ExperimentConfig& c, const std::string& method) {
            return characterize(s, c, method);
        },
        py::arg("signal"), py::arg("config"), py::arg("method") = "ml", py::call_guard<py::gil_scoped_release>());

    m.def("cmd_simulate", &cmd_simulate, py::arg("config"), py::arg("out_dir"));
    m.def("cmd_characterize", &cmd_characterize, py::arg("config"), py::arg("out_dir"),
          py::call_guard<py::gil_scoped_release>());
    m.def("cmd_reproduce_fig", &cmd_reproduce_fig, py::arg("config"), py::arg("out_dir"),
          py::call_guard<py::gil_scoped_release>());
}
