#include "combtrack/pipeline.hpp"

#include "combtrack/errors.hpp"
#include "combtrack/io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace combtrack {

namespace {

using nlohmann::json;

// Welch segment for line detection. The default (K / 8) is too coarse on short records,
// so grow it until the nominal spacing spans at least 16 bins, capped by the record.
std::size_t detection_segment(std::size_t samples, double sample_rate, double spacing_hz)
{
    std::size_t seg = default_segment_length(samples);
    const double wanted = 16.0 * sample_rate / spacing_hz;
    while (static_cast<double>(seg) < wanted && 2 * seg <= samples) seg *= 2;
    return seg;
}

constexpr std::uint64_t kRestartStream = 0x72657374ULL;

std::string snr_label(double snr_db)
{
    return "snr_" + format_double(snr_db) + "dB";
}

// Least-squares slope of each column over rows [first, first + n).
Eigen::VectorXd column_slopes(const Eigen::MatrixXd& x, Eigen::Index first, Eigen::Index n)
{
    Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
    t.array() -= t.mean();
    const double tt = t.squaredNorm();
    Eigen::VectorXd out(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        out[j] = tt > 0.0 ? t.dot(x.col(j).segment(first, n)) / tt : 0.0;
    }
    return out;
}

// Least-squares fit dw_m = c + d m, so that leftover frequency errors stay inside the
// span of the carrier and RF noise modes.
void snap_to_grid(CombSpec& spec)
{
    const auto n = static_cast<Eigen::Index>(spec.line_count());
    if (n < 2) return;
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = spec.line_indices[static_cast<std::size_t>(i)];
        w[i] = spec.rel_angular_freqs[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(w);
    for (Eigen::Index i = 0; i < n; ++i) spec.rel_angular_freqs[static_cast<std::size_t>(i)] = coef[0] + coef[1] * a(i, 1);
}

CorrelationMatrix ml_correlation(const ExperimentConfig& config, const Characterization& c)
{
    if (config.analysis.ml_correlation == "smoothed_increments") return sample_increment_correlation(c.phases);
    return correlation_from_covariance(c.em->noise.process_cov, c.spec.line_indices);
}

json lines_json(const CombSpec& spec, const std::optional<LineEstimates>& lines)
{
    json out = json::array();
    for (std::size_t m = 0; m < spec.line_count(); ++m) {
        json l = {{"index", spec.line_indices[m]},
                  {"freq_hz", spec.rel_angular_freqs[m] / (2.0 * std::numbers::pi)},
                  {"amplitude", spec.amplitudes[m]}};
        if (lines) {
            l["psd_freq_hz"] = lines->lines[m].freq_hz;
            l["snr_db"] = lines->lines[m].snr_db;
        }
        out.push_back(l);
    }
    return out;
}

CorrelationMatrix average(const std::vector<CorrelationMatrix>& items)
{
    CorrelationMatrix out = items.front();
    for (std::size_t i = 1; i < items.size(); ++i) out.values += items[i].values;
    out.values /= static_cast<double>(items.size());
    return out;
}

MatrixError mean_error(const std::vector<MatrixError>& errors)
{
    MatrixError out;
    for (const auto& e : errors) {
        out.frobenius += e.frobenius;
        out.max_abs += e.max_abs;
    }
    out.frobenius /= static_cast<double>(errors.size());
    out.max_abs /= static_cast<double>(errors.size());
    return out;
}

void accumulate(VarianceCurve& sum, const VarianceCurve& curve)
{
    if (sum.variance.empty()) {
        sum = curve;
        return;
    }
    for (std::size_t i = 0; i < sum.variance.size(); ++i) sum.variance[i] += curve.variance[i];
}

void scale(VarianceCurve& curve, double factor)
{
    for (double& v : curve.variance) v *= factor;
}

} // namespace

CombSpec configured_comb(const CombConfig& comb, double sample_rate)
{
    const double center = fitted_center_hz(comb.line_indices, comb.spacing_hz, comb.center_hz, sample_rate);
    std::vector<int> sorted = comb.line_indices;
    std::sort(sorted.begin(), sorted.end());
    return make_comb_grid(sorted, comb.spacing_hz, center, sample_rate, comb.amplitude);
}

CombSpec configured_comb(const ExperimentConfig& config)
{
    return configured_comb(config.comb, config.comb.sample_rate_hz);
}

Eigen::MatrixXd configured_process_cov(const ExperimentConfig& config)
{
    if (config.noise.process_cov) return *config.noise.process_cov;
    std::vector<int> sorted = config.comb.line_indices;
    std::sort(sorted.begin(), sorted.end());
    return true_process_covariance({config.noise.var_carrier, config.noise.var_rf}, sorted);
}

std::vector<NoiseTarget> noise_targets(const ExperimentConfig& config)
{
    if (config.noise.meas_var) return {{*config.noise.meas_var, std::nullopt}};
    const CombSpec spec = configured_comb(config);
    std::vector<NoiseTarget> out;
    for (double snr : config.noise.snr_db) out.push_back({meas_var_for_average_snr(spec, snr), snr});
    return out;
}

Simulation simulate(const ExperimentConfig& config, double meas_var, std::uint64_t seed,
                    std::optional<std::size_t> samples)
{
    Simulation s;
    s.spec = configured_comb(config);
    s.truth.process_cov = configured_process_cov(config);
    s.truth.meas_var = meas_var;
    s.truth.validate();
    const std::size_t k = samples.value_or(config.samples);
    s.phases = config.noise.process_cov
                   ? generate_correlated_phases(s.spec, s.truth.process_cov, k, seed)
                   : generate_wiener_phases(s.spec, {config.noise.var_carrier, config.noise.var_rf}, k, seed);
    s.phases.guard_samples = guard_samples(k, config.baseline.guard_fraction);
    s.signal = synthesize_photocurrent(s.spec, s.phases, meas_var, seed);
    return s;
}

GaussianBelief initial_belief(const ExperimentConfig& config, const PhaseTrajectories& conventional)
{
    const std::size_t m = conventional.line_count();
    if (config.ekf.init == "zero") return default_initial_belief(m);
    const double sd = config.ekf.init_phase_sd;
    GaussianBelief b;
    b.mean = conventional.phases.row(static_cast<Eigen::Index>(conventional.guard_samples)).transpose();
    b.cov = sd * sd * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    return b;
}

Characterization characterize(const SignalRecord& signal, const ExperimentConfig& config, const std::string& method,
                              const CombSpec* known_spec)
{
    config.validate();
    signal.validate();
    if (method != "ml" && method != "conventional") {
        throw ConfigError("unknown method '" + method + "' (expected ml or conventional)");
    }
    const auto start = std::chrono::steady_clock::now();

    Characterization c;
    c.method = method;
    const Periodogram psd =
        periodogram(signal, detection_segment(signal.size(), signal.sample_rate, config.comb.spacing_hz));
    const double floor_var = meas_var_from_floor(noise_floor_psd(psd), signal.sample_rate);
    const bool detect = known_spec == nullptr && config.spectral.line_source == "psd";
    if (known_spec != nullptr) {
        c.spec = *known_spec;
    } else if (!detect) {
        c.spec = configured_comb(config.comb, signal.sample_rate);
    } else {
        c.lines = detect_lines(psd, config.comb.line_indices.size());
        c.spec = comb_from_lines(*c.lines, config.comb.line_indices, signal.sample_rate);
    }

    PhaseTrajectories conventional = run_conventional(signal, c.spec, config.baseline);
    if (detect && config.spectral.refine_with_baseline) {
        // A residual frequency error shows up as a linear phase ramp; fold it back into dw.
        const auto g = static_cast<Eigen::Index>(conventional.guard_samples);
        const Eigen::Index n = static_cast<Eigen::Index>(conventional.steps()) - 2 * g;
        const Eigen::VectorXd slopes = column_slopes(conventional.phases, g, n);
        for (std::size_t m = 0; m < c.spec.line_count(); ++m) {
            c.spec.rel_angular_freqs[m] += slopes[static_cast<Eigen::Index>(m)] * signal.sample_rate;
        }
        if (config.spectral.equidistant) snap_to_grid(c.spec);
        c.spec.validate();
        conventional = run_conventional(signal, c.spec, config.baseline);
    }

    const int ref = config.analysis.reference_index;
    if (method == "conventional") {
        c.phases = std::move(conventional);
        c.correlation = sample_increment_correlation(c.phases);
        c.meas_var = floor_var;
    } else {
        const GaussianBelief init = initial_belief(config, conventional);
        const CombMeasurement model(c.spec);
        std::mt19937_64 rng = make_engine(config.seed, kRestartStream);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (int r = 0; r < config.restarts; ++r) {
            double linewidth = config.init_linewidth_hz;
            double sigma2 = floor_var > 0.0 ? floor_var : 1e-12;
            if (r > 0) {
                linewidth *= std::pow(10.0, unit(rng));
                sigma2 *= std::pow(10.0, 0.3 * unit(rng));
            }
            const NoiseModel start_noise{initial_process_cov(c.spec.line_count(), signal.sample_rate, linewidth), sigma2};
            EmResult result = run_em(signal, model, c.spec.line_indices, start_noise, init, config.em);
            if (!c.em || result.smoother.log_likelihood > c.em->smoother.log_likelihood) c.em = std::move(result);
        }
        c.phases.sample_rate = signal.sample_rate;
        c.phases.line_indices = c.spec.line_indices;
        c.phases.guard_samples = conventional.guard_samples;
        c.phases.phases = c.em->smoother.means;
        c.meas_var = c.em->noise.meas_var;
        c.correlation = ml_correlation(config, c);
    }
    c.variance = empirical_variance_curve(differential_phases(c.phases, ref), ref);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return c;
}

std::vector<Figure2Panel> run_figure2(const ExperimentConfig& config)
{
    ExperimentConfig cfg = figure_config(config);
    const auto samples = cfg.samples;
    const CombSpec spec = configured_comb(cfg);
    const CorrelationMatrix truth = correlation_from_covariance(configured_process_cov(cfg), spec.line_indices);

    std::vector<Figure2Panel> panels;
    for (const auto& target : noise_targets(cfg)) {
        Figure2Panel p;
        p.snr_db = *target.snr_db;
        p.meas_var = target.meas_var;
        p.truth = truth;
        std::vector<CorrelationMatrix> conv, ml;
        for (int i = 0; i < figure_seeds(config); ++i) {
            const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(i);
            cfg.seed = seed;
            const Simulation sim = simulate(cfg, target.meas_var, seed, samples);
            const auto a = characterize(sim.signal, cfg, "conventional", &sim.spec);
            const auto b = characterize(sim.signal, cfg, "ml", &sim.spec);
            p.seeds.push_back(seed);
            p.conventional_errors.push_back(matrix_error(a.correlation, truth));
            p.ml_errors.push_back(matrix_error(b.correlation, truth));
            conv.push_back(a.correlation);
            ml.push_back(b.correlation);
        }
        p.conventional = average(conv);
        p.ml = average(ml);
        p.mean_conventional = mean_error(p.conventional_errors);
        p.mean_ml = mean_error(p.ml_errors);
        panels.push_back(std::move(p));
    }
    return panels;
}

Figure3Result run_figure3(const ExperimentConfig& config)
{
    ExperimentConfig cfg = figure_config(config);
    const auto snrs = cfg.noise.snr_db;
    if (snrs.size() != 1) throw ConfigError("figure 3 takes a single SNR");
    const auto samples = cfg.samples;
    const NoiseTarget target = noise_targets(cfg).front();
    const int ref = cfg.analysis.reference_index;

    Figure3Result out;
    out.snr_db = snrs.front();
    out.meas_var = target.meas_var;
    out.seeds = figure_seeds(config);
    for (int i = 0; i < figure_seeds(config); ++i) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(i);
        cfg.seed = seed;
        const Simulation sim = simulate(cfg, target.meas_var, seed, samples);
        accumulate(out.truth, empirical_variance_curve(differential_phases(sim.phases, ref), ref));
        accumulate(out.conventional, characterize(sim.signal, cfg, "conventional", &sim.spec).variance);
        accumulate(out.ml, characterize(sim.signal, cfg, "ml", &sim.spec).variance);
        out.kept_samples = sim.phases.steps() - 2 * sim.phases.guard_samples;
    }
    const double inv = 1.0 / static_cast<double>(figure_seeds(config));
    scale(out.truth, inv);
    scale(out.conventional, inv);
    scale(out.ml, inv);
    out.expected = expected_variance_curve(out.truth.line_indices, cfg.noise.var_rf, out.kept_samples, ref);
    return out;
}

void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir)
{
    const auto targets = noise_targets(config);
    for (const auto& target : targets) {
        const auto dir = targets.size() > 1 ? out_dir / snr_label(*target.snr_db) : out_dir;
        const Simulation sim = simulate(config, target.meas_var, config.seed);
        write_signal(sim.signal, dir / "signal.dcsr");
        write_phases(sim.phases, dir / "true_phases.dcph");
        write_matrix_csv(sim.truth.process_cov, sim.spec.line_indices, dir / "true_q.csv");
        write_correlation_csv(correlation_from_covariance(sim.truth.process_cov, sim.spec.line_indices),
                              dir / "true_correlation.csv");

        ExperimentConfig resolved = config;
        resolved.noise.snr_db.clear();
        resolved.noise.meas_var = target.meas_var;
        resolved.signal_path = (dir / "signal.dcsr").string();
        write_text(config_to_json(resolved) + "\n", dir / "config.json");

        json report = {{"seed", config.seed},
                       {"samples", sim.signal.size()},
                       {"meas_var", target.meas_var},
                       {"average_snr_db", average_snr_db(sim.spec, target.meas_var)},
                       {"center_hz", 0.5 * (sim.spec.rel_angular_freqs.front() + sim.spec.rel_angular_freqs.back()) /
                                         (2.0 * std::numbers::pi)},
                       {"lines", lines_json(sim.spec, std::nullopt)}};
        if (target.snr_db) report["target_snr_db"] = *target.snr_db;
        write_text(report.dump(2) + "\n", dir / "simulation.json");
    }
}

void cmd_characterize(const ExperimentConfig& config, const std::filesystem::path& out_dir)
{
    if (config.signal_path.empty()) throw ConfigError("characterize needs signal_path (config key or --signal)");
    const SignalRecord signal = read_signal(config.signal_path);
    const Characterization c = characterize(signal, config, config.method);

    write_phases(c.phases, out_dir / (c.method + "_phases.dcph"));
    write_correlation_csv(c.correlation, out_dir / "correlation.csv");
    write_variance_csv(c.variance, out_dir / "variance.csv");

    json report = {{"method", c.method},
                   {"signal", {{"path", config.signal_path},
                               {"fs_hz", signal.sample_rate},
                               {"num_samples", signal.size()},
                               {"source", signal.source}}},
                   {"line_source", c.lines ? "psd" : "config"},
                   {"lines", lines_json(c.spec, c.lines)},
                   {"meas_var", c.meas_var},
                   {"wall_time_s", c.seconds},
                   {"config", json::parse(config_to_json(config))}};
    if (signal.seed) report["signal"]["seed"] = *signal.seed;
    if (c.em) {
        write_em_trace_csv(c.em->trace, out_dir / "em_trace.csv");
        write_matrix_csv(c.em->noise.process_cov, c.spec.line_indices, out_dir / "learned_q.csv");
        const auto p = fit_rank2(c.em->noise.process_cov, c.spec.line_indices);
        report["em"] = {{"log_likelihood", c.em->smoother.log_likelihood},
                        {"evaluations", c.em->trace.evaluations},
                        {"iterations", c.em->trace.size()},
                        {"converged", c.em->trace.converged},
                        {"warning", c.em->trace.warning},
                        {"var_carrier", p.var_carrier},
                        {"var_rf", p.var_rf},
                        {"q_trace", c.em->noise.process_cov.trace()}};
    }
    write_text(report.dump(2) + "\n", out_dir / "report.json");
}

void cmd_reproduce_fig(const ExperimentConfig& config, const std::filesystem::path& out_dir)
{
    const int id = config.figure.id;
    if (id == 4) {
        throw ConfigError("figure 4 requires an experimental data file, which is not bundled; "
                          "run characterize on your own recording instead");
    }
    if (id != 2 && id != 3) throw ConfigError("figure must be 2 or 3, got " + std::to_string(id));

    if (id == 2) {
        const auto dir = out_dir / "fig2";
        std::string summary = "snr_db,method,seed,frobenius,max_abs\n";
        for (const auto& p : run_figure2(config)) {
            const auto panel = dir / snr_label(p.snr_db);
            write_correlation_csv(p.truth, panel / "true_correlation.csv");
            write_correlation_csv(p.conventional, panel / "conventional_correlation.csv");
            write_correlation_csv(p.ml, panel / "ml_correlation.csv");
            auto row = [&](const char* method, const std::string& seed, const MatrixError& e) {
                summary += format_double(p.snr_db) + "," + method + "," + seed + "," + format_double(e.frobenius) +
                           "," + format_double(e.max_abs) + "\n";
            };
            for (std::size_t i = 0; i < p.seeds.size(); ++i) {
                row("conventional", std::to_string(p.seeds[i]), p.conventional_errors[i]);
                row("ml", std::to_string(p.seeds[i]), p.ml_errors[i]);
            }
            row("conventional", "mean", p.mean_conventional);
            row("ml", "mean", p.mean_ml);
        }
        write_text(summary, dir / "summary.csv");
    } else {
        const auto dir = out_dir / "fig3";
        const Figure3Result r = run_figure3(config);
        const auto panel = dir / snr_label(r.snr_db);
        write_variance_csv(r.expected, panel / "expected_variance.csv");
        write_variance_csv(r.truth, panel / "true_variance.csv");
        write_variance_csv(r.conventional, panel / "conventional_variance.csv");
        write_variance_csv(r.ml, panel / "ml_variance.csv");
        std::string summary = "line_index,expected,true,conventional,ml\n";
        for (std::size_t i = 0; i < r.expected.variance.size(); ++i) {
            summary += std::to_string(r.expected.line_indices[i]) + "," + format_double(r.expected.variance[i]) + "," +
                       format_double(r.truth.variance[i]) + "," + format_double(r.conventional.variance[i]) + "," +
                       format_double(r.ml.variance[i]) + "\n";
        }
        write_text(summary, dir / "summary.csv");
    }
    write_text(config_to_json(config) + "\n", out_dir / "config.json");
}

} // namespace combtrack
