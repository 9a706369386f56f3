// End-to-end acceptance checks. One PASS/FAIL line per criterion; nonzero exit on any FAIL.

#include "combtrack/io.hpp"
#include "combtrack/pipeline.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

using namespace combtrack;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;
std::vector<int> selected; // empty runs everything

void report(int id, const std::string& name, const std::function<Outcome()>& check)
{
    if (!selected.empty() && std::ranges::find(selected, id) == selected.end()) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    return scale * (a * a.transpose() / static_cast<double>(n) + 0.1 * Eigen::MatrixXd::Identity(n, n));
}

Outcome linear_surrogate()
{
    constexpr Eigen::Index lines = 5;
    constexpr std::size_t steps = 10'000;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    Eigen::MatrixXd h(static_cast<Eigen::Index>(steps), lines);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = g(rng);
    const Eigen::MatrixXd q = random_spd(lines, rng, 1e-3);
    const double r = 0.05;
    const Eigen::LLT<Eigen::MatrixXd> chol(q);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lines);
    std::vector<double> y(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        Eigen::VectorXd w(lines);
        for (auto& v : w) v = g(rng);
        if (k > 0) x += chol.matrixL() * w;
        y[k] = h.row(static_cast<Eigen::Index>(k)).dot(x) + std::sqrt(r) * g(rng);
    }
    const GaussianBelief init{Eigen::VectorXd::Constant(lines, 0.3), 2.0 * Eigen::MatrixXd::Identity(lines, lines)};
    const auto signal = fixtures::record(y, 1.0);
    const LinearMeasurement model(h);

    const auto t0 = Clock::now();
    const auto f = run_filter(signal, model, {q, r}, init);
    const auto s = rts_smooth(f, q);
    const auto fast = smooth_moments(signal, model, {q, r}, init);
    const double runtime = seconds_since(t0);

    const auto kf = oracle::kalman_filter(y, h, q, r, init.mean, init.cov);
    const auto ks = oracle::rts_smoother(kf, q);
    double worst = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        worst = std::max(worst, (f.updated_means.row(i).transpose() - kf.upd_mean[k]).cwiseAbs().maxCoeff());
        worst = std::max(worst, fixtures::max_abs_diff(f.updated_covs[k], kf.upd_cov[k]));
        worst = std::max(worst, fixtures::max_abs_diff(f.predicted_covs[k], kf.pred_cov[k]));
        worst = std::max(worst, (s.means.row(i).transpose() - ks.mean[k]).cwiseAbs().maxCoeff());
        worst = std::max(worst, (fast.means.row(i).transpose() - ks.mean[k]).cwiseAbs().maxCoeff());
        worst = std::max(worst, fixtures::max_abs_diff(s.covs[k], ks.cov[k]));
        if (k > 0) worst = std::max(worst, fixtures::max_abs_diff(s.lag_one[k], ks.lag_one[k]));
    }
    const bool ok = worst < 1e-10 && runtime < 5.0;
    return {ok, fmt("max elementwise diff %.2e, runtime %.2f s", worst, runtime)};
}

Outcome jacobian_check()
{
    const auto spec = fixtures::comb(24);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    std::uniform_int_distribution<std::size_t> kk(0, 100'000);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(49);
        for (auto& v : x) v = u(rng);
        const std::size_t k = kk(rng);
        const auto e = measurement_and_jacobian(x, k, spec);
        const auto fd = oracle::numeric_gradient(
            [&](const Eigen::VectorXd& s) { return measurement_and_jacobian(s, k, spec).predicted; }, x, 1e-4);
        worst = std::max(worst, (e.gradient - fd).norm() / e.gradient.norm());
    }
    return {worst < 1e-6, fmt("worst relative error %.2e over 100 states", worst)};
}

Outcome covariance_recovery()
{
    auto config = parse_config(R"({"samples": 100000, "noise": {"snr_db": 29.0}})");
    const double meas_var = noise_targets(config).front().meas_var;
    int pass = 0;
    std::string worst;
    double worst_err = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto sim = simulate(config, meas_var, seed);
        const auto res = characterize(sim.signal, config, "ml");
        const auto p = fit_rank2(res.em->noise.process_cov, sim.spec.line_indices);
        const double ec = std::abs(p.var_carrier / config.noise.var_carrier - 1.0);
        const double er = std::abs(p.var_rf / config.noise.var_rf - 1.0);
        if (ec < 0.10 && er < 0.10) ++pass;
        if (std::max(ec, er) > worst_err) {
            worst_err = std::max(ec, er);
            worst = fmt("seed %d carrier %+.3f rf %+.3f", static_cast<int>(seed), ec, er);
        }
    }
    return {pass >= 8, fmt("%d/10 seeds within 10%%, worst %s", pass, worst.c_str())};
}

Outcome figure2()
{
    const auto config = parse_config(R"({"figure": {"id": 2}})");
    const auto t0 = Clock::now();
    const auto panels = run_figure2(config);
    const double runtime = seconds_since(t0);
    bool ok = runtime < 300.0 && panels.size() == 3;
    std::string detail;
    for (const auto& p : panels) {
        const double ml = p.mean_ml.max_abs;
        const double conv = p.mean_conventional.max_abs;
        ok = ok && ml < conv;
        if (p.snr_db > 29.0) ok = ok && ml <= 0.05;
        if (p.snr_db < 17.0) ok = ok && ml <= 0.10;
        detail += fmt("%.2f dB ml %.3f conv %.3f; ", p.snr_db, ml, conv);
    }
    return {ok, detail + fmt("runtime %.0f s", runtime)};
}

Outcome figure3()
{
    const auto config = parse_config(R"({"figure": {"id": 3}})");
    const auto r = run_figure3(config);
    const double r2 = quadratic_fit_r2(r.ml);
    bool ok = r2 >= 0.99;
    double worst_rel = 0.0;
    int below = 0;
    for (std::size_t i = 0; i < r.ml.line_indices.size(); ++i) {
        const int m = r.ml.line_indices[i];
        if (std::abs(m) >= 10) worst_rel = std::max(worst_rel, std::abs(r.ml.variance[i] / r.expected.variance[i] - 1.0));
        if (m != r.ml.reference_index && r.conventional.variance[i] < r.ml.variance[i]) ++below;
    }
    ok = ok && worst_rel <= 0.15 && below == 0;
    return {ok, fmt("%.2f dB, %d seeds: R2 %.4f, worst |ml/expected - 1| %.3f for |m| >= 10, %d lines with conv < ml",
                    r.snr_db, r.seeds, r2, worst_rel, below)};
}

Outcome em_monotonicity()
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> half(1, 4);
    std::uniform_int_distribution<std::size_t> len(2000, 6000);
    std::uniform_real_distribution<double> snr(12.0, 32.0);
    std::uniform_real_distribution<double> logvar(-8.0, -5.5);
    int bad = 0;
    double worst_dip = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto spec = fixtures::comb(half(rng));
        const ElectroOpticNoiseParams params{std::pow(10.0, logvar(rng)), std::pow(10.0, logvar(rng) - 1.0)};
        const std::size_t steps = len(rng);
        const auto phases = generate_wiener_phases(spec, params, steps, 1000 + trial);
        const double r = meas_var_for_average_snr(spec, snr(rng));
        const auto sig = synthesize_photocurrent(spec, phases, r, 2000 + trial);
        const auto n = static_cast<Eigen::Index>(spec.line_count());
        const GaussianBelief init{phases.phases.row(0).transpose(), 0.04 * Eigen::MatrixXd::Identity(n, n)};
        EmOptions o;
        o.max_iters = 30;
        if (trial % 2 == 1) o.q_structure = QStructure::full;
        if (trial % 4 >= 2) o.acceleration = EmAcceleration::none;
        const auto res = run_em(sig, spec, {initial_process_cov(spec.line_count(), spec.sample_rate), 4.0 * r}, init, o);
        bool mono = true;
        for (std::size_t i = 1; i < res.trace.entries.size(); ++i) {
            const double prev = res.trace.entries[i - 1].loglik;
            const double dip = (prev - res.trace.entries[i].loglik) / std::abs(prev);
            worst_dip = std::max(worst_dip, dip);
            if (dip > 1e-6) mono = false;
        }
        if (!mono) ++bad;
    }
    return {bad == 0, fmt("%d/20 configurations non-monotone, largest relative dip %.2e", bad, worst_dip)};
}

Outcome baseline_pm()
{
    const double fs = fixtures::kFs;
    const double f0 = 1.25e9 + 0.37e6;
    const double beta = 0.4;
    const double fmod = 1e6;
    const std::size_t n = 20'000;
    CombSpec spec;
    spec.line_indices = {0};
    spec.amplitudes = {1.0};
    spec.rel_angular_freqs = {2.0 * std::numbers::pi * f0};
    spec.sample_rate = fs;
    PhaseTrajectories phases;
    phases.phases.resize(static_cast<Eigen::Index>(n), 1);
    phases.sample_rate = fs;
    phases.line_indices = {0};
    auto mod = [&](std::size_t k) { return std::sin(2.0 * std::numbers::pi * fmod * static_cast<double>(k) / fs); };
    for (std::size_t k = 0; k < n; ++k) phases.phases(static_cast<Eigen::Index>(k), 0) = 0.7 + beta * mod(k);
    const auto sig = synthesize_photocurrent(spec, phases, 0.0, 1);
    const auto out = run_conventional(sig, spec, BaselineOptions{});
    const std::size_t guard = out.guard_samples;
    double mean = 0.0;
    for (std::size_t k = guard; k < n - guard; ++k) mean += out.phases(static_cast<Eigen::Index>(k), 0);
    mean /= static_cast<double>(n - 2 * guard);
    double num = 0.0, den = 0.0;
    for (std::size_t k = guard; k < n - guard; ++k) {
        num += (out.phases(static_cast<Eigen::Index>(k), 0) - mean) * mod(k);
        den += mod(k) * mod(k);
    }
    const double est = num / den;
    const double rel = std::abs(est / beta - 1.0);
    return {rel < 0.01, fmt("modulation amplitude %.5f vs %.2f (rel error %.2e)", est, beta, rel)};
}

Outcome spectral()
{
    const auto spec = fixtures::comb(24);
    const auto phases = generate_wiener_phases(spec, {0.0, 0.0}, 65'536, 1);
    const auto y = synthesize_photocurrent(spec, phases, meas_var_for_average_snr(spec, 30.0), 3);
    const auto psd = periodogram(y);
    const auto lines = detect_lines(psd, 49);
    if (lines.size() != 49) return {false, fmt("detected %zu lines", lines.size())};
    double worst_bins = 0.0, worst_amp = 0.0;
    for (std::size_t i = 0; i < 49; ++i) {
        const double f = spec.rel_angular_freqs[i] / (2.0 * std::numbers::pi);
        worst_bins = std::max(worst_bins, std::abs(lines.lines[i].freq_hz - f) / psd.resolution_hz);
        worst_amp = std::max(worst_amp, std::abs(lines.lines[i].amplitude / spec.amplitudes[i] - 1.0));
    }
    return {worst_bins < 0.05 && worst_amp < 0.02,
            fmt("49/49 detected, worst frequency error %.4f bin, worst amplitude error %.4f", worst_bins, worst_amp)};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

using Snapshot = std::map<std::string, std::string>;

// Every regular file under root except report.json, which carries wall-clock time.
Snapshot snapshot(const fs::path& root)
{
    Snapshot out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() != "report.json") {
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
        }
    }
    return out;
}

Outcome determinism()
{
    const fs::path root = fs::temp_directory_path() / ("combtrack_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    SignalRecord rec;
    rec.sample_rate = 10e9;
    rec.seed = 5;
    rec.samples.resize(4096);
    for (auto& v : rec.samples) v = g(rng);
    rec.samples[0] = -0.0;
    rec.samples[1] = 5e-324;
    write_signal(rec, root / "roundtrip.dcsr");
    const auto back = read_signal(root / "roundtrip.dcsr");
    const bool bitwise = back.samples.size() == rec.samples.size() &&
                         std::memcmp(back.samples.data(), rec.samples.data(), 8 * rec.samples.size()) == 0;

    auto config = parse_config(R"({"comb": {"half_width": 4}, "samples": 6000, "seed": 17,
                                   "noise": {"snr_db": [20, 29]},
                                   "figure": {"id": 3, "seeds": 3, "samples": 3000}})");
    std::vector<Snapshot> runs;
    for (int run = 0; run < 2; ++run) {
        fs::remove_all(root / "out");
        cmd_simulate(config, root / "out" / "sim");
        auto c = load_config(root / "out" / "sim" / "snr_29dB" / "config.json");
        c.signal_path = (root / "out" / "sim" / "snr_29dB" / "signal.dcsr").string();
        c.method = "ml";
        cmd_characterize(c, root / "out" / "ml");
        c.method = "conventional";
        cmd_characterize(c, root / "out" / "conventional");
        cmd_reproduce_fig(config, root / "out" / "fig");
        runs.push_back(snapshot(root / "out"));
    }
    const bool same = runs[0] == runs[1];
    std::string first_diff;
    for (const auto& [name, bytes] : runs[0]) {
        const auto it = runs[1].find(name);
        if (it == runs[1].end() || it->second != bytes) {
            first_diff = " (first: " + name + ")";
            break;
        }
    }
    const auto csv_files = std::ranges::count_if(runs[0], [](const auto& kv) { return kv.first.ends_with(".csv"); });
    fs::remove_all(root);
    return {bitwise && same && csv_files > 0,
            fmt("signal round trip %s, %d files (%d CSV) %s across reruns", bitwise ? "bitwise exact" : "differs",
                static_cast<int>(runs[0].size()), static_cast<int>(csv_files),
                (same ? "identical" : "differ" + first_diff).c_str())};
}

} // namespace

// Usage: acceptance [criterion ...]
int main(int argc, char** argv)
{
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    report(1, "linear surrogate oracle", linear_surrogate);
    report(2, "measurement Jacobian", jacobian_check);
    report(3, "rank2 covariance recovery", covariance_recovery);
    report(4, "figure 2 correlation matrices", figure2);
    report(5, "figure 3 differential variance", figure3);
    report(6, "EM monotonicity", em_monotonicity);
    report(7, "baseline phase modulation", baseline_pm);
    report(8, "spectral line detection", spectral);
    report(9, "determinism and I/O", determinism);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
