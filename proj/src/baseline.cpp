#include "combtrack/baseline.hpp"

#include "combtrack/errors.hpp"
#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace combtrack {

namespace {

void check_band(double center_hz, double bandwidth_hz, double sample_rate)
{
    if (!(bandwidth_hz > 0.0)) throw DomainError("bandpass: bandwidth must be > 0");
    const double lo = center_hz - 0.5 * bandwidth_hz;
    const double hi = center_hz + 0.5 * bandwidth_hz;
    if (!(lo > 0.0) || !(hi < 0.5 * sample_rate)) {
        throw DomainError("bandpass: band [" + std::to_string(lo) + ", " + std::to_string(hi) +
                          "] Hz is outside (0, Nyquist)");
    }
}

std::vector<std::complex<double>> analytic_from_spectrum(const std::vector<std::complex<double>>& half,
                                                         std::size_t n, double sample_rate, double center_hz,
                                                         double bandwidth_hz)
{
    const double df = sample_rate / static_cast<double>(n);
    const double lo = center_hz - 0.5 * bandwidth_hz;
    const double hi = center_hz + 0.5 * bandwidth_hz;
    std::vector<std::complex<double>> full(n, {0.0, 0.0});
    const auto first = static_cast<std::size_t>(std::max(1.0, std::ceil(lo / df)));
    for (std::size_t i = first; i < half.size(); ++i) {
        const double f = static_cast<double>(i) * df;
        if (f > hi) break;
        if (2 * i == n) continue; // Nyquist bin has no positive-frequency half
        full[i] = 2.0 * half[i] / static_cast<double>(n);
    }
    return detail::inverse_dft(full);
}

} // namespace

void BaselineOptions::validate() const
{
    if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz)) {
        throw ConfigError("BaselineOptions: bandwidth_hz must be > 0");
    }
    if (!(guard_fraction >= 0.0 && guard_fraction < 0.5)) {
        throw ConfigError("BaselineOptions: guard_fraction must be in [0, 0.5)");
    }
}

std::size_t guard_samples(std::size_t samples, double guard_fraction)
{
    return static_cast<std::size_t>(std::floor(guard_fraction * static_cast<double>(samples)));
}

std::vector<std::complex<double>> bandpass_analytic(const SignalRecord& signal, double center_hz, double bandwidth_hz)
{
    signal.validate();
    check_band(center_hz, bandwidth_hz, signal.sample_rate);
    return analytic_from_spectrum(detail::rfft(signal.samples), signal.size(), signal.sample_rate, center_hz,
                                  bandwidth_hz);
}

std::vector<double> extract_phase(const std::vector<std::complex<double>>& analytic, double rel_angular_freq,
                                  double sample_period)
{
    double peak = 0.0;
    for (const auto& z : analytic) peak = std::max(peak, std::abs(z));
    std::vector<double> out(analytic.size());
    double previous = 0.0;
    double offset = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double mag = std::abs(analytic[k]);
        if (!(mag > 1e-12 * peak)) {
            throw DomainError("extract_phase: analytic signal vanishes at sample " + std::to_string(k) +
                              " (line too weak)");
        }
        const double carrier = rel_angular_freq * sample_period * static_cast<double>(k);
        const double raw = std::arg(analytic[k] * std::polar(1.0, -carrier));
        if (k > 0) {
            const double d = raw - previous;
            if (d > std::numbers::pi) offset -= 2.0 * std::numbers::pi;
            else if (d < -std::numbers::pi) offset += 2.0 * std::numbers::pi;
        }
        previous = raw;
        out[k] = raw + offset + 0.5 * std::numbers::pi;
    }
    return out;
}

PhaseTrajectories run_conventional(const SignalRecord& signal, const CombSpec& spec, const BaselineOptions& options)
{
    signal.validate();
    spec.validate();
    options.validate();
    if (std::abs(signal.sample_rate - spec.sample_rate) > 1e-12 * spec.sample_rate) {
        throw DomainError("run_conventional: signal and comb sample rates differ");
    }
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t m = 1; m < spec.line_count(); ++m) {
        const double spacing = (spec.rel_angular_freqs[m] - spec.rel_angular_freqs[m - 1]) / two_pi;
        if (!(options.bandwidth_hz < spacing)) {
            throw DomainError("run_conventional: bandwidth " + std::to_string(options.bandwidth_hz) +
                              " Hz overlaps neighbouring lines " + std::to_string(spec.line_indices[m - 1]) +
                              " and " + std::to_string(spec.line_indices[m]));
        }
    }

    const std::size_t k = signal.size();
    const auto half = detail::rfft(signal.samples);
    double signal_peak = 0.0;
    for (double y : signal.samples) signal_peak = std::max(signal_peak, std::abs(y));
    PhaseTrajectories out;
    out.sample_rate = signal.sample_rate;
    out.line_indices = spec.line_indices;
    out.guard_samples = guard_samples(k, options.guard_fraction);
    out.phases.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(spec.line_count()));
    for (std::size_t m = 0; m < spec.line_count(); ++m) {
        const double center = spec.rel_angular_freqs[m] / two_pi;
        try {
            check_band(center, options.bandwidth_hz, signal.sample_rate);
            const auto z = analytic_from_spectrum(half, k, signal.sample_rate, center, options.bandwidth_hz);
            double peak = 0.0;
            for (const auto& v : z) peak = std::max(peak, std::abs(v));
            if (!(peak > 1e-12 * signal_peak)) throw DomainError("no signal in the band (line too weak)");
            const auto phase = extract_phase(z, spec.rel_angular_freqs[m], spec.sample_period());
            for (std::size_t i = 0; i < k; ++i) {
                out.phases(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = phase[i];
            }
        } catch (const DomainError& e) {
            throw DomainError("line " + std::to_string(spec.line_indices[m]) + ": " + e.what());
        }
    }
    return out;
}

} // namespace combtrack
