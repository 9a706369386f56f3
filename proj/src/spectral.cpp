#include "combtrack/spectral.hpp"

#include "combtrack/errors.hpp"
#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace combtrack {

namespace {

// Bins on each side of a peak whose power is attributed to the line. Covers the Hann main
// lobe for any off-bin offset.
constexpr std::size_t kLobeHalfWidth = 3;

std::vector<double> make_window(Window w, std::size_t n)
{
    std::vector<double> out(n, 1.0);
    if (w == Window::hann) {
        // Periodic form: exact three-bin response for on-bin tones.
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        }
    }
    return out;
}

LineEstimate refine(const Periodogram& psd, std::size_t peak, double floor)
{
    const std::size_t n = psd.size();
    double offset = 0.0;
    if (peak > 0 && peak + 1 < n && psd.power[peak - 1] > 0.0 && psd.power[peak + 1] > 0.0) {
        const double a = std::log(psd.power[peak - 1]);
        const double b = std::log(psd.power[peak]);
        const double c = std::log(psd.power[peak + 1]);
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    }

    const std::size_t lo = peak > kLobeHalfWidth ? peak - kLobeHalfWidth : 0;
    const std::size_t hi = std::min(n - 1, peak + kLobeHalfWidth);
    double power = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) power += psd.power[i] - floor;
    power *= psd.resolution_hz;

    LineEstimate e;
    e.freq_hz = psd.freqs[peak] + offset * psd.resolution_hz;
    e.amplitude = std::sqrt(2.0 * std::max(power, 0.0));
    const double noise = meas_var_from_floor(floor, psd.sample_rate);
    e.snr_db = noise > 0.0 ? 10.0 * std::log10(0.5 * e.amplitude * e.amplitude / noise)
                           : std::numeric_limits<double>::infinity();
    return e;
}

std::vector<std::size_t> local_maxima(const Periodogram& psd)
{
    std::vector<std::size_t> out;
    const std::size_t n = psd.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (psd.power[i] > psd.power[i - 1] && psd.power[i] >= psd.power[i + 1]) out.push_back(i);
    }
    return out;
}

LineEstimates finish(const Periodogram& psd, std::vector<std::size_t> peaks, double floor)
{
    std::sort(peaks.begin(), peaks.end());
    LineEstimates out;
    out.noise_floor = floor;
    for (std::size_t p : peaks) {
        LineEstimate e = refine(psd, p, floor);
        if (!(e.amplitude > 0.0)) continue;
        out.lines.push_back(e);
    }
    return out;
}

} // namespace

Window parse_window(const std::string& name)
{
    if (name == "hann") return Window::hann;
    if (name == "rectangular") return Window::rectangular;
    throw ConfigError("unknown window '" + name + "' (expected hann or rectangular)");
}

std::string to_string(Window w)
{
    return w == Window::hann ? "hann" : "rectangular";
}

void Periodogram::validate() const
{
    if (freqs.size() != power.size()) throw DimensionError("Periodogram: freqs and power differ in length");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (i > 0 && !(freqs[i] > freqs[i - 1])) throw DomainError("Periodogram: freqs not increasing");
        if (!(power[i] >= 0.0)) throw DomainError("Periodogram: negative or NaN power");
    }
}

std::size_t default_segment_length(std::size_t samples)
{
    std::size_t len = 8;
    while (len * 2 <= samples / 8) len *= 2;
    return std::min(len, samples);
}

Periodogram periodogram(const SignalRecord& signal, std::size_t segment_len, double overlap_fraction, Window window)
{
    signal.validate();
    const std::size_t k = signal.size();
    if (segment_len < 2) throw DomainError("periodogram: segment_len must be >= 2");
    if (segment_len > k) {
        throw DomainError("periodogram: segment_len " + std::to_string(segment_len) + " exceeds record length " +
                          std::to_string(k));
    }
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
        throw DomainError("periodogram: overlap_fraction must be in [0, 1)");
    }

    const auto w = make_window(window, segment_len);
    const double u = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
    const auto overlap = static_cast<std::size_t>(std::llround(overlap_fraction * static_cast<double>(segment_len)));
    const std::size_t step = std::max<std::size_t>(1, segment_len - overlap);
    const std::size_t bins = segment_len / 2 + 1;

    Periodogram out;
    out.sample_rate = signal.sample_rate;
    out.resolution_hz = signal.sample_rate / static_cast<double>(segment_len);
    out.window_name = to_string(window);
    out.segment_len = segment_len;
    out.power.assign(bins, 0.0);
    out.freqs.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) out.freqs[i] = static_cast<double>(i) * out.resolution_hz;

    detail::RealFft fft(segment_len);
    for (std::size_t start = 0; start + segment_len <= k; start += step) {
        double* in = fft.input();
        for (std::size_t i = 0; i < segment_len; ++i) in[i] = signal.samples[start + i] * w[i];
        const auto* spec = fft.execute();
        for (std::size_t i = 0; i < bins; ++i) out.power[i] += std::norm(spec[i]);
        ++out.segment_count;
    }

    const double scale = 1.0 / (signal.sample_rate * u * static_cast<double>(out.segment_count));
    for (std::size_t i = 0; i < bins; ++i) {
        const bool edge = i == 0 || (segment_len % 2 == 0 && i == bins - 1);
        out.power[i] *= (edge ? 1.0 : 2.0) * scale;
    }
    return out;
}

Periodogram periodogram(const SignalRecord& signal)
{
    return periodogram(signal, default_segment_length(signal.size()));
}

double noise_floor_psd(const Periodogram& psd)
{
    if (psd.power.empty()) throw DomainError("noise_floor_psd: empty periodogram");
    std::vector<double> p = psd.power;
    const auto mid = p.begin() + static_cast<std::ptrdiff_t>(p.size() / 2);
    std::nth_element(p.begin(), mid, p.end());
    return *mid;
}

double meas_var_from_floor(double floor, double sample_rate)
{
    return 0.5 * floor * sample_rate;
}

LineEstimates detect_lines(const Periodogram& psd, std::size_t expected_count)
{
    psd.validate();
    if (expected_count == 0) throw DomainError("detect_lines: expected_count must be >= 1");
    auto peaks = local_maxima(psd);
    if (peaks.size() < expected_count) {
        throw DomainError("detect_lines: found " + std::to_string(peaks.size()) + " peaks, expected " +
                          std::to_string(expected_count));
    }
    // Strongest first; equal power goes to the lower frequency.
    std::stable_sort(peaks.begin(), peaks.end(),
                     [&](std::size_t a, std::size_t b) { return psd.power[a] > psd.power[b]; });
    peaks.resize(expected_count);
    auto out = finish(psd, std::move(peaks), noise_floor_psd(psd));
    if (out.size() != expected_count) {
        throw DomainError("detect_lines: found " + std::to_string(out.size()) + " lines above the floor, expected " +
                          std::to_string(expected_count));
    }
    return out;
}

LineEstimates detect_lines_above(const Periodogram& psd, double min_prominence_db)
{
    psd.validate();
    const double floor = noise_floor_psd(psd);
    const double threshold = floor * std::pow(10.0, min_prominence_db / 10.0);
    std::vector<std::size_t> peaks;
    for (std::size_t p : local_maxima(psd)) {
        if (psd.power[p] > threshold) peaks.push_back(p);
    }
    return finish(psd, std::move(peaks), floor);
}

CombSpec comb_from_lines(const LineEstimates& lines, const std::vector<int>& line_indices, double sample_rate)
{
    if (lines.size() != line_indices.size()) {
        throw DimensionError("comb_from_lines: " + std::to_string(lines.size()) + " lines detected, " +
                             std::to_string(line_indices.size()) + " indices configured");
    }
    std::vector<int> sorted = line_indices;
    std::sort(sorted.begin(), sorted.end());
    CombSpec spec;
    spec.line_indices = sorted;
    spec.sample_rate = sample_rate;
    for (const auto& l : lines.lines) {
        spec.amplitudes.push_back(l.amplitude);
        spec.rel_angular_freqs.push_back(2.0 * std::numbers::pi * l.freq_hz);
    }
    spec.validate();
    return spec;
}

} // namespace combtrack
