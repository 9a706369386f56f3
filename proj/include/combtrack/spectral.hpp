#pragma once

#include "combtrack/comb_model.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace combtrack {

enum class Window { hann, rectangular };

Window parse_window(const std::string& name);
std::string to_string(Window w);

/// One-sided Welch PSD estimate in units^2/Hz.
struct Periodogram {
    std::vector<double> freqs; ///< bin centers, Hz
    std::vector<double> power;
    double resolution_hz = 0.0;
    double sample_rate = 0.0;
    std::string window_name;
    std::size_t segment_len = 0;
    std::size_t segment_count = 0;

    std::size_t size() const { return freqs.size(); }
    void validate() const;
};

/// Largest power of two not above K / 8 (at least 8, at most K).
std::size_t default_segment_length(std::size_t samples);

Periodogram periodogram(const SignalRecord& signal, std::size_t segment_len, double overlap_fraction = 0.5,
                        Window window = Window::hann);
/// Hann, 50% overlap, default_segment_length.
Periodogram periodogram(const SignalRecord& signal);

struct LineEstimate {
    double freq_hz = 0.0;
    double amplitude = 0.0;
    double snr_db = 0.0; ///< a^2 / 2 over the white-noise power implied by the floor
};

struct LineEstimates {
    std::vector<LineEstimate> lines; ///< ascending frequency
    double noise_floor = 0.0;        ///< PSD level between lines, units^2/Hz

    std::size_t size() const { return lines.size(); }
};

/// Median PSD level. The comb occupies few bins, so this tracks the white-noise floor.
double noise_floor_psd(const Periodogram& psd);

/// Total white-noise variance sigma^2 implied by a one-sided PSD floor.
double meas_var_from_floor(double floor, double sample_rate);

/// The expected_count strongest local maxima, refined by a parabola through the log power
/// of three bins. Throws when fewer maxima exist.
LineEstimates detect_lines(const Periodogram& psd, std::size_t expected_count);

/// Every local maximum at least min_prominence_db above the noise floor.
LineEstimates detect_lines_above(const Periodogram& psd, double min_prominence_db);

/// Assigns line indices in frequency order and builds the comb seen by the filter.
CombSpec comb_from_lines(const LineEstimates& lines, const std::vector<int>& line_indices, double sample_rate);

} // namespace combtrack
