#pragma once

#include "combtrack/comb_model.hpp"

#include <complex>
#include <cstddef>
#include <vector>

namespace combtrack {

struct BaselineOptions {
    double bandwidth_hz = 30e6;
    double guard_fraction = 0.01; ///< samples dropped at each end for statistics

    void validate() const;
};

/// Samples discarded at each end of a K-sample record.
std::size_t guard_samples(std::size_t samples, double guard_fraction);

/// Analytic signal of one band: whole-record DFT, keep positive-frequency bins inside
/// [center - bw/2, center + bw/2] at twice their weight, inverse DFT.
std::vector<std::complex<double>> bandpass_analytic(const SignalRecord& signal, double center_hz, double bandwidth_hz);

/// Line phase from its analytic signal. The carrier Delta_omega T_s k is removed before
/// unwrapping; pi/2 maps the analytic argument of a sine onto the sine's phase.
std::vector<double> extract_phase(const std::vector<std::complex<double>>& analytic, double rel_angular_freq,
                                  double sample_period);

/// Bandpass plus phase extraction for every line of the comb.
PhaseTrajectories run_conventional(const SignalRecord& signal, const CombSpec& spec, const BaselineOptions& options);

} // namespace combtrack
