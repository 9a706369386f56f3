#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace combtrack {

/// Geometry of the down-converted comb as seen by the ADC.
///
/// Line m contributes a_m sin(dw_m * k / fs + phi_k^m) to sample k, where dw_m is the
/// relative angular frequency in rad/s.
struct CombSpec {
    std::vector<int> line_indices;
    std::vector<double> amplitudes;
    std::vector<double> rel_angular_freqs; ///< rad/s
    double sample_rate = 0.0;              ///< Hz

    std::size_t line_count() const { return line_indices.size(); }
    double sample_period() const { return 1.0 / sample_rate; }

    /// Throws DimensionError / DomainError when an invariant is violated.
    void validate() const;
};

/// Process covariance Q (rad^2 per sample) and measurement variance of the photocurrent.
struct NoiseModel {
    Eigen::MatrixXd process_cov;
    double meas_var = 0.0;

    void validate() const;
};

/// Variances (rad^2 per sample) of the carrier and RF Wiener increments of an
/// electro-optic comb, whose line m carries phi_C + m * phi_RF.
struct ElectroOpticNoiseParams {
    double var_carrier = 0.0;
    double var_rf = 0.0;
};

/// K x M matrix of unwrapped phases, one column per comb line.
struct PhaseTrajectories {
    Eigen::MatrixXd phases;
    double sample_rate = 0.0;
    std::vector<int> line_indices;
    /// Samples at each end that carry edge artifacts and are excluded from statistics.
    std::size_t guard_samples = 0;

    std::size_t steps() const { return static_cast<std::size_t>(phases.rows()); }
    std::size_t line_count() const { return static_cast<std::size_t>(phases.cols()); }

    void validate() const;
};

/// Scalar photocurrent samples y_k.
struct SignalRecord {
    std::vector<double> samples;
    double sample_rate = 0.0;
    std::string source = "simulated";
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return samples.size(); }

    void validate() const;
};

/// Engine for an independent random stream derived from (seed, stream).
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream);

/// Evenly spaced comb: line m sits at center_hz + m * spacing_hz.
CombSpec make_comb_grid(const std::vector<int>& line_indices, double spacing_hz, double center_hz,
                        double sample_rate, double amplitude = 1.0);

/// Default geometry: 49 lines (-24..24) spaced 50 MHz around 4.5 GHz, recentred at
/// fs/4 when that band does not fit below Nyquist (it does not at the default 10 GS/s).
double fitted_center_hz(const std::vector<int>& line_indices, double spacing_hz, double center_hz,
                        double sample_rate);

std::vector<int> symmetric_line_indices(int half_width);

/// a_m = 2 R sqrt(P_s P_LO).
double amplitude_from_powers(double responsivity, double signal_power, double lo_power);

/// Q_ij = var_carrier + i * j * var_rf.
Eigen::MatrixXd true_process_covariance(const ElectroOpticNoiseParams& params,
                                        const std::vector<int>& line_indices);

/// Draws phi_k^m = phi_k^C + m phi_k^RF with phi_0 = 0 and Gaussian increments.
PhaseTrajectories generate_wiener_phases(const CombSpec& spec, const ElectroOpticNoiseParams& params,
                                         std::size_t steps, std::uint64_t seed);

/// Random walk with increments ~ N(0, Q) for an arbitrary PSD Q; phi_0 = 0.
PhaseTrajectories generate_correlated_phases(const CombSpec& spec, const Eigen::MatrixXd& process_cov,
                                             std::size_t steps, std::uint64_t seed);

/// y_k = sum_m a_m sin(dw_m T_s k + phi_k^m) + n_k, n_k ~ N(0, meas_var).
SignalRecord synthesize_photocurrent(const CombSpec& spec, const PhaseTrajectories& phases,
                                     double meas_var, std::uint64_t seed);

/// SNR_m = 10 log10(a_m^2 / (2 meas_var)). Returns +inf for every line when meas_var == 0.
std::vector<double> per_line_snr_db(const CombSpec& spec, double meas_var);

/// Arithmetic mean of the per-line dB values; +inf when meas_var == 0.
double average_snr_db(const CombSpec& spec, double meas_var);

/// Inverse of average_snr_db for a fixed set of amplitudes.
double meas_var_for_average_snr(const CombSpec& spec, double target_db);

} // namespace combtrack
