#include "combtrack/comb_model.hpp"

#include "combtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace combtrack {

void CombSpec::validate() const
{
    const auto m = line_indices.size();
    if (amplitudes.size() != m || rel_angular_freqs.size() != m) {
        throw DimensionError("CombSpec: per-line lists differ in length (indices " + std::to_string(m) +
                             ", amplitudes " + std::to_string(amplitudes.size()) + ", frequencies " +
                             std::to_string(rel_angular_freqs.size()) + ")");
    }
    if (m == 0) throw DomainError("CombSpec: no lines");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
        throw DomainError("CombSpec: sample_rate must be positive");
    }
    const double nyquist = std::numbers::pi * sample_rate;
    for (std::size_t i = 0; i < m; ++i) {
        if (!(amplitudes[i] >= 0.0) || !std::isfinite(amplitudes[i])) {
            throw DomainError("CombSpec: amplitude of line " + std::to_string(line_indices[i]) +
                              " must be finite and >= 0");
        }
        if (!std::isfinite(rel_angular_freqs[i]) || std::abs(rel_angular_freqs[i]) >= nyquist) {
            throw DomainError("CombSpec: line " + std::to_string(line_indices[i]) +
                              " is not representable below Nyquist");
        }
        if (i > 0 && !(rel_angular_freqs[i] > rel_angular_freqs[i - 1])) {
            throw DomainError("CombSpec: relative frequencies must be strictly increasing");
        }
    }
}

void NoiseModel::validate() const
{
    if (process_cov.rows() != process_cov.cols()) {
        throw DimensionError("NoiseModel: process covariance is not square");
    }
    if (!process_cov.allFinite()) throw DomainError("NoiseModel: process covariance is not finite");
    const double scale = std::max(process_cov.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if ((process_cov - process_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw DomainError("NoiseModel: process covariance is not symmetric");
    }
    if (process_cov.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(process_cov, Eigen::EigenvaluesOnly);
        const double trace = process_cov.trace();
        if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(trace, 0.0)) {
            throw DomainError("NoiseModel: process covariance is not positive semidefinite");
        }
    }
    if (!(meas_var >= 0.0) || !std::isfinite(meas_var)) {
        throw DomainError("NoiseModel: meas_var must be finite and >= 0");
    }
}

void PhaseTrajectories::validate() const
{
    if (static_cast<std::size_t>(phases.cols()) != line_indices.size()) {
        throw DimensionError("PhaseTrajectories: column count differs from line_indices");
    }
    if (!phases.allFinite()) throw DomainError("PhaseTrajectories: non-finite phase");
}

void SignalRecord::validate() const
{
    if (samples.size() < 2) throw DomainError("SignalRecord: at least two samples required");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
        throw DomainError("SignalRecord: sample_rate must be positive");
    }
    for (double y : samples) {
        if (!std::isfinite(y)) throw DomainError("SignalRecord: non-finite sample");
    }
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

std::vector<int> symmetric_line_indices(int half_width)
{
    std::vector<int> out;
    for (int m = -half_width; m <= half_width; ++m) out.push_back(m);
    return out;
}

double fitted_center_hz(const std::vector<int>& line_indices, double spacing_hz, double center_hz,
                        double sample_rate)
{
    if (line_indices.empty()) return center_hz;
    const auto [lo, hi] = std::minmax_element(line_indices.begin(), line_indices.end());
    const double top = center_hz + *hi * spacing_hz;
    const double bottom = center_hz + *lo * spacing_hz;
    const double margin = spacing_hz;
    if (bottom - margin > 0.0 && top + margin < 0.5 * sample_rate) return center_hz;
    return 0.25 * sample_rate;
}

CombSpec make_comb_grid(const std::vector<int>& line_indices, double spacing_hz, double center_hz,
                        double sample_rate, double amplitude)
{
    CombSpec spec;
    spec.line_indices = line_indices;
    spec.sample_rate = sample_rate;
    spec.amplitudes.assign(line_indices.size(), amplitude);
    for (int m : line_indices) {
        spec.rel_angular_freqs.push_back(2.0 * std::numbers::pi * (center_hz + m * spacing_hz));
    }
    spec.validate();
    return spec;
}

double amplitude_from_powers(double responsivity, double signal_power, double lo_power)
{
    if (responsivity < 0.0 || signal_power < 0.0 || lo_power < 0.0) {
        throw DomainError("amplitude_from_powers: inputs must be >= 0");
    }
    return 2.0 * responsivity * std::sqrt(signal_power * lo_power);
}

Eigen::MatrixXd true_process_covariance(const ElectroOpticNoiseParams& params,
                                        const std::vector<int>& line_indices)
{
    const auto m = static_cast<Eigen::Index>(line_indices.size());
    Eigen::MatrixXd q(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            q(i, j) = params.var_carrier +
                      static_cast<double>(line_indices[i]) * static_cast<double>(line_indices[j]) * params.var_rf;
        }
    }
    return q;
}

PhaseTrajectories generate_wiener_phases(const CombSpec& spec, const ElectroOpticNoiseParams& params,
                                         std::size_t steps, std::uint64_t seed)
{
    spec.validate();
    if (steps < 2) throw DomainError("generate_wiener_phases: at least two steps required");
    if (params.var_carrier < 0.0 || params.var_rf < 0.0) {
        throw DomainError("generate_wiener_phases: variances must be >= 0");
    }

    auto rng = make_engine(seed, 0x70686173ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd_c = std::sqrt(params.var_carrier);
    const double sd_rf = std::sqrt(params.var_rf);

    const auto m = static_cast<Eigen::Index>(spec.line_count());
    PhaseTrajectories out;
    out.sample_rate = spec.sample_rate;
    out.line_indices = spec.line_indices;
    out.phases.setZero(static_cast<Eigen::Index>(steps), m);

    double carrier = 0.0;
    double rf = 0.0;
    for (std::size_t k = 1; k < steps; ++k) {
        carrier += sd_c * normal(rng);
        rf += sd_rf * normal(rng);
        for (Eigen::Index j = 0; j < m; ++j) {
            out.phases(static_cast<Eigen::Index>(k), j) = carrier + spec.line_indices[j] * rf;
        }
    }
    return out;
}

PhaseTrajectories generate_correlated_phases(const CombSpec& spec, const Eigen::MatrixXd& process_cov,
                                             std::size_t steps, std::uint64_t seed)
{
    spec.validate();
    if (steps < 2) throw DomainError("generate_correlated_phases: at least two steps required");
    NoiseModel{process_cov, 0.0}.validate();
    const auto m = static_cast<Eigen::Index>(spec.line_count());
    if (process_cov.rows() != m) throw DimensionError("generate_correlated_phases: Q size differs from line count");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(process_cov);
    const Eigen::MatrixXd factor =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    auto rng = make_engine(seed, 0x70686173ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    PhaseTrajectories out;
    out.sample_rate = spec.sample_rate;
    out.line_indices = spec.line_indices;
    out.phases.setZero(static_cast<Eigen::Index>(steps), m);
    Eigen::VectorXd z(m);
    for (std::size_t k = 1; k < steps; ++k) {
        for (Eigen::Index j = 0; j < m; ++j) z[j] = normal(rng);
        const auto row = static_cast<Eigen::Index>(k);
        out.phases.row(row) = out.phases.row(row - 1) + (factor * z).transpose();
    }
    return out;
}

SignalRecord synthesize_photocurrent(const CombSpec& spec, const PhaseTrajectories& phases, double meas_var,
                                     std::uint64_t seed)
{
    spec.validate();
    phases.validate();
    if (phases.line_count() != spec.line_count()) {
        throw DimensionError("synthesize_photocurrent: phase trajectories have " +
                             std::to_string(phases.line_count()) + " lines, comb has " +
                             std::to_string(spec.line_count()));
    }
    if (phases.steps() < 2) throw DomainError("synthesize_photocurrent: at least two steps required");
    if (!(meas_var >= 0.0)) throw DomainError("synthesize_photocurrent: meas_var must be >= 0");

    auto rng = make_engine(seed, 0x6e6f6973ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(meas_var);
    const double ts = spec.sample_period();

    SignalRecord out;
    out.sample_rate = spec.sample_rate;
    out.source = "simulated";
    out.seed = seed;
    out.samples.resize(phases.steps());
    for (std::size_t k = 0; k < phases.steps(); ++k) {
        double y = 0.0;
        for (std::size_t j = 0; j < spec.line_count(); ++j) {
            const double theta = spec.rel_angular_freqs[j] * ts * static_cast<double>(k) +
                                 phases.phases(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            y += spec.amplitudes[j] * std::sin(theta);
        }
        out.samples[k] = y + (sd > 0.0 ? sd * normal(rng) : 0.0);
    }
    return out;
}

std::vector<double> per_line_snr_db(const CombSpec& spec, double meas_var)
{
    if (!(meas_var >= 0.0)) throw DomainError("per_line_snr_db: meas_var must be >= 0");
    std::vector<double> out;
    out.reserve(spec.line_count());
    for (double a : spec.amplitudes) {
        if (meas_var == 0.0) {
            out.push_back(std::numeric_limits<double>::infinity());
        } else {
            out.push_back(10.0 * std::log10(a * a / (2.0 * meas_var)));
        }
    }
    return out;
}

double average_snr_db(const CombSpec& spec, double meas_var)
{
    const auto snr = per_line_snr_db(spec, meas_var);
    if (snr.empty()) throw DomainError("average_snr_db: no lines");
    double sum = 0.0;
    for (double s : snr) sum += s;
    return sum / static_cast<double>(snr.size());
}

double meas_var_for_average_snr(const CombSpec& spec, double target_db)
{
    if (spec.amplitudes.empty()) throw DomainError("meas_var_for_average_snr: no lines");
    double mean_power_db = 0.0;
    for (double a : spec.amplitudes) {
        if (!(a > 0.0)) throw DomainError("meas_var_for_average_snr: every amplitude must be > 0");
        mean_power_db += 10.0 * std::log10(a * a / 2.0);
    }
    mean_power_db /= static_cast<double>(spec.amplitudes.size());
    return std::pow(10.0, (mean_power_db - target_db) / 10.0);
}

} // namespace combtrack
