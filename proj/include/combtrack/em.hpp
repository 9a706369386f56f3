#pragma once

#include "combtrack/comb_model.hpp"
#include "combtrack/ekf.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace combtrack {

enum class QStructure {
    full,  ///< unconstrained symmetric PSD matrix
    rank2, ///< var_carrier * 1 1^T + var_rf * m m^T
};

enum class EmAcceleration {
    none,    ///< plain EM
    squarem, ///< squared extrapolation between EM steps, rejected when the likelihood drops
};

struct EmOptions {
    int max_iters = 100;         ///< E-step evaluations
    double rel_loglik_tol = 1e-6;
    QStructure q_structure = QStructure::rank2;
    double psd_floor = 0.0;      ///< eigenvalue clip applied to every learned Q
    EmAcceleration acceleration = EmAcceleration::squarem;

    void validate() const;
};

QStructure parse_q_structure(const std::string& name);
std::string to_string(QStructure q);
EmAcceleration parse_acceleration(const std::string& name);
std::string to_string(EmAcceleration a);

/// One accepted EM iterate.
struct EmTraceEntry {
    int iteration = 0;
    double loglik = 0.0;
    double sigma2 = 0.0;
    double q_trace = 0.0;
    double q_eig1 = 0.0; ///< largest eigenvalue of Q
    double q_eig2 = 0.0; ///< second largest
    bool extrapolated = false;
};

struct EmTrace {
    std::vector<EmTraceEntry> entries;
    int evaluations = 0; ///< E-steps run, including rejected extrapolations
    bool converged = false;
    std::string warning;

    std::size_t size() const { return entries.size(); }
};

struct EmResult {
    NoiseModel noise;
    EmTrace trace;
    SmootherResult smoother; ///< E-step at the returned parameters
};

/// Forward filtering and backward smoothing at the current parameters.
SmootherResult e_step(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                      const GaussianBelief& init);
SmootherResult e_step(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& noise,
                      const GaussianBelief& init);

/// Closed-form parameter update. Uses the smoother's moments when present, otherwise
/// evaluates them from its per-step covariances.
NoiseModel m_step(const SmootherResult& smoother, const SignalRecord& signal, const std::vector<int>& line_indices,
                  const EmOptions& options);
NoiseModel m_step(const SmootherResult& smoother, const SignalRecord& signal, const CombSpec& spec,
                  const EmOptions& options);

/// Symmetrize and raise every eigenvalue to at least floor.
Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& q, double floor);

/// Least-squares fit of var_carrier * 1 1^T + var_rf * m m^T with non-negative coefficients.
ElectroOpticNoiseParams fit_rank2(const Eigen::MatrixXd& q, const std::vector<int>& line_indices);

/// Diagonal Q of 2 pi linewidth_hz / fs rad^2 per sample.
Eigen::MatrixXd initial_process_cov(std::size_t lines, double sample_rate, double linewidth_hz = 10e3);

EmTraceEntry summarize(const NoiseModel& noise, double loglik, int iteration);

EmResult run_em(const SignalRecord& signal, const MeasurementModel& model, const std::vector<int>& line_indices,
                const NoiseModel& init_noise, const GaussianBelief& init, const EmOptions& options);
EmResult run_em(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& init_noise,
                const GaussianBelief& init, const EmOptions& options);

} // namespace combtrack
