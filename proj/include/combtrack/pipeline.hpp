#pragma once

#include "combtrack/analysis.hpp"
#include "combtrack/baseline.hpp"
#include "combtrack/config.hpp"
#include "combtrack/em.hpp"
#include "combtrack/spectral.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace combtrack {

/// Comb of the config, recentred when it does not fit below Nyquist.
CombSpec configured_comb(const CombConfig& comb, double sample_rate);
CombSpec configured_comb(const ExperimentConfig& config);

Eigen::MatrixXd configured_process_cov(const ExperimentConfig& config);

struct NoiseTarget {
    double meas_var = 0.0;
    std::optional<double> snr_db; ///< set when meas_var was solved from an SNR target
};

/// One entry per configured SNR, or the single configured meas_var.
std::vector<NoiseTarget> noise_targets(const ExperimentConfig& config);

struct Simulation {
    CombSpec spec;
    NoiseModel truth;
    PhaseTrajectories phases;
    SignalRecord signal;
};

Simulation simulate(const ExperimentConfig& config, double meas_var, std::uint64_t seed,
                    std::optional<std::size_t> samples = std::nullopt);

struct Characterization {
    std::string method;
    CombSpec spec;                     ///< comb seen by the estimators
    std::optional<LineEstimates> lines; ///< when detected from the PSD
    PhaseTrajectories phases;          ///< guard rows marked, excluded from statistics
    CorrelationMatrix correlation;
    VarianceCurve variance;
    std::optional<EmResult> em;
    double meas_var = 0.0; ///< learned (ml) or PSD-floor (conventional) noise variance
    double seconds = 0.0;
};

/// Spectral estimation (unless known_spec is given), then the chosen method, then the
/// correlation and differential-variance statistics.
Characterization characterize(const SignalRecord& signal, const ExperimentConfig& config, const std::string& method,
                              const CombSpec* known_spec = nullptr);

/// Belief at k = 0 used by the ml method.
GaussianBelief initial_belief(const ExperimentConfig& config, const PhaseTrajectories& conventional);

struct Figure2Panel {
    double snr_db = 0.0;
    double meas_var = 0.0;
    CorrelationMatrix truth;
    CorrelationMatrix conventional; ///< seed average
    CorrelationMatrix ml;           ///< seed average
    std::vector<std::uint64_t> seeds;
    std::vector<MatrixError> conventional_errors; ///< per seed, against truth
    std::vector<MatrixError> ml_errors;
    MatrixError mean_conventional;
    MatrixError mean_ml;
};

std::vector<Figure2Panel> run_figure2(const ExperimentConfig& config);

struct Figure3Result {
    double snr_db = 0.0;
    double meas_var = 0.0;
    std::size_t kept_samples = 0;
    VarianceCurve expected;     ///< m^2 var_rf (n + 1) / 6
    VarianceCurve truth;        ///< seed average over the true phases
    VarianceCurve conventional; ///< seed average
    VarianceCurve ml;           ///< seed average
    int seeds = 0;
};

Figure3Result run_figure3(const ExperimentConfig& config);

void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void cmd_characterize(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void cmd_reproduce_fig(const ExperimentConfig& config, const std::filesystem::path& out_dir);

} // namespace combtrack
