#pragma once

#include "combtrack/baseline.hpp"
#include "combtrack/em.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace combtrack {

struct CombConfig {
    std::vector<int> line_indices = symmetric_line_indices(24);
    double spacing_hz = 50e6;
    double center_hz = 4.5e9; ///< moved to fs/4 when the comb does not fit below Nyquist
    double sample_rate_hz = 10e9;
    double amplitude = 1.0;
};

struct NoiseConfig {
    double var_carrier = 4e-7;
    double var_rf = 4e-7 / 64.0;
    std::optional<Eigen::MatrixXd> process_cov; ///< replaces the two variances when set
    std::optional<double> meas_var;
    std::vector<double> snr_db;                 ///< target average SNRs; exclusive with meas_var
};

struct EkfConfig {
    std::string init = "warm"; ///< warm: start from the conventional phases; zero: zero mean
    double init_phase_sd = 0.2;
};

struct SpectralConfig {
    std::string line_source = "psd"; ///< psd: detect lines; config: use the comb section
    bool refine_with_baseline = true; ///< correct detected frequencies by the baseline phase slope
    bool equidistant = true;          ///< after refining, fit the frequencies to an evenly spaced grid
};

struct AnalysisConfig {
    std::string ml_correlation = "learned_q"; ///< or smoothed_increments
    int reference_index = 0;
};

// Unset fields take per-figure defaults. Figure 2: {16.53, 23.2, 29.05} dB, 4 seeds, 50000
// samples, noise variances from the noise section. Figure 3: 16.53 dB, 200 seeds, 2000
// samples, var_carrier 1.28e-7 and var_rf 2e-9.
struct FigureConfig {
    int id = 2;
    std::vector<double> snr_db;
    std::optional<int> seeds;
    std::optional<std::size_t> samples;
    std::optional<double> var_carrier;
    std::optional<double> var_rf;
};

struct ExperimentConfig {
    CombConfig comb;
    NoiseConfig noise;
    std::size_t samples = 20000;
    std::uint64_t seed = 1;
    std::string method = "ml";
    EmOptions em;
    double init_linewidth_hz = 10e3;
    int restarts = 1;
    BaselineOptions baseline;
    EkfConfig ekf;
    SpectralConfig spectral;
    AnalysisConfig analysis;
    FigureConfig figure;
    std::string signal_path;
    std::string output_dir = "out";

    /// Throws ConfigError on any inconsistent value.
    void validate() const;
};

/// Parses a JSON config. Unknown keys and wrong types raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config as JSON text; parse_config accepts it back.
std::string config_to_json(const ExperimentConfig& config, int indent = 2);

std::vector<double> figure_snrs(const ExperimentConfig& config);
int figure_seeds(const ExperimentConfig& config);
std::size_t figure_samples(const ExperimentConfig& config);
/// Copy of the config with the figure's noise variances and SNR list in the noise section.
ExperimentConfig figure_config(const ExperimentConfig& config);

} // namespace combtrack
