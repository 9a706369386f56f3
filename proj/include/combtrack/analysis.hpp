#pragma once

#include "combtrack/comb_model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace combtrack {

struct CorrelationMatrix {
    Eigen::MatrixXd values;
    std::vector<int> line_indices;

    void validate() const;
};

struct VarianceCurve {
    std::vector<int> line_indices;
    std::vector<double> variance; ///< rad^2, unbiased over the kept samples
    int reference_index = 0;
};

struct MatrixError {
    double frobenius = 0.0;
    double max_abs = 0.0;
};

CorrelationMatrix correlation_from_covariance(const Eigen::MatrixXd& q, const std::vector<int>& line_indices);

/// Pearson correlation of first differences. Rows inside the trajectories' guard are skipped.
CorrelationMatrix sample_increment_correlation(const PhaseTrajectories& trajectories);

/// Columns minus the reference line's column.
PhaseTrajectories differential_phases(const PhaseTrajectories& trajectories, int reference_index = 0);

/// Per-line sample variance over time of differential phases, guard rows skipped.
VarianceCurve empirical_variance_curve(const PhaseTrajectories& differential, int reference_index = 0);

/// E[sample variance] of m * (a random walk of per-step variance var_rf) over n kept samples:
/// m^2 var_rf (n + 1) / 6.
VarianceCurve expected_variance_curve(const std::vector<int>& line_indices, double var_rf, std::size_t samples,
                                      int reference_index = 0);

MatrixError matrix_error(const CorrelationMatrix& a, const CorrelationMatrix& b);

/// Coefficient of determination of a least-squares fit c0 + c1 m + c2 m^2.
double quadratic_fit_r2(const VarianceCurve& curve);

} // namespace combtrack
