#include "combtrack/analysis.hpp"

#include "combtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace combtrack {

namespace {

Eigen::Index column_of(const std::vector<int>& indices, int line)
{
    const auto it = std::find(indices.begin(), indices.end(), line);
    if (it == indices.end()) throw DomainError("reference line " + std::to_string(line) + " is not in the comb");
    return static_cast<Eigen::Index>(it - indices.begin());
}

// Rows [guard, K - guard) of the trajectories.
Eigen::Index kept_rows(const PhaseTrajectories& t, Eigen::Index& first)
{
    const auto k = static_cast<Eigen::Index>(t.steps());
    const auto g = static_cast<Eigen::Index>(t.guard_samples);
    if (2 * g >= k) throw DomainError("guard removes every sample");
    first = g;
    return k - 2 * g;
}

} // namespace

void CorrelationMatrix::validate() const
{
    const auto m = static_cast<Eigen::Index>(line_indices.size());
    if (values.rows() != m || values.cols() != m) throw DimensionError("CorrelationMatrix: size differs from line count");
}

CorrelationMatrix correlation_from_covariance(const Eigen::MatrixXd& q, const std::vector<int>& line_indices)
{
    const auto m = static_cast<Eigen::Index>(line_indices.size());
    if (q.rows() != m || q.cols() != m) throw DimensionError("correlation_from_covariance: Q size differs from line count");
    Eigen::VectorXd sd(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(q(i, i) > 0.0)) {
            throw DomainError("correlation_from_covariance: zero variance for line " +
                              std::to_string(line_indices[static_cast<std::size_t>(i)]));
        }
        sd[i] = std::sqrt(q(i, i));
    }
    CorrelationMatrix out;
    out.line_indices = line_indices;
    out.values.resize(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            // Average the two triangles so the result is exactly symmetric.
            out.values(i, j) = i == j ? 1.0 : std::clamp(0.5 * (q(i, j) + q(j, i)) / (sd[i] * sd[j]), -1.0, 1.0);
        }
    }
    return out;
}

CorrelationMatrix sample_increment_correlation(const PhaseTrajectories& trajectories)
{
    trajectories.validate();
    Eigen::Index first = 0;
    const Eigen::Index n = kept_rows(trajectories, first);
    if (n < 3) throw DomainError("sample_increment_correlation: at least three kept samples required");
    const auto& p = trajectories.phases;
    Eigen::MatrixXd d = p.middleRows(first + 1, n - 1) - p.middleRows(first, n - 1);
    d.rowwise() -= d.colwise().mean();
    const Eigen::MatrixXd cov = d.transpose() * d / static_cast<double>(n - 2);
    return correlation_from_covariance(cov, trajectories.line_indices);
}

PhaseTrajectories differential_phases(const PhaseTrajectories& trajectories, int reference_index)
{
    trajectories.validate();
    const Eigen::Index ref = column_of(trajectories.line_indices, reference_index);
    PhaseTrajectories out = trajectories;
    const Eigen::VectorXd ref_col = trajectories.phases.col(ref);
    out.phases.colwise() -= ref_col;
    out.phases.col(ref).setZero();
    return out;
}

VarianceCurve empirical_variance_curve(const PhaseTrajectories& differential, int reference_index)
{
    differential.validate();
    const Eigen::Index ref = column_of(differential.line_indices, reference_index);
    Eigen::Index first = 0;
    const Eigen::Index n = kept_rows(differential, first);
    if (n < 2) throw DomainError("empirical_variance_curve: at least two kept samples required");

    VarianceCurve out;
    out.line_indices = differential.line_indices;
    out.reference_index = reference_index;
    for (Eigen::Index j = 0; j < differential.phases.cols(); ++j) {
        if (j == ref) {
            out.variance.push_back(0.0);
            continue;
        }
        const auto col = differential.phases.col(j).segment(first, n);
        const double mean = col.mean();
        out.variance.push_back((col.array() - mean).square().sum() / static_cast<double>(n - 1));
    }
    return out;
}

VarianceCurve expected_variance_curve(const std::vector<int>& line_indices, double var_rf, std::size_t samples,
                                      int reference_index)
{
    VarianceCurve out;
    out.line_indices = line_indices;
    out.reference_index = reference_index;
    for (int m : line_indices) {
        const double dm = static_cast<double>(m - reference_index);
        out.variance.push_back(dm * dm * var_rf * (static_cast<double>(samples) + 1.0) / 6.0);
    }
    return out;
}

MatrixError matrix_error(const CorrelationMatrix& a, const CorrelationMatrix& b)
{
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
        throw DimensionError("matrix_error: " + std::to_string(a.values.rows()) + "x" +
                             std::to_string(a.values.cols()) + " vs " + std::to_string(b.values.rows()) + "x" +
                             std::to_string(b.values.cols()));
    }
    const Eigen::MatrixXd d = a.values - b.values;
    return {d.norm(), d.size() > 0 ? d.cwiseAbs().maxCoeff() : 0.0};
}

double quadratic_fit_r2(const VarianceCurve& curve)
{
    const auto n = static_cast<Eigen::Index>(curve.variance.size());
    if (n < 3) throw DomainError("quadratic_fit_r2: at least three points required");
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = curve.line_indices[static_cast<std::size_t>(i)];
        a.row(i) << 1.0, m, m * m;
        y[i] = curve.variance[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
    const double ss_res = (y - a * coef).squaredNorm();
    const double ss_tot = (y.array() - y.mean()).square().sum();
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

} // namespace combtrack
