#pragma once

#include "combtrack/comb_model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace combtrack {

/// Mean phase vector and its covariance.
struct GaussianBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Scalar measurement y_k = h(x_k, k) + n_k. Implementations must be stateless.
class MeasurementModel {
public:
    virtual ~MeasurementModel() = default;
    virtual std::size_t dim() const = 0;
    /// Returns h(x, k) and writes dh/dx into gradient (length dim()).
    virtual double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t k,
                            Eigen::Ref<Eigen::VectorXd> gradient) const = 0;
};

/// h(x, k) = sum_m a_m sin(dw_m T_s k + x_m).
class CombMeasurement final : public MeasurementModel {
public:
    explicit CombMeasurement(const CombSpec& spec);

    std::size_t dim() const override { return amplitudes_.size(); }
    double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t k,
                    Eigen::Ref<Eigen::VectorXd> gradient) const override;

private:
    std::vector<double> amplitudes_;
    std::vector<double> rel_angular_freqs_;
    double sample_period_;
};

/// h(x, k) = H_k x. One row applies to every step; otherwise row k is used at step k.
class LinearMeasurement final : public MeasurementModel {
public:
    explicit LinearMeasurement(Eigen::MatrixXd rows);

    std::size_t dim() const override { return static_cast<std::size_t>(rows_.cols()); }
    double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t k,
                    Eigen::Ref<Eigen::VectorXd> gradient) const override;

private:
    Eigen::MatrixXd rows_;
};

struct MeasurementEval {
    double predicted = 0.0;
    Eigen::VectorXd gradient;
};

/// h and its gradient for the comb model at one time index.
MeasurementEval measurement_and_jacobian(const Eigen::VectorXd& mean, std::size_t k, const CombSpec& spec);

/// Identity transition: the mean is kept and Q is added to the covariance.
GaussianBelief predict(const GaussianBelief& belief, const Eigen::MatrixXd& process_cov);

struct UpdateResult {
    GaussianBelief belief;
    double innovation = 0.0;
    double innovation_var = 0.0;
    double log_density = 0.0;
};

UpdateResult update(const GaussianBelief& belief, double y, std::size_t k, const MeasurementModel& model,
                    double meas_var);
UpdateResult update(const GaussianBelief& belief, double y, std::size_t k, const CombSpec& spec,
                    double meas_var);

struct FilterOptions {
    /// Keep the K predicted and updated covariance matrices. Needed by rts_smooth.
    bool store_covariances = true;
};

/// Output of the forward pass. Row k of each K x M matrix is step k.
struct FilterResult {
    Eigen::MatrixXd predicted_means;
    Eigen::MatrixXd updated_means;
    std::vector<Eigen::MatrixXd> predicted_covs;
    std::vector<Eigen::MatrixXd> updated_covs;
    /// Linearization used at each step: h(predicted mean) and its gradient.
    Eigen::VectorXd predicted_measurements;
    Eigen::MatrixXd jacobians;
    Eigen::VectorXd innovations;
    Eigen::VectorXd innovation_vars;
    double log_likelihood = 0.0;

    std::size_t steps() const { return static_cast<std::size_t>(innovations.size()); }
    bool has_covariances() const { return !predicted_covs.empty(); }
    GaussianBelief predicted(std::size_t k) const;
    GaussianBelief updated(std::size_t k) const;
};

/// Sums over the record that the closed-form M-step needs.
struct SmootherMoments {
    /// sum_{k>=1} E[(x_k - x_{k-1})(x_k - x_{k-1})^T | y]
    Eigen::MatrixXd increment_scatter;
    /// sum_k E[(y_k - h_k - H_k (x_k - m_k^-))^2 | y] under the filter linearization.
    double residual_energy = 0.0;
    std::size_t steps = 0;
};

/// Filter linearization carried along so the M-step can be evaluated from per-step covariances.
struct Linearization {
    Eigen::MatrixXd predicted_means;
    Eigen::VectorXd predicted_measurements;
    Eigen::MatrixXd jacobians;
};

struct SmootherResult {
    Eigen::MatrixXd means; ///< K x M
    /// Per-step smoothed covariances; empty for the moment-only smoother.
    std::vector<Eigen::MatrixXd> covs;
    /// lag_one[k] = Cov(x_k, x_{k-1} | y) for k >= 1; lag_one[0] is zero.
    std::vector<Eigen::MatrixXd> lag_one;
    double log_likelihood = 0.0;
    std::optional<SmootherMoments> moments;
    std::optional<Linearization> linearization;

    std::size_t steps() const { return static_cast<std::size_t>(means.rows()); }
    bool has_covariances() const { return !covs.empty(); }
    GaussianBelief smoothed(std::size_t k) const;
};

/// Initial belief: zero mean, diag((pi/2)^2).
GaussianBelief default_initial_belief(std::size_t lines);

/// Extended Kalman filter over the whole record: update at k = 0, then predict/update.
FilterResult run_filter(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                        const GaussianBelief& init, const FilterOptions& options = {});
FilterResult run_filter(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& noise,
                        const GaussianBelief& init, const FilterOptions& options = {});

/// Rauch-Tung-Striebel backward pass with identity transition. Needs stored covariances.
SmootherResult rts_smooth(const FilterResult& filter, const Eigen::MatrixXd& process_cov);

/// Forward EKF plus an adjoint backward pass that yields the same smoothed means and the
/// same M-step moments as run_filter + rts_smooth, in O(M^2) per step and without storing
/// covariance matrices or inverting the predicted covariance. When filtered_means is given
/// it receives the K x M updated means of the forward pass.
SmootherResult smooth_moments(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                              const GaussianBelief& init, Eigen::MatrixXd* filtered_means = nullptr);

/// Moments from stored per-step covariances (the rts_smooth route).
SmootherMoments moments_from_covariances(const SmootherResult& smoothed, const SignalRecord& signal);

} // namespace combtrack
