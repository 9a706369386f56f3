#include "combtrack/ekf.hpp"

#include "combtrack/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace combtrack {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Covariances inside the hot loops keep only their lower triangle up to date.
using Lower = Eigen::SelfAdjointView<Eigen::MatrixXd, Eigen::Lower>;

void mirror_lower(Eigen::MatrixXd& p)
{
    const Eigen::Index n = p.rows();
    for (Eigen::Index j = 1; j < n; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) p(i, j) = p(j, i);
    }
}

void add_lower(Eigen::MatrixXd& p, const Eigen::MatrixXd& q)
{
    p.triangularView<Eigen::Lower>() += q;
}

// Scalar-measurement Joseph update, P <- (I - g H) P (I - g H)^T + g R g^T, written as
// rank updates of the lower triangle. Returns the innovation variance.
double joseph_update(Eigen::MatrixXd& p, const Eigen::VectorXd& h, double meas_var, Eigen::VectorXd& u,
                     Eigen::VectorXd& gain, std::size_t k)
{
    u.noalias() = p.selfadjointView<Eigen::Lower>() * h;
    const double s = h.dot(u) + meas_var;
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw NumericalError("EKF update at step " + std::to_string(k) +
                             ": innovation variance is not positive (model degenerate)");
    }
    gain = u / s;
    p.selfadjointView<Eigen::Lower>().rankUpdate(gain, u, -1.0);
    p.selfadjointView<Eigen::Lower>().rankUpdate(gain, s);
    return s;
}

double log_density(double innovation, double innovation_var)
{
    return -0.5 * (kLog2Pi + std::log(innovation_var) + innovation * innovation / innovation_var);
}

void check_inputs(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                  const GaussianBelief& init)
{
    signal.validate();
    noise.validate();
    const auto m = static_cast<Eigen::Index>(model.dim());
    if (noise.process_cov.rows() != m) {
        throw DimensionError("process covariance is " + std::to_string(noise.process_cov.rows()) +
                             "-dimensional, model has " + std::to_string(m) + " lines");
    }
    if (init.mean.size() != m || init.cov.rows() != m || init.cov.cols() != m) {
        throw DimensionError("initial belief dimension differs from the model");
    }
}

void check_rates(const SignalRecord& signal, const CombSpec& spec)
{
    if (std::abs(signal.sample_rate - spec.sample_rate) > 1e-12 * spec.sample_rate) {
        throw DomainError("signal sample rate " + std::to_string(signal.sample_rate) +
                          " Hz differs from comb sample rate " + std::to_string(spec.sample_rate) + " Hz");
    }
}

} // namespace

CombMeasurement::CombMeasurement(const CombSpec& spec)
    : amplitudes_(spec.amplitudes), rel_angular_freqs_(spec.rel_angular_freqs), sample_period_(spec.sample_period())
{
    spec.validate();
}

double CombMeasurement::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t k,
                                 Eigen::Ref<Eigen::VectorXd> gradient) const
{
    const double t = static_cast<double>(k);
    double h = 0.0;
    for (std::size_t m = 0; m < amplitudes_.size(); ++m) {
        const double theta = rel_angular_freqs_[m] * sample_period_ * t + x[static_cast<Eigen::Index>(m)];
        h += amplitudes_[m] * std::sin(theta);
        gradient[static_cast<Eigen::Index>(m)] = amplitudes_[m] * std::cos(theta);
    }
    return h;
}

LinearMeasurement::LinearMeasurement(Eigen::MatrixXd rows) : rows_(std::move(rows))
{
    if (rows_.rows() == 0 || rows_.cols() == 0) throw DimensionError("LinearMeasurement: empty map");
}

double LinearMeasurement::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t k,
                                   Eigen::Ref<Eigen::VectorXd> gradient) const
{
    const Eigen::Index row = rows_.rows() == 1 ? 0 : static_cast<Eigen::Index>(k);
    if (row >= rows_.rows()) throw DimensionError("LinearMeasurement: no row for step " + std::to_string(k));
    gradient = rows_.row(row).transpose();
    return rows_.row(row).dot(x);
}

MeasurementEval measurement_and_jacobian(const Eigen::VectorXd& mean, std::size_t k, const CombSpec& spec)
{
    const CombMeasurement model(spec);
    if (mean.size() != static_cast<Eigen::Index>(model.dim())) {
        throw DimensionError("measurement_and_jacobian: mean has wrong dimension");
    }
    MeasurementEval out;
    out.gradient.resize(mean.size());
    out.predicted = model.evaluate(mean, k, out.gradient);
    return out;
}

GaussianBelief predict(const GaussianBelief& belief, const Eigen::MatrixXd& process_cov)
{
    if (process_cov.rows() != belief.cov.rows() || process_cov.cols() != belief.cov.cols()) {
        throw DimensionError("predict: process covariance dimension differs from belief");
    }
    GaussianBelief out = belief;
    out.cov += process_cov;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

UpdateResult update(const GaussianBelief& belief, double y, std::size_t k, const MeasurementModel& model,
                    double meas_var)
{
    const auto m = static_cast<Eigen::Index>(model.dim());
    if (belief.mean.size() != m || belief.cov.rows() != m) {
        throw DimensionError("update: belief dimension differs from the measurement model");
    }
    Eigen::VectorXd grad(m), u(m), gain(m);
    const double predicted = model.evaluate(belief.mean, k, grad);

    UpdateResult out;
    out.belief = belief;
    out.innovation = y - predicted;
    out.innovation_var = joseph_update(out.belief.cov, grad, meas_var, u, gain, k);
    out.belief.mean += gain * out.innovation;
    mirror_lower(out.belief.cov);
    out.log_density = log_density(out.innovation, out.innovation_var);
    return out;
}

UpdateResult update(const GaussianBelief& belief, double y, std::size_t k, const CombSpec& spec, double meas_var)
{
    return update(belief, y, k, CombMeasurement(spec), meas_var);
}

GaussianBelief FilterResult::predicted(std::size_t k) const
{
    GaussianBelief b;
    b.mean = predicted_means.row(static_cast<Eigen::Index>(k)).transpose();
    if (has_covariances()) b.cov = predicted_covs.at(k);
    return b;
}

GaussianBelief FilterResult::updated(std::size_t k) const
{
    GaussianBelief b;
    b.mean = updated_means.row(static_cast<Eigen::Index>(k)).transpose();
    if (has_covariances()) b.cov = updated_covs.at(k);
    return b;
}

GaussianBelief SmootherResult::smoothed(std::size_t k) const
{
    GaussianBelief b;
    b.mean = means.row(static_cast<Eigen::Index>(k)).transpose();
    if (has_covariances()) b.cov = covs.at(k);
    return b;
}

GaussianBelief default_initial_belief(std::size_t lines)
{
    const auto m = static_cast<Eigen::Index>(lines);
    const double var = 0.25 * std::numbers::pi * std::numbers::pi;
    return {Eigen::VectorXd::Zero(m), var * Eigen::MatrixXd::Identity(m, m)};
}

FilterResult run_filter(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                        const GaussianBelief& init, const FilterOptions& options)
{
    check_inputs(signal, model, noise, init);
    const auto m = static_cast<Eigen::Index>(model.dim());
    const auto steps = static_cast<Eigen::Index>(signal.size());

    FilterResult out;
    out.predicted_means.resize(steps, m);
    out.updated_means.resize(steps, m);
    out.predicted_measurements.resize(steps);
    out.jacobians.resize(steps, m);
    out.innovations.resize(steps);
    out.innovation_vars.resize(steps);
    if (options.store_covariances) {
        out.predicted_covs.reserve(static_cast<std::size_t>(steps));
        out.updated_covs.reserve(static_cast<std::size_t>(steps));
    }

    Eigen::VectorXd mean = init.mean;
    Eigen::MatrixXd cov = init.cov;
    Eigen::VectorXd grad(m), u(m), gain(m);
    double loglik = 0.0;

    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (k > 0) add_lower(cov, noise.process_cov);
        out.predicted_means.row(k) = mean.transpose();
        if (options.store_covariances) {
            mirror_lower(cov);
            out.predicted_covs.push_back(cov);
        }

        const double predicted = model.evaluate(mean, kk, grad);
        const double innovation = signal.samples[kk] - predicted;
        const double s = joseph_update(cov, grad, noise.meas_var, u, gain, kk);
        mean += gain * innovation;

        out.predicted_measurements[k] = predicted;
        out.jacobians.row(k) = grad.transpose();
        out.innovations[k] = innovation;
        out.innovation_vars[k] = s;
        out.updated_means.row(k) = mean.transpose();
        if (options.store_covariances) {
            mirror_lower(cov);
            out.updated_covs.push_back(cov);
        }
        loglik += log_density(innovation, s);
    }
    if (!std::isfinite(loglik)) throw NumericalError("run_filter: log-likelihood is not finite");
    out.log_likelihood = loglik;
    return out;
}

FilterResult run_filter(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& noise,
                        const GaussianBelief& init, const FilterOptions& options)
{
    check_rates(signal, spec);
    return run_filter(signal, CombMeasurement(spec), noise, init, options);
}

SmootherResult rts_smooth(const FilterResult& filter, const Eigen::MatrixXd& process_cov)
{
    if (!filter.has_covariances()) {
        throw DomainError("rts_smooth: filter was run without stored covariances");
    }
    const auto steps = static_cast<Eigen::Index>(filter.steps());
    const Eigen::Index m = filter.updated_means.cols();
    if (process_cov.rows() != m || process_cov.cols() != m) {
        throw DimensionError("rts_smooth: process covariance dimension differs from the filter state");
    }

    SmootherResult out;
    out.log_likelihood = filter.log_likelihood;
    out.means.resize(steps, m);
    out.covs.resize(static_cast<std::size_t>(steps));
    out.lag_one.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd::Zero(m, m));

    const auto last = static_cast<std::size_t>(steps - 1);
    out.means.row(steps - 1) = filter.updated_means.row(steps - 1);
    out.covs[last] = filter.updated_covs[last];

    for (Eigen::Index k = steps - 2; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        const Eigen::MatrixXd& p_upd = filter.updated_covs[kk];
        Eigen::MatrixXd p_pred = p_upd + process_cov;
        p_pred = 0.5 * (p_pred + p_pred.transpose()).eval();

        Eigen::LLT<Eigen::MatrixXd> llt(p_pred);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("rts_smooth: predicted covariance at step " + std::to_string(k + 1) +
                                 " is singular; increase Q or the initial covariance");
        }
        // G = P_upd P_pred^{-1}, so G^T = P_pred^{-1} P_upd.
        const Eigen::MatrixXd gain = llt.solve(p_upd).transpose();

        const Eigen::VectorXd next_mean = out.means.row(k + 1).transpose();
        const Eigen::VectorXd pred_mean = filter.updated_means.row(k).transpose();
        out.means.row(k) = (pred_mean + gain * (next_mean - pred_mean)).transpose();

        Eigen::MatrixXd cov = p_upd + gain * (out.covs[kk + 1] - p_pred) * gain.transpose();
        out.covs[kk] = 0.5 * (cov + cov.transpose());
        out.lag_one[kk + 1] = out.covs[kk + 1] * gain.transpose();
    }

    out.linearization = Linearization{filter.predicted_means, filter.predicted_measurements, filter.jacobians};
    return out;
}

SmootherResult smooth_moments(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                              const GaussianBelief& init, Eigen::MatrixXd* filtered_means)
{
    check_inputs(signal, model, noise, init);
    const auto m = static_cast<Eigen::Index>(model.dim());
    const auto steps = static_cast<Eigen::Index>(signal.size());
    const Eigen::MatrixXd& q = noise.process_cov;
    const double r_meas = noise.meas_var;

    // Forward pass. Columns hold per-step vectors so each step touches contiguous memory.
    Eigen::MatrixXd jac(m, steps), gains(m, steps);
    Eigen::VectorXd innov(steps), innov_var(steps);
    if (filtered_means) filtered_means->resize(steps, m);

    Eigen::VectorXd mean = init.mean;
    Eigen::MatrixXd cov = init.cov;
    Eigen::VectorXd grad(m), u(m), gain(m);
    double loglik = 0.0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (k > 0) add_lower(cov, q);
        const double predicted = model.evaluate(mean, kk, grad);
        const double innovation = signal.samples[kk] - predicted;
        const double s = joseph_update(cov, grad, r_meas, u, gain, kk);
        mean += gain * innovation;

        jac.col(k) = grad;
        gains.col(k) = gain;
        innov[k] = innovation;
        innov_var[k] = s;
        if (filtered_means) filtered_means->row(k) = mean.transpose();
        loglik += log_density(innovation, s);
    }
    if (!std::isfinite(loglik)) throw NumericalError("smooth_moments: log-likelihood is not finite");

    // Backward adjoint pass: r_{k-1} = H^T v/F + L^T r_k, N_{k-1} = H^T H/F + L^T N_k L with
    // L = I - g H. Smoothed disturbances are Q r_k with covariance Q - Q N_k Q.
    Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd scatter_core = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd r_before(m, steps); // column k holds r_{k-1}
    Eigen::VectorXd w(m);
    double residual = 0.0;

    for (Eigen::Index k = steps - 1; k >= 0; --k) {
        scatter_core.selfadjointView<Eigen::Lower>().rankUpdate(r, 1.0);
        scatter_core.triangularView<Eigen::Lower>() -= n;

        const auto h = jac.col(k);
        const auto g = gains.col(k);
        const double f = innov_var[k];
        const double v = innov[k];

        r += h * (v / f - g.dot(r));
        w.noalias() = n.selfadjointView<Eigen::Lower>() * g;
        const double gw = g.dot(w);
        n.selfadjointView<Eigen::Lower>().rankUpdate(h, w, -1.0);
        n.selfadjointView<Eigen::Lower>().rankUpdate(h, gw + 1.0 / f);

        // Linearized residual v - H P r_{k-1} and its variance H P H^T - H P N_{k-1} P H^T,
        // with P H^T = f g.
        w.noalias() = n.selfadjointView<Eigen::Lower>() * g;
        const double e = v - f * g.dot(r);
        const double quad = (f - r_meas) - f * f * g.dot(w);
        residual += e * e + quad;
        r_before.col(k) = r;
    }

    SmootherResult out;
    out.log_likelihood = loglik;
    out.means.resize(steps, m);
    Eigen::VectorXd xs = init.mean + init.cov * r_before.col(0);
    out.means.row(0) = xs.transpose();
    for (Eigen::Index k = 1; k < steps; ++k) {
        xs.noalias() += q * r_before.col(k);
        out.means.row(k) = xs.transpose();
    }

    mirror_lower(scatter_core);
    SmootherMoments moments;
    moments.steps = static_cast<std::size_t>(steps);
    moments.increment_scatter = q * scatter_core * q + static_cast<double>(steps - 1) * q;
    moments.increment_scatter = 0.5 * (moments.increment_scatter + moments.increment_scatter.transpose()).eval();
    moments.residual_energy = residual;
    out.moments = std::move(moments);
    return out;
}

SmootherMoments moments_from_covariances(const SmootherResult& smoothed, const SignalRecord& signal)
{
    if (!smoothed.has_covariances() || smoothed.lag_one.size() != smoothed.steps()) {
        throw DomainError("moments_from_covariances: smoother result has no per-step covariances");
    }
    if (!smoothed.linearization) {
        throw DomainError("moments_from_covariances: smoother result has no filter linearization");
    }
    if (signal.size() != smoothed.steps()) {
        throw DimensionError("moments_from_covariances: signal length differs from smoother length");
    }
    const Linearization& lin = *smoothed.linearization;
    const auto steps = static_cast<Eigen::Index>(smoothed.steps());
    const Eigen::Index m = smoothed.means.cols();

    SmootherMoments out;
    out.steps = static_cast<std::size_t>(steps);
    out.increment_scatter = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index k = 1; k < steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const Eigen::VectorXd delta = (smoothed.means.row(k) - smoothed.means.row(k - 1)).transpose();
        const Eigen::MatrixXd& c = smoothed.lag_one[kk];
        out.increment_scatter += delta * delta.transpose() + smoothed.covs[kk] + smoothed.covs[kk - 1] - c -
                                 c.transpose();
    }
    out.increment_scatter = 0.5 * (out.increment_scatter + out.increment_scatter.transpose()).eval();

    double residual = 0.0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const Eigen::VectorXd h = lin.jacobians.row(k).transpose();
        const Eigen::VectorXd dx = (smoothed.means.row(k) - lin.predicted_means.row(k)).transpose();
        const double e = signal.samples[kk] - lin.predicted_measurements[k] - h.dot(dx);
        residual += e * e + h.dot(smoothed.covs[kk] * h);
    }
    out.residual_energy = residual;
    return out;
}

} // namespace combtrack
