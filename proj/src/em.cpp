#include "combtrack/em.hpp"

#include "combtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace combtrack {

void EmOptions::validate() const
{
    if (max_iters < 1) throw ConfigError("EmOptions: max_iters must be >= 1");
    if (!(rel_loglik_tol > 0.0)) throw ConfigError("EmOptions: rel_loglik_tol must be > 0");
    if (!(psd_floor >= 0.0)) throw ConfigError("EmOptions: psd_floor must be >= 0");
}

QStructure parse_q_structure(const std::string& name)
{
    if (name == "full") return QStructure::full;
    if (name == "rank2") return QStructure::rank2;
    throw ConfigError("unknown q_structure '" + name + "' (expected full or rank2)");
}

std::string to_string(QStructure q)
{
    return q == QStructure::full ? "full" : "rank2";
}

EmAcceleration parse_acceleration(const std::string& name)
{
    if (name == "none") return EmAcceleration::none;
    if (name == "squarem") return EmAcceleration::squarem;
    throw ConfigError("unknown EM acceleration '" + name + "' (expected none or squarem)");
}

std::string to_string(EmAcceleration a)
{
    return a == EmAcceleration::none ? "none" : "squarem";
}

SmootherResult e_step(const SignalRecord& signal, const MeasurementModel& model, const NoiseModel& noise,
                      const GaussianBelief& init)
{
    return smooth_moments(signal, model, noise, init);
}

SmootherResult e_step(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& noise,
                      const GaussianBelief& init)
{
    if (std::abs(signal.sample_rate - spec.sample_rate) > 1e-12 * spec.sample_rate) {
        throw DomainError("e_step: signal and comb sample rates differ");
    }
    return e_step(signal, CombMeasurement(spec), noise, init);
}

Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& q, double floor)
{
    const Eigen::MatrixXd sym = 0.5 * (q + q.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericalError("clip_psd: eigendecomposition failed");
    if (eig.eigenvalues().minCoeff() >= floor) return sym;
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

ElectroOpticNoiseParams fit_rank2(const Eigen::MatrixXd& q, const std::vector<int>& line_indices)
{
    const auto m = static_cast<Eigen::Index>(line_indices.size());
    if (q.rows() != m || q.cols() != m) throw DimensionError("fit_rank2: Q dimension differs from line count");

    Eigen::VectorXd idx(m);
    for (Eigen::Index i = 0; i < m; ++i) idx[i] = line_indices[static_cast<std::size_t>(i)];
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);

    // Normal equations in the Frobenius inner product: <J,J>, <J,mm^T>, <mm^T,mm^T>.
    const double sum_m = idx.sum();
    const double sum_m2 = idx.squaredNorm();
    const double a11 = static_cast<double>(m * m);
    const double a12 = sum_m * sum_m;
    const double a22 = sum_m2 * sum_m2;
    const double b1 = ones.dot(q * ones);
    const double b2 = idx.dot(q * idx);

    ElectroOpticNoiseParams out;
    const double det = a11 * a22 - a12 * a12;
    if (a22 == 0.0 || std::abs(det) <= 1e-12 * a11 * a22) {
        out.var_carrier = std::max(0.0, b1 / a11);
        return out;
    }
    out.var_carrier = (a22 * b1 - a12 * b2) / det;
    out.var_rf = (a11 * b2 - a12 * b1) / det;
    if (out.var_carrier < 0.0) {
        out.var_carrier = 0.0;
        out.var_rf = std::max(0.0, b2 / a22);
    } else if (out.var_rf < 0.0) {
        out.var_rf = 0.0;
        out.var_carrier = std::max(0.0, b1 / a11);
    }
    return out;
}

Eigen::MatrixXd initial_process_cov(std::size_t lines, double sample_rate, double linewidth_hz)
{
    const auto m = static_cast<Eigen::Index>(lines);
    return (2.0 * std::numbers::pi * linewidth_hz / sample_rate) * Eigen::MatrixXd::Identity(m, m);
}

NoiseModel m_step(const SmootherResult& smoother, const SignalRecord& signal, const std::vector<int>& line_indices,
                  const EmOptions& options)
{
    options.validate();
    const SmootherMoments moments =
        smoother.moments ? *smoother.moments : moments_from_covariances(smoother, signal);
    if (moments.steps < 2) throw DomainError("m_step: at least two steps required");
    if (!moments.increment_scatter.allFinite() || !std::isfinite(moments.residual_energy)) {
        throw NumericalError("m_step: smoother statistics are not finite");
    }
    if (static_cast<std::size_t>(moments.increment_scatter.rows()) != line_indices.size()) {
        throw DimensionError("m_step: line index count differs from the state dimension");
    }

    NoiseModel out;
    out.process_cov = clip_psd(moments.increment_scatter / static_cast<double>(moments.steps - 1), options.psd_floor);
    if (options.q_structure == QStructure::rank2) {
        out.process_cov = true_process_covariance(fit_rank2(out.process_cov, line_indices), line_indices);
    }
    out.meas_var = std::max(0.0, moments.residual_energy / static_cast<double>(moments.steps));
    return out;
}

NoiseModel m_step(const SmootherResult& smoother, const SignalRecord& signal, const CombSpec& spec,
                  const EmOptions& options)
{
    return m_step(smoother, signal, spec.line_indices, options);
}

EmTraceEntry summarize(const NoiseModel& noise, double loglik, int iteration)
{
    EmTraceEntry e;
    e.iteration = iteration;
    e.loglik = loglik;
    e.sigma2 = noise.meas_var;
    e.q_trace = noise.process_cov.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(noise.process_cov, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = eig.eigenvalues(); // ascending
    const Eigen::Index n = ev.size();
    e.q_eig1 = n >= 1 ? ev[n - 1] : 0.0;
    e.q_eig2 = n >= 2 ? ev[n - 2] : 0.0;
    return e;
}

namespace {

// Parameter vector used for extrapolation. Entries are divided by a per-cycle scale so
// that sigma^2 and the much smaller phase variances weigh alike.
class ParamCodec {
public:
    ParamCodec(QStructure structure, std::vector<int> line_indices)
        : structure_(structure), indices_(std::move(line_indices))
    {
    }

    Eigen::VectorXd encode(const NoiseModel& noise) const
    {
        if (structure_ == QStructure::rank2) {
            const auto p = fit_rank2(noise.process_cov, indices_);
            return Eigen::Vector3d(p.var_carrier, p.var_rf, noise.meas_var);
        }
        const Eigen::Index m = noise.process_cov.rows();
        Eigen::VectorXd x(m * (m + 1) / 2 + 1);
        Eigen::Index at = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = j; i < m; ++i) x[at++] = noise.process_cov(i, j);
        }
        x[at] = noise.meas_var;
        return x;
    }

    /// Returns false when the vector does not describe a valid noise model.
    bool decode(const Eigen::VectorXd& x, double psd_floor, NoiseModel& out) const
    {
        const Eigen::Index last = x.size() - 1;
        if (!x.allFinite() || !(x[last] > 0.0)) return false;
        out.meas_var = x[last];
        if (structure_ == QStructure::rank2) {
            if (x[0] < 0.0 || x[1] < 0.0 || x[0] + x[1] <= 0.0) return false;
            out.process_cov = true_process_covariance({x[0], x[1]}, indices_);
            return true;
        }
        const auto m = static_cast<Eigen::Index>(indices_.size());
        Eigen::MatrixXd q(m, m);
        Eigen::Index at = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = j; i < m; ++i) q(i, j) = q(j, i) = x[at++];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-12 * std::abs(q.trace())) return false;
        out.process_cov = clip_psd(q, psd_floor);
        return true;
    }

    Eigen::VectorXd scale_for(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd s(x.size());
        const Eigen::Index last = x.size() - 1;
        if (structure_ == QStructure::rank2) {
            s[0] = x[0] > 0.0 ? x[0] : 1.0;
            s[1] = x[1] > 0.0 ? x[1] : (x[0] > 0.0 ? x[0] : 1.0);
        } else {
            const auto m = static_cast<Eigen::Index>(indices_.size());
            Eigen::VectorXd diag(m);
            Eigen::Index at = 0;
            for (Eigen::Index j = 0; j < m; ++j) {
                diag[j] = x[at];
                at += m - j;
            }
            at = 0;
            for (Eigen::Index j = 0; j < m; ++j) {
                for (Eigen::Index i = j; i < m; ++i) {
                    const double v = std::sqrt(std::abs(diag[i] * diag[j]));
                    s[at++] = v > 0.0 ? v : 1.0;
                }
            }
        }
        s[last] = x[last] > 0.0 ? x[last] : 1.0;
        return s;
    }

    bool representable(const NoiseModel& noise) const
    {
        if (structure_ == QStructure::full) return true;
        const auto p = fit_rank2(noise.process_cov, indices_);
        const Eigen::MatrixXd back = true_process_covariance(p, indices_);
        const double scale = std::max(noise.process_cov.cwiseAbs().maxCoeff(), 1e-300);
        return (back - noise.process_cov).cwiseAbs().maxCoeff() <= 1e-12 * scale;
    }

private:
    QStructure structure_;
    std::vector<int> indices_;
};

struct Iterate {
    NoiseModel noise;
    SmootherResult smoother;
};

} // namespace

EmResult run_em(const SignalRecord& signal, const MeasurementModel& model, const std::vector<int>& line_indices,
                const NoiseModel& init_noise, const GaussianBelief& init, const EmOptions& options)
{
    options.validate();
    init_noise.validate();
    if (line_indices.size() != model.dim()) throw DimensionError("run_em: line index count differs from model");

    EmTrace trace;
    int iteration = 0;
    auto evaluate = [&](const NoiseModel& noise) {
        ++trace.evaluations;
        return Iterate{noise, e_step(signal, model, noise, init)};
    };
    auto record = [&](const Iterate& it, bool extrapolated) {
        auto entry = summarize(it.noise, it.smoother.log_likelihood, iteration++);
        entry.extrapolated = extrapolated;
        trace.entries.push_back(entry);
    };
    auto budget_left = [&] { return trace.evaluations < options.max_iters; };
    auto small_change = [&](double before, double after) {
        return std::abs(after - before) <= options.rel_loglik_tol * std::abs(after);
    };

    Iterate base = evaluate(init_noise);
    record(base, false);

    const ParamCodec codec(options.q_structure, line_indices);
    auto plain_step = [&](const Iterate& from) {
        return evaluate(m_step(from.smoother, signal, line_indices, options));
    };

    // Squared extrapolation needs all three iterates in the same parameter family.
    if (options.acceleration == EmAcceleration::squarem && !codec.representable(base.noise) && budget_left()) {
        Iterate next = plain_step(base);
        record(next, false);
        const bool done = small_change(base.smoother.log_likelihood, next.smoother.log_likelihood);
        base = std::move(next);
        trace.converged = done;
    }

    while (!trace.converged && budget_left()) {
        if (options.acceleration == EmAcceleration::none) {
            Iterate next = plain_step(base);
            record(next, false);
            trace.converged = small_change(base.smoother.log_likelihood, next.smoother.log_likelihood);
            base = std::move(next);
            continue;
        }

        Iterate first = plain_step(base);
        record(first, false);
        if (!budget_left()) {
            base = std::move(first);
            break;
        }
        Iterate second = plain_step(first);
        record(second, false);
        const double cycle_start = base.smoother.log_likelihood;

        // sigma^2 settles within a step or two while Q creeps, so only Q is extrapolated;
        // the candidate keeps the sigma^2 of the second step.
        const Eigen::VectorXd x0 = codec.encode(base.noise);
        const Eigen::VectorXd x2 = codec.encode(second.noise);
        const Eigen::VectorXd scale = codec.scale_for(x0);
        const Eigen::Index last = x0.size() - 1;
        Eigen::VectorXd r = (codec.encode(first.noise) - x0).cwiseQuotient(scale);
        Eigen::VectorXd v = (x2 - x0).cwiseQuotient(scale) - 2.0 * r;
        r[last] = 0.0;
        v[last] = 0.0;
        const double v_norm = v.norm();

        bool accepted = false;
        if (v_norm > 0.0) {
            double alpha = std::min(-r.norm() / v_norm, -1.0);
            for (int attempt = 0; attempt < 4 && alpha < -1.0 && budget_left(); ++attempt) {
                Eigen::VectorXd x = x0 + scale.cwiseProduct(-2.0 * alpha * r + alpha * alpha * v);
                x[last] = x2[last];
                NoiseModel candidate;
                if (codec.decode(x, options.psd_floor, candidate)) {
                    Iterate trial = evaluate(candidate);
                    if (trial.smoother.log_likelihood >= second.smoother.log_likelihood) {
                        record(trial, true);
                        base = std::move(trial);
                        accepted = true;
                        break;
                    }
                }
                alpha = 0.5 * (alpha - 1.0);
            }
        }
        if (!accepted) base = std::move(second);
        trace.converged = small_change(cycle_start, base.smoother.log_likelihood);
    }

    if (!trace.converged) trace.warning = "EM stopped at max_iters before the log-likelihood settled";
    return {std::move(base.noise), std::move(trace), std::move(base.smoother)};
}

EmResult run_em(const SignalRecord& signal, const CombSpec& spec, const NoiseModel& init_noise,
                const GaussianBelief& init, const EmOptions& options)
{
    if (std::abs(signal.sample_rate - spec.sample_rate) > 1e-12 * spec.sample_rate) {
        throw DomainError("run_em: signal and comb sample rates differ");
    }
    return run_em(signal, CombMeasurement(spec), spec.line_indices, init_noise, init, options);
}

} // namespace combtrack
