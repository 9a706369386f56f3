#include "combtrack/baseline.hpp"
#include "combtrack/comb_model.hpp"
#include "combtrack/ekf.hpp"
#include "combtrack/errors.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace combtrack;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    return scale * (a * a.transpose() / static_cast<double>(n) + 0.1 * Eigen::MatrixXd::Identity(n, n));
}

struct LinearCase {
    Eigen::MatrixXd h;
    Eigen::MatrixXd q;
    double r = 0.0;
    SignalRecord signal;
    GaussianBelief init;
};

// Random-walk state observed through a time-varying linear map.
LinearCase linear_case(Eigen::Index lines, std::size_t steps, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    LinearCase c;
    c.h.resize(static_cast<Eigen::Index>(steps), lines);
    for (Eigen::Index i = 0; i < c.h.size(); ++i) c.h.data()[i] = g(rng);
    c.q = random_spd(lines, rng, 1e-3);
    c.r = 0.05;
    const Eigen::LLT<Eigen::MatrixXd> chol(c.q);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lines);
    std::vector<double> y(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        Eigen::VectorXd w(lines);
        for (auto& v : w) v = g(rng);
        if (k > 0) x += chol.matrixL() * w;
        y[k] = c.h.row(static_cast<Eigen::Index>(k)).dot(x) + std::sqrt(c.r) * g(rng);
    }
    c.signal = fixtures::record(y, 1.0);
    c.init = {Eigen::VectorXd::Constant(lines, 0.3), 2.0 * Eigen::MatrixXd::Identity(lines, lines)};
    return c;
}

std::vector<double> samples(const LinearCase& c) { return c.signal.samples; }

double min_eig_ratio(const Eigen::MatrixXd& p)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
    return eig.eigenvalues().minCoeff() / std::max(p.trace(), 1e-300);
}

} // namespace

TEST_CASE("predict adds Q and keeps the mean", "[ekf][predict]")
{
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd p0 = random_spd(4, rng, 1.0);
    const Eigen::MatrixXd q0 = random_spd(4, rng, 0.01);
    const GaussianBelief b{Eigen::Vector4d(0.1, -0.2, 3.0, 0.0), p0};

    SECTION("Q = 0 leaves the belief unchanged")
    {
        const auto out = predict(b, Eigen::MatrixXd::Zero(4, 4));
        CHECK(out.mean == b.mean);
        CHECK(fixtures::max_abs_diff(out.cov, p0) == 0.0);
    }
    SECTION("zero covariance becomes Q")
    {
        const auto out = predict({b.mean, Eigen::MatrixXd::Zero(4, 4)}, q0);
        CHECK(fixtures::max_abs_diff(out.cov, q0) < 1e-18);
    }
    SECTION("n predictions accumulate n Q")
    {
        GaussianBelief cur = b;
        for (int i = 0; i < 25; ++i) cur = predict(cur, q0);
        CHECK(fixtures::max_abs_diff(cur.cov, p0 + 25.0 * q0) < 1e-12);
        CHECK(cur.mean == b.mean);
    }
    SECTION("result is exactly symmetric")
    {
        Eigen::MatrixXd skew = q0;
        skew(0, 1) += 1e-9;
        const auto out = predict(b, skew);
        CHECK((out.cov - out.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("dimension mismatch")
    {
        CHECK_THROWS_AS(predict(b, Eigen::MatrixXd::Zero(3, 3)), DimensionError);
    }
}

TEST_CASE("measurement_and_jacobian", "[ekf][jacobian]")
{
    const CombSpec spec = fixtures::comb(3, 0.7);

    SECTION("zero phases at k = 0")
    {
        const auto e = measurement_and_jacobian(Eigen::VectorXd::Zero(7), 0, spec);
        CHECK(e.predicted == 0.0);
        for (Eigen::Index m = 0; m < 7; ++m) CHECK(e.gradient[m] == 0.7);
    }
    SECTION("single line at quadrature")
    {
        const CombSpec one = make_comb_grid({0}, 50e6, 2.5e9, fixtures::kFs, 1.3);
        const auto e = measurement_and_jacobian(Eigen::VectorXd::Constant(1, kPi / 2), 0, one);
        CHECK_THAT(e.predicted, WithinRel(1.3, 1e-15));
        CHECK_THAT(e.gradient[0], WithinAbs(0.0, 1e-15));
    }
    SECTION("gradient matches central differences")
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-kPi, kPi);
        std::uniform_int_distribution<std::size_t> kk(0, 100000);
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::VectorXd x(7);
            for (auto& v : x) v = u(rng);
            const std::size_t k = kk(rng);
            const auto e = measurement_and_jacobian(x, k, spec);
            const auto fd = oracle::numeric_gradient(
                [&](const Eigen::VectorXd& s) { return measurement_and_jacobian(s, k, spec).predicted; }, x, 1e-4);
            CHECK((e.gradient - fd).norm() <= 1e-6 * std::max(1.0, e.gradient.norm()));
        }
    }
    SECTION("matches the direct sum")
    {
        Eigen::VectorXd x(7);
        x << 0.1, -2.0, 0.5, 3.0, 1.0, -0.4, 2.2;
        const std::size_t k = 1234;
        double h = 0.0;
        for (std::size_t m = 0; m < 7; ++m) {
            h += spec.amplitudes[m] *
                 std::sin(spec.rel_angular_freqs[m] * static_cast<double>(k) / spec.sample_rate + x[m]);
        }
        CHECK_THAT(measurement_and_jacobian(x, k, spec).predicted, WithinAbs(h, 1e-12));
    }
    SECTION("wrong dimension")
    {
        CHECK_THROWS_AS(measurement_and_jacobian(Eigen::VectorXd::Zero(3), 0, spec), DimensionError);
    }
}

TEST_CASE("update", "[ekf][update]")
{
    const CombSpec spec = fixtures::comb(2);
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd p = random_spd(5, rng, 0.05);
    const Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(5, -0.5, 0.5);

    SECTION("zero prior covariance")
    {
        const auto out = update({mean, Eigen::MatrixXd::Zero(5, 5)}, 0.3, 17, spec, 0.01);
        CHECK(out.belief.mean == mean);
        CHECK(out.belief.cov.cwiseAbs().maxCoeff() == 0.0);
        CHECK(out.innovation_var == 0.01);
    }
    SECTION("linear surrogate equals the exact Kalman update")
    {
        Eigen::MatrixXd h(1, 5);
        h << 0.3, -1.0, 0.2, 0.8, 1.5;
        const LinearMeasurement lin(h);
        const auto out = update({mean, p}, 0.7, 0, lin, 0.02);
        const auto ref = oracle::kalman_filter({0.7}, h, Eigen::MatrixXd::Zero(5, 5), 0.02, mean, p);
        CHECK((out.belief.mean - ref.upd_mean[0]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(fixtures::max_abs_diff(out.belief.cov, ref.upd_cov[0]) < 1e-12);
        CHECK_THAT(out.innovation, WithinAbs(ref.innovation[0], 1e-12));
        CHECK_THAT(out.innovation_var, WithinRel(ref.innovation_var[0], 1e-12));
        CHECK_THAT(out.log_density, WithinAbs(ref.loglik, 1e-12));
    }
    SECTION("uninformative measurement leaves the prior")
    {
        const auto out = update({mean, p}, 0.4, 5, spec, 1e12 * 2.5);
        CHECK((out.belief.mean - mean).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(fixtures::max_abs_diff(out.belief.cov, p) < 1e-6);
    }
    SECTION("posterior covariance stays symmetric PSD")
    {
        GaussianBelief b{mean, p};
        for (std::size_t k = 0; k < 200; ++k) b = update(predict(b, 1e-4 * p), 0.1, k, spec, 1e-6).belief;
        CHECK((b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(min_eig_ratio(b.cov) >= -1e-10);
    }
    SECTION("degenerate model is a hard error")
    {
        CHECK_THROWS_AS(update({mean, Eigen::MatrixXd::Zero(5, 5)}, 0.0, 0, spec, 0.0), NumericalError);
    }
}

TEST_CASE("run_filter", "[ekf][filter]")
{
    SECTION("zero-amplitude comb carries no information")
    {
        const CombSpec spec = fixtures::comb(2, 0.0);
        const std::size_t steps = 50;
        std::mt19937_64 rng(8);
        std::normal_distribution<double> g;
        std::vector<double> y(steps);
        for (auto& v : y) v = g(rng);
        const NoiseModel noise{1e-3 * Eigen::MatrixXd::Identity(5, 5), 1.0};
        const auto init = default_initial_belief(5);
        const auto f = run_filter(fixtures::record(y), spec, noise, init);
        for (std::size_t k = 0; k < steps; ++k) {
            CHECK(f.updated_means.row(static_cast<Eigen::Index>(k)).cwiseAbs().maxCoeff() == 0.0);
            const Eigen::MatrixXd expected = init.cov + static_cast<double>(k) * noise.process_cov;
            CHECK(fixtures::max_abs_diff(f.updated_covs[k], expected) < 1e-12);
        }
        CHECK(std::isfinite(f.log_likelihood));
    }

    SECTION("linear surrogate matches the textbook filter")
    {
        const auto c = linear_case(5, 2000, 21);
        const auto f = run_filter(c.signal, LinearMeasurement(c.h), {c.q, c.r}, c.init);
        const auto ref = oracle::kalman_filter(samples(c), c.h, c.q, c.r, c.init.mean, c.init.cov);
        double worst = 0.0;
        for (std::size_t k = 0; k < 2000; ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            worst = std::max(worst, (f.updated_means.row(i).transpose() - ref.upd_mean[k]).cwiseAbs().maxCoeff());
            worst = std::max(worst, (f.predicted_means.row(i).transpose() - ref.pred_mean[k]).cwiseAbs().maxCoeff());
            worst = std::max(worst, fixtures::max_abs_diff(f.updated_covs[k], ref.upd_cov[k]));
            worst = std::max(worst, fixtures::max_abs_diff(f.predicted_covs[k], ref.pred_cov[k]));
            worst = std::max(worst, std::abs(f.innovations[i] - ref.innovation[k]));
            worst = std::max(worst, std::abs(f.innovation_vars[i] - ref.innovation_var[k]));
        }
        CHECK(worst < 1e-10);
        CHECK_THAT(f.log_likelihood, WithinRel(ref.loglik, 1e-10));
        CHECK((f.innovation_vars.array() > 0.0).all());
    }

    SECTION("deterministic")
    {
        const CombSpec spec = fixtures::comb(2);
        const auto phases = generate_wiener_phases(spec, {1e-5, 1e-6}, 500, 2);
        const auto sig = synthesize_photocurrent(spec, phases, 0.01, 2);
        const NoiseModel noise{true_process_covariance({1e-5, 1e-6}, spec.line_indices), 0.01};
        const auto a = run_filter(sig, spec, noise, default_initial_belief(5));
        const auto b = run_filter(sig, spec, noise, default_initial_belief(5));
        CHECK(a.updated_means == b.updated_means);
        CHECK(a.log_likelihood == b.log_likelihood);
    }

    SECTION("sample rate mismatch")
    {
        const CombSpec spec = fixtures::comb(1);
        const auto sig = fixtures::record(std::vector<double>(10, 0.0), 1e9);
        CHECK_THROWS_AS(run_filter(sig, spec, {Eigen::MatrixXd::Identity(3, 3), 1.0}, default_initial_belief(3)),
                        DomainError);
    }
}

TEST_CASE("single strong line tracks a Wiener phase", "[ekf][filter][montecarlo]")
{
    const CombSpec spec = make_comb_grid({0}, 50e6, 2.5e9, fixtures::kFs, 1.0);
    const double var = 1e-5;
    const double meas_var = meas_var_for_average_snr(spec, 30.0);
    const std::size_t steps = 4000;
    double sq = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto truth = generate_correlated_phases(spec, Eigen::MatrixXd::Constant(1, 1, var), steps, seed);
        const auto sig = synthesize_photocurrent(spec, truth, meas_var, seed);
        const auto f = run_filter(sig, spec, {Eigen::MatrixXd::Constant(1, 1, var), meas_var},
                                  default_initial_belief(1), {.store_covariances = false});
        for (std::size_t k = steps / 2; k < steps; ++k) {
            const double e = f.updated_means(static_cast<Eigen::Index>(k), 0) - truth.phases(static_cast<Eigen::Index>(k), 0);
            sq += e * e;
            ++n;
        }
    }
    CHECK(std::sqrt(sq / static_cast<double>(n)) < 0.02);
}

TEST_CASE("log-likelihood peaks near the true parameters", "[ekf][filter][montecarlo]")
{
    const CombSpec spec = fixtures::comb(2);
    const ElectroOpticNoiseParams params{4e-6, 4e-7};
    const Eigen::MatrixXd q = true_process_covariance(params, spec.line_indices);
    const double r = meas_var_for_average_snr(spec, 20.0);
    const auto phases = generate_wiener_phases(spec, params, 20000, 5);
    const auto sig = synthesize_photocurrent(spec, phases, r, 5);

    const std::vector<double> scales{0.1, 0.3, 1.0, 3.0, 10.0};
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        for (std::size_t j = 0; j < scales.size(); ++j) {
            const auto f = run_filter(sig, spec, {scales[i] * q, scales[j] * r}, default_initial_belief(5),
                                      {.store_covariances = false});
            if (f.log_likelihood > best) {
                best = f.log_likelihood;
                best_i = i;
                best_j = j;
            }
        }
    }
    CHECK(best_i == 2);
    CHECK(best_j == 2);
}

TEST_CASE("rts_smooth", "[ekf][smoother]")
{
    SECTION("linear surrogate matches the textbook smoother")
    {
        const auto c = linear_case(5, 2000, 33);
        const auto f = run_filter(c.signal, LinearMeasurement(c.h), {c.q, c.r}, c.init);
        const auto s = rts_smooth(f, c.q);
        const auto ref = oracle::rts_smoother(oracle::kalman_filter(samples(c), c.h, c.q, c.r, c.init.mean, c.init.cov), c.q);
        double worst = 0.0;
        for (std::size_t k = 0; k < 2000; ++k) {
            worst = std::max(worst, (s.means.row(static_cast<Eigen::Index>(k)).transpose() - ref.mean[k]).cwiseAbs().maxCoeff());
            worst = std::max(worst, fixtures::max_abs_diff(s.covs[k], ref.cov[k]));
            if (k > 0) worst = std::max(worst, fixtures::max_abs_diff(s.lag_one[k], ref.lag_one[k]));
        }
        CHECK(worst < 1e-10);
        CHECK(s.log_likelihood == f.log_likelihood);
    }

    SECTION("huge Q decouples the steps")
    {
        // Scalar state, so every step is fully observed.
        const auto c = linear_case(1, 200, 2);
        const Eigen::MatrixXd q = 1e12 * c.init.cov;
        const auto f = run_filter(c.signal, LinearMeasurement(c.h), {q, c.r}, c.init);
        const auto s = rts_smooth(f, q);
        for (std::size_t k = 0; k < 200; ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            CHECK((s.means.row(i) - f.updated_means.row(i)).norm() <= 1e-6 * std::max(1.0, f.updated_means.row(i).norm()));
            CHECK(fixtures::max_abs_diff(s.covs[k], f.updated_covs[k]) <= 1e-6 * f.updated_covs[k].cwiseAbs().maxCoeff());
        }
    }

    SECTION("smoothing never increases marginal variance")
    {
        const CombSpec spec = fixtures::comb(3);
        const ElectroOpticNoiseParams params{1e-5, 1e-6};
        const Eigen::MatrixXd q = true_process_covariance(params, spec.line_indices);
        const auto phases = generate_wiener_phases(spec, params, 3000, 9);
        const double r = meas_var_for_average_snr(spec, 20.0);
        const auto sig = synthesize_photocurrent(spec, phases, r, 9);
        const auto f = run_filter(sig, spec, {q, r}, default_initial_belief(7));
        const auto s = rts_smooth(f, q);
        bool ok = true;
        double worst_eig = 0.0;
        for (std::size_t k = 0; k < 3000; ++k) {
            ok = ok && ((s.covs[k].diagonal() - f.updated_covs[k].diagonal()).array() <= 1e-9).all();
            worst_eig = std::min(worst_eig, min_eig_ratio(s.covs[k]));
            worst_eig = std::min(worst_eig, min_eig_ratio(f.updated_covs[k]));
        }
        CHECK(ok);
        CHECK(worst_eig >= -1e-10);
    }

    SECTION("needs stored covariances")
    {
        const auto c = linear_case(2, 20, 1);
        const auto f = run_filter(c.signal, LinearMeasurement(c.h), {c.q, c.r}, c.init, {.store_covariances = false});
        CHECK_THROWS_AS(rts_smooth(f, c.q), DomainError);
    }

    SECTION("singular predicted covariance")
    {
        Eigen::MatrixXd h(1, 2);
        h << 1.0, 1.0;
        const auto sig = fixtures::record({1.0, 2.0, 3.0}, 1.0);
        const GaussianBelief init{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)};
        const Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
        const auto f = run_filter(sig, LinearMeasurement(h), {q, 1.0}, init);
        CHECK_THROWS_AS(rts_smooth(f, q), NumericalError);
    }
}

TEST_CASE("smooth_moments agrees with filter plus RTS", "[ekf][smoother]")
{
    const CombSpec spec = fixtures::comb(3);
    const ElectroOpticNoiseParams params{1e-5, 1e-6};
    const Eigen::MatrixXd q = true_process_covariance(params, spec.line_indices);
    const auto phases = generate_wiener_phases(spec, params, 3000, 14);
    const double r = meas_var_for_average_snr(spec, 18.0);
    const auto sig = synthesize_photocurrent(spec, phases, r, 14);
    const auto init = default_initial_belief(7);
    const CombMeasurement model(spec);

    const auto f = run_filter(sig, model, {q, r}, init);
    const auto s = rts_smooth(f, q);
    const auto ref = moments_from_covariances(s, sig);
    Eigen::MatrixXd filtered;
    const auto fast = smooth_moments(sig, model, {q, r}, init, &filtered);

    CHECK(fixtures::max_abs_diff(fast.means, s.means) < 1e-8);
    CHECK(fixtures::max_abs_diff(filtered, f.updated_means) == 0.0);
    CHECK_THAT(fast.log_likelihood, WithinRel(f.log_likelihood, 1e-12));
    REQUIRE(fast.moments.has_value());
    CHECK(fixtures::max_abs_diff(fast.moments->increment_scatter, ref.increment_scatter) <=
          1e-8 * ref.increment_scatter.cwiseAbs().maxCoeff());
    CHECK_THAT(fast.moments->residual_energy, WithinRel(ref.residual_energy, 1e-8));
    CHECK(fast.moments->steps == ref.steps);
}

TEST_CASE("smoothed EKF beats the baseline on differential phase", "[ekf][montecarlo]")
{
    // 5 lines at 16.5 dB; MSE of the line phases relative to the centre line.
    const CombSpec spec = fixtures::comb(2);
    const ElectroOpticNoiseParams params{4e-7, 4e-7 / 64.0};
    const Eigen::MatrixXd q = true_process_covariance(params, spec.line_indices);
    const double r = meas_var_for_average_snr(spec, 16.5);
    const std::size_t steps = 4000;
    const std::size_t guard = guard_samples(steps, 0.01);
    double mse_ekf = 0.0, mse_conv = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto truth = generate_wiener_phases(spec, params, steps, seed);
        const auto sig = synthesize_photocurrent(spec, truth, r, seed);
        const auto conv = run_conventional(sig, spec, {});
        GaussianBelief init{conv.phases.row(0).transpose(), 0.04 * Eigen::MatrixXd::Identity(5, 5)};
        const auto s = smooth_moments(sig, CombMeasurement(spec), {q, r}, init);
        for (std::size_t k = guard; k < steps - guard; ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            for (Eigen::Index m = 0; m < 5; ++m) {
                if (m == 2) continue;
                const double t = truth.phases(i, m) - truth.phases(i, 2);
                // Both estimates are defined modulo 2 pi per line.
                double a = s.means(i, m) - s.means(i, 2) - t;
                a -= 2.0 * kPi * std::round(a / (2.0 * kPi));
                double b = conv.phases(i, m) - conv.phases(i, 2) - t;
                b -= 2.0 * kPi * std::round(b / (2.0 * kPi));
                mse_ekf += a * a;
                mse_conv += b * b;
            }
        }
    }
    CHECK(mse_ekf <= mse_conv);
}
