#pragma once

#include "combtrack/comb_model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace fixtures {

constexpr double kFs = 10e9;
constexpr double kSpacing = 50e6;

/// Symmetric comb of 2 * half_width + 1 unit lines, recentred like the simulator.
inline combtrack::CombSpec comb(int half_width, double amplitude = 1.0)
{
    const auto idx = combtrack::symmetric_line_indices(half_width);
    return combtrack::make_comb_grid(idx, kSpacing, combtrack::fitted_center_hz(idx, kSpacing, 4.5e9, kFs), kFs,
                                     amplitude);
}

inline combtrack::SignalRecord record(std::vector<double> samples, double fs = kFs)
{
    combtrack::SignalRecord r;
    r.samples = std::move(samples);
    r.sample_rate = fs;
    return r;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return (a - b).cwiseAbs().maxCoeff();
}

} // namespace fixtures
