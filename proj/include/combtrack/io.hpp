#pragma once

#include "combtrack/analysis.hpp"
#include "combtrack/comb_model.hpp"
#include "combtrack/em.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>

namespace combtrack {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

// Signal files: "DCSR1", u32 little-endian header length, UTF-8 JSON header
// {fs_hz, num_samples, source, seed?}, then num_samples little-endian f64.
void write_signal(const SignalRecord& record, const std::filesystem::path& path);
SignalRecord read_signal(const std::filesystem::path& path);

// Phase files: "DCPH1", u32 header length, JSON {fs_hz, num_steps, line_indices,
// guard_samples}, then num_steps x M little-endian f64 in row-major order.
void write_phases(const PhaseTrajectories& phases, const std::filesystem::path& path);
PhaseTrajectories read_phases(const std::filesystem::path& path);

/// Header row of line indices, then one row per line.
void write_matrix_csv(const Eigen::MatrixXd& values, const std::vector<int>& line_indices,
                      const std::filesystem::path& path);
void write_correlation_csv(const CorrelationMatrix& c, const std::filesystem::path& path);
CorrelationMatrix read_correlation_csv(const std::filesystem::path& path);

/// line_index,variance
void write_variance_csv(const VarianceCurve& curve, const std::filesystem::path& path);

/// iteration,loglik,sigma2,q_trace,q_eig1,q_eig2
void write_em_trace_csv(const EmTrace& trace, const std::filesystem::path& path);

void write_text(const std::string& text, const std::filesystem::path& path);

} // namespace combtrack
