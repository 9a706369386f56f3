#pragma once

// Thin RAII wrappers over FFTW plans. Internal to the library.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <vector>

namespace combtrack::detail {

/// Real-to-half-complex forward transform of fixed length n (n/2 + 1 outputs, unnormalized).
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const { return n_; }
    double* input() { return in_; }
    /// Transforms the contents of input().
    const std::complex<double>* execute();

private:
    std::size_t n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

/// Forward DFT of a real sequence, half spectrum.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Unnormalized complex backward transform (exp(+i...)).
std::vector<std::complex<double>> inverse_dft(const std::vector<std::complex<double>>& spectrum);

} // namespace combtrack::detail
