#include "fft.hpp"

#include "combtrack/errors.hpp"

#include <algorithm>
#include <cstring>

namespace combtrack::detail {

RealFft::RealFft(std::size_t n) : n_(n)
{
    if (n == 0) throw DomainError("RealFft: zero length");
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    if (in_ == nullptr || out_ == nullptr) {
        fftw_free(in_);
        fftw_free(out_);
        throw NumericalError("RealFft: allocation failed");
    }
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
}

RealFft::~RealFft()
{
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
}

const std::complex<double>* RealFft::execute()
{
    fftw_execute(plan_);
    return reinterpret_cast<const std::complex<double>*>(out_);
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x)
{
    RealFft fft(x.size());
    std::copy(x.begin(), x.end(), fft.input());
    const auto* out = fft.execute();
    return {out, out + x.size() / 2 + 1};
}

std::vector<std::complex<double>> inverse_dft(const std::vector<std::complex<double>>& spectrum)
{
    const std::size_t n = spectrum.size();
    if (n == 0) return {};
    fftw_complex* buf = fftw_alloc_complex(n);
    if (buf == nullptr) throw NumericalError("inverse_dft: allocation failed");
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    std::memcpy(buf, spectrum.data(), n * sizeof(fftw_complex));
    fftw_execute(plan);
    const auto* out = reinterpret_cast<const std::complex<double>*>(buf);
    std::vector<std::complex<double>> result(out, out + n);
    fftw_destroy_plan(plan);
    fftw_free(buf);
    return result;
}

} // namespace combtrack::detail
