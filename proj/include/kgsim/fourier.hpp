#pragma once

// Thin RAII layer over FFTW.  Plans are created once per transform length
// (FFTW_ESTIMATE, so the chosen algorithm never depends on timing) and are
// executed through the new-array interface, which is safe to call from
// several threads at once.

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

namespace kgsim {

using cplx = std::complex<double>;

namespace detail {

class FourierPlan {
public:
    explicit FourierPlan(int n) : n_(n) {
        std::vector<cplx> a(n), b(n);
        auto* in = reinterpret_cast<fftw_complex*>(a.data());
        auto* out = reinterpret_cast<fftw_complex*>(b.data());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        forward_ = fftw_plan_dft_1d(n, in, out, FFTW_FORWARD, flags);
        backward_ = fftw_plan_dft_1d(n, in, out, FFTW_BACKWARD, flags);
        if (!forward_ || !backward_) throw std::runtime_error("fftw plan creation failed");
    }
    ~FourierPlan() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }
    FourierPlan(const FourierPlan&) = delete;
    FourierPlan& operator=(const FourierPlan&) = delete;

    int size() const { return n_; }

    // Unnormalized forward transform, out-of-place.
    void forward(std::span<const cplx> in, std::span<cplx> out) const {
        fftw_execute_dft(forward_, to_fftw(in), reinterpret_cast<fftw_complex*>(out.data()));
    }
    // Unnormalized backward transform, out-of-place.
    void backward(std::span<const cplx> in, std::span<cplx> out) const {
        fftw_execute_dft(backward_, to_fftw(in), reinterpret_cast<fftw_complex*>(out.data()));
    }

private:
    static fftw_complex* to_fftw(std::span<const cplx> s) {
        // FFTW never writes to the input of an out-of-place c2c plan.
        return reinterpret_cast<fftw_complex*>(const_cast<cplx*>(s.data()));
    }

    int n_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

}  // namespace detail

/// Shared plan for length n; planning is serialized, execution is not.
inline const detail::FourierPlan& fourier_plan(int n) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<detail::FourierPlan>> plans;
    std::lock_guard lock(mutex);
    auto& slot = plans[n];
    if (!slot) slot = std::make_unique<detail::FourierPlan>(n);
    return *slot;
}

/// Normalized coefficients: f_j = sum_k c_k exp(2 pi i j k / n).
inline std::vector<cplx> to_fourier(std::span<const cplx> values) {
    const int n = static_cast<int>(values.size());
    std::vector<cplx> out(n);
    fourier_plan(n).forward(values, out);
    const double inv = 1.0 / n;
    for (auto& c : out) c *= inv;
    return out;
}

inline std::vector<cplx> from_fourier(std::span<const cplx> coeffs) {
    const int n = static_cast<int>(coeffs.size());
    std::vector<cplx> out(n);
    fourier_plan(n).backward(coeffs, out);
    return out;
}

}  // namespace kgsim
