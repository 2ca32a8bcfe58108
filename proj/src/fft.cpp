#include "gma/fft.hpp"

#include <cmath>
#include <numbers>

#include "gma/errors.hpp"

namespace gma {

namespace {

using cd = std::complex<double>;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative Cooley-Tukey, n a power of two.
void fft_pow2(std::vector<cd>& x, bool inverse) {
    const size_t n = x.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1 : -1);
        const cd wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const cd u = x[i + k];
                const cd v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (cd& v : x) v *= inv;
    }
}

// Bluestein's chirp-z transform: DFT of arbitrary n via one convolution of
// power-of-two length m >= 2n-1.
void fft_bluestein(std::vector<cd>& x, bool inverse) {
    const size_t n = x.size();
    const size_t m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;

    // chirp[k] = exp(sign * i * pi * k^2 / n); k^2 taken mod 2n to keep the
    // angle argument small and the table exact for large n.
    std::vector<cd> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        const uint64_t k2 = (static_cast<uint64_t>(k) * k) % (2 * n);
        const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cd(std::cos(ang), std::sin(ang));
    }

    std::vector<cd> a(m, cd(0, 0)), b(m, cd(0, 0));
    for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);

    fft_pow2(a, false);
    fft_pow2(b, false);
    for (size_t k = 0; k < m; ++k) a[k] *= b[k];
    fft_pow2(a, true);

    for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (cd& v : x) v *= inv;
    }
}

}  // namespace

void fft(std::vector<cd>& x, bool inverse) {
    if (x.empty()) throw ContractError("fft: empty input");
    if (x.size() == 1) return;
    if (is_pow2(x.size())) {
        fft_pow2(x, inverse);
    } else {
        fft_bluestein(x, inverse);
    }
}

namespace {

std::vector<double> freq_combine(const std::vector<double>& a, const std::vector<double>& b,
                                 bool conjugate_b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("circular transform: lengths differ or zero (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    const size_t n = a.size();
    std::vector<cd> fa(n), fb(n);
    for (size_t i = 0; i < n; ++i) {
        fa[i] = cd(a[i], 0);
        fb[i] = cd(b[i], 0);
    }
    fft(fa, false);
    fft(fb, false);
    for (size_t i = 0; i < n; ++i) fa[i] *= conjugate_b ? std::conj(fb[i]) : fb[i];
    fft(fa, true);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = fa[i].real();
    return out;
}

}  // namespace

std::vector<double> circular_convolve_fft(const std::vector<double>& a,
                                          const std::vector<double>& b) {
    return freq_combine(a, b, false);
}

std::vector<double> circular_correlate_fft(const std::vector<double>& a,
                                           const std::vector<double>& b) {
    return freq_combine(a, b, true);
}

std::vector<double> circular_convolve_direct(const std::vector<double>& a,
                                             const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("circular_convolve_direct: lengths differ or zero");
    }
    const int64_t n = static_cast<int64_t>(a.size());
    std::vector<double> out(a.size(), 0.0);
    for (int64_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            int64_t j = k - i;
            if (j < 0) j += n;
            acc += a[i] * b[j];
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace gma
