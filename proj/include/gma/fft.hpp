#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace gma {

// In-place complex DFT of arbitrary length: iterative radix-2 when n is a
// power of two, Bluestein's chirp-z reduction to a power-of-two convolution
// otherwise. inverse=true applies the conjugate transform and divides by n.
void fft(std::vector<std::complex<double>>& x, bool inverse);

// out[k] = sum_i a[i] * b[(k - i) mod n], computed in the frequency domain.
std::vector<double> circular_convolve_fft(const std::vector<double>& a,
                                          const std::vector<double>& b);

// out[i] = sum_k a[k] * b[(k - i) mod n]; the adjoint of circular convolution.
std::vector<double> circular_correlate_fft(const std::vector<double>& a,
                                           const std::vector<double>& b);

// Quadratic-time reference, kept next to the kernel because tests and the
// acceptance suite compare the two routes.
std::vector<double> circular_convolve_direct(const std::vector<double>& a,
                                             const std::vector<double>& b);

}  // namespace gma
