#pragma once

#include <complex>
#include <vector>

namespace adatta {

// In-place iterative radix-2 Cooley-Tukey. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& buf, bool inverse);

bool is_power_of_two(size_t n);

}  // namespace adatta
