#pragma once

#include <cmath>
#include <vector>

#include "rotor_engine/common.hpp"

namespace rotor {

/// Exponentially scaled modified Bessel functions e^{-x} I_l(x) for l = 0..l_max.
///
/// Miller's backward recurrence I_{l-1} = I_{l+1} + (2l/x) I_l started well above
/// both l_max and x, normalized with e^x = I_0(x) + 2 sum_{l>=1} I_l(x).
/// Stable for x up to ~1e4 without overflow.
inline std::vector<double> scaled_bessel_i_sequence(double x, int l_max) {
  detail::require(x >= 0.0 && std::isfinite(x), "bessel: argument must be finite and >= 0");
  detail::require(l_max >= 0, "bessel: l_max must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(l_max) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const double reach = std::max(static_cast<double>(l_max), x);
  const int start = static_cast<int>(reach + 30.0 + std::ceil(std::sqrt(60.0 * reach)));
  double next = 0.0;  // I_{l+1}
  double curr = 1e-300;
  double norm = 0.0;  // accumulates I_0 + 2 sum I_l on the running scale
  for (int l = start; l >= 1; --l) {
    const double prev = next + (2.0 * l / x) * curr;  // I_{l-1}
    if (l <= l_max) out[static_cast<std::size_t>(l)] = curr;
    norm += 2.0 * curr;
    next = curr;
    curr = prev;
    if (curr > 1e250) {
      const double s = 1e-250;
      curr *= s;
      next *= s;
      norm *= s;
      for (int k = l; k <= l_max; ++k) out[static_cast<std::size_t>(k)] *= s;
    }
  }
  out[0] = curr;
  norm += curr;
  for (double& v : out) v /= norm;
  return out;
}

}  // namespace rotor
