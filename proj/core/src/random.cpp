#include "noshow/random.hpp"

#include <cmath>
#include <numbers>

namespace noshow {

double Rng::normal() {
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace noshow
