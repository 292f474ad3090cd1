#include "smorm/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "smorm/error.hpp"

namespace smorm {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below requires n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  out.precision(17);
  out << spare_;
  return out.str();
}

Rng Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  Rng rng;
  int spare_flag = 0;
  in >> rng.engine_ >> spare_flag >> rng.spare_;
  if (!in) throw ParseError(1, "malformed RNG state");
  rng.has_spare_ = spare_flag != 0;
  return rng;
}

}  // namespace smorm
