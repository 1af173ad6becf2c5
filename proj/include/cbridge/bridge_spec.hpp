#pragma once

#include <sstream>

#include "cbridge/error.hpp"
#include "cbridge/intensity.hpp"

namespace cbridge {

/// Endpoints (x, y) and window (s, u) of a bridge. Height y - x, length u - s.
struct BridgeSpec {
  State x = 0;
  State y = 0;
  double s = 0.0;
  double u = 1.0;

  State height() const noexcept { return y - x; }
  double length() const noexcept { return u - s; }

  void validate() const {
    if (x < 0 || x > y) {
      std::ostringstream os;
      os << "bridge endpoints need 0 <= x <= y, got x=" << x << " y=" << y;
      throw Error(ErrorCode::BadWindow, os.str());
    }
    if (!(s >= 0.0 && s < u && u <= 1.0)) {
      std::ostringstream os;
      os << "bridge window needs 0 <= s < u <= 1, got s=" << s << " u=" << u;
      throw Error(ErrorCode::BadWindow, os.str());
    }
  }

  bool contains_time(double t, double slack = 1e-12) const noexcept {
    return t >= s - slack && t <= u + slack;
  }
};

}  // namespace cbridge
