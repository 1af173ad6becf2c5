#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace cbridge {

/// Double mantissa with a 64-bit binary exponent.
///
/// Bridge h-functions at heights of several hundred jumps reach magnitudes like
/// 1e-2000, far below the smallest double. The value is `mant * 2^exp` with
/// |mant| in [0.5, 1), or exactly zero.
class ExtReal {
 public:
  ExtReal() = default;
  ExtReal(double v) { set(v, 0); }  // NOLINT(google-explicit-constructor)

  static ExtReal from_log(double log_value) {
    if (log_value == -std::numeric_limits<double>::infinity()) return ExtReal{};
    const double log2v = log_value / std::numbers::ln2;
    const double whole = std::floor(log2v);
    ExtReal r;
    r.set(std::exp2(log2v - whole), static_cast<std::int64_t>(whole));
    return r;
  }

  double mantissa() const noexcept { return mant_; }
  std::int64_t exponent() const noexcept { return exp_; }
  bool is_zero() const noexcept { return mant_ == 0.0; }
  bool is_negative() const noexcept { return mant_ < 0.0; }

  /// Natural log of the absolute value; -inf for zero.
  double log_abs() const noexcept {
    if (mant_ == 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(std::abs(mant_)) + static_cast<double>(exp_) * std::numbers::ln2;
  }

  /// Nearest double; flushes to 0 or +-inf outside the double range.
  double to_double() const noexcept {
    if (exp_ > 2000) return mant_ > 0 ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
    if (exp_ < -2000) return 0.0;
    return std::ldexp(mant_, static_cast<int>(exp_));
  }

  ExtReal operator-() const noexcept {
    ExtReal r = *this;
    r.mant_ = -r.mant_;
    return r;
  }

  friend ExtReal operator*(const ExtReal& a, const ExtReal& b) noexcept {
    ExtReal r;
    r.set(a.mant_ * b.mant_, a.exp_ + b.exp_);
    return r;
  }

  friend ExtReal operator/(const ExtReal& a, const ExtReal& b) noexcept {
    ExtReal r;
    r.set(a.mant_ / b.mant_, a.exp_ - b.exp_);
    return r;
  }

  friend ExtReal operator+(const ExtReal& a, const ExtReal& b) noexcept {
    if (a.mant_ == 0.0) return b;
    if (b.mant_ == 0.0) return a;
    const std::int64_t gap = a.exp_ - b.exp_;
    // 53-bit mantissas: anything further apart than 64 binades is absorbed.
    if (gap > 64) return a;
    if (gap < -64) return b;
    ExtReal r;
    if (gap >= 0) {
      r.set(a.mant_ + std::ldexp(b.mant_, static_cast<int>(-gap)), a.exp_);
    } else {
      r.set(std::ldexp(a.mant_, static_cast<int>(gap)) + b.mant_, b.exp_);
    }
    return r;
  }

  friend ExtReal operator-(const ExtReal& a, const ExtReal& b) noexcept { return a + (-b); }

  ExtReal& operator+=(const ExtReal& o) noexcept { return *this = *this + o; }
  ExtReal& operator-=(const ExtReal& o) noexcept { return *this = *this - o; }
  ExtReal& operator*=(const ExtReal& o) noexcept { return *this = *this * o; }
  ExtReal& operator/=(const ExtReal& o) noexcept { return *this = *this / o; }

  friend bool operator<(const ExtReal& a, const ExtReal& b) noexcept {
    return (a - b).is_negative();
  }
  friend bool operator>(const ExtReal& a, const ExtReal& b) noexcept { return b < a; }
  friend bool operator==(const ExtReal& a, const ExtReal& b) noexcept {
    return a.mant_ == b.mant_ && a.exp_ == b.exp_;
  }

 private:
  void set(double m, std::int64_t e) noexcept {
    if (m == 0.0 || !std::isfinite(m)) {
      mant_ = m;
      exp_ = 0;
      return;
    }
    int shift = 0;
    mant_ = std::frexp(m, &shift);
    exp_ = e + shift;
  }

  double mant_ = 0.0;
  std::int64_t exp_ = 0;
};

inline double to_double(double v) noexcept { return v; }
inline double to_double(const ExtReal& v) noexcept { return v.to_double(); }
inline double log_abs(double v) noexcept { return std::log(std::abs(v)); }
inline double log_abs(const ExtReal& v) noexcept { return v.log_abs(); }

}  // namespace cbridge
