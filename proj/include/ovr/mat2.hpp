#pragma once

#include <array>
#include <complex>

namespace ovr {

using Complex = std::complex<double>;
using Vec2 = std::array<Complex, 2>;

// Dense complex 2x2 matrix, row-major.
struct Mat2 {
  Complex a00{}, a01{}, a10{}, a11{};

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static Mat2 outer(const Vec2& y) {
    return {y[0] * std::conj(y[0]), y[0] * std::conj(y[1]), y[1] * std::conj(y[0]), y[1] * std::conj(y[1])};
  }

  Complex trace() const { return a00 + a11; }
  Complex det() const { return a00 * a11 - a01 * a10; }
  Mat2 adjoint() const { return {std::conj(a00), std::conj(a10), std::conj(a01), std::conj(a11)}; }

  Mat2& operator+=(const Mat2& o) {
    a00 += o.a00; a01 += o.a01; a10 += o.a10; a11 += o.a11;
    return *this;
  }
  Mat2& operator-=(const Mat2& o) {
    a00 -= o.a00; a01 -= o.a01; a10 -= o.a10; a11 -= o.a11;
    return *this;
  }
  Mat2& operator*=(double s) {
    a00 *= s; a01 *= s; a10 *= s; a11 *= s;
    return *this;
  }
};

inline Mat2 operator+(Mat2 a, const Mat2& b) { return a += b; }
inline Mat2 operator-(Mat2 a, const Mat2& b) { return a -= b; }
inline Mat2 operator*(Mat2 a, double s) { return a *= s; }
inline Mat2 operator*(double s, Mat2 a) { return a *= s; }

inline Mat2 operator*(const Mat2& a, const Mat2& b) {
  return {a.a00 * b.a00 + a.a01 * b.a10, a.a00 * b.a01 + a.a01 * b.a11,
          a.a10 * b.a00 + a.a11 * b.a10, a.a10 * b.a01 + a.a11 * b.a11};
}

inline Vec2 operator*(const Mat2& a, const Vec2& v) {
  return {a.a00 * v[0] + a.a01 * v[1], a.a10 * v[0] + a.a11 * v[1]};
}

// x^H y
inline Complex dot(const Vec2& x, const Vec2& y) { return std::conj(x[0]) * y[0] + std::conj(x[1]) * y[1]; }

inline Mat2 hermitian_part(const Mat2& a) {
  const Complex off = 0.5 * (a.a01 + std::conj(a.a10));
  return {a.a00.real(), off, std::conj(off), a.a11.real()};
}

// Eigenvalues (ascending) of a Hermitian matrix.
std::array<double, 2> hermitian_eigenvalues(const Mat2& h);

// Hermitian matrix with eigenvalues clamped from below at floor, same
// eigenvectors.
Mat2 clamp_eigenvalues(const Mat2& h, double floor);

struct InverseResult {
  Mat2 inverse;
  bool loaded = false;    // diagonal loading was applied
  bool singular = false;  // zero matrix; inverse reported as zero
};

// Inverse of a Hermitian PSD matrix in closed form. When the condition
// number exceeds max_condition the diagonal is loaded with
// loading * trace before inverting.
InverseResult inverse_hermitian(const Mat2& h, double max_condition = 1e8, double loading = 1e-10);

}  // namespace ovr
