#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rvesel {

/// Periodic pixel grid on the torus [0, L*epsilon)^2: `cells` unit cells per
/// side, each rendered as `pixels_per_cell` x `pixels_per_cell` pixels.
struct GridGeometry {
  int cells = 8;            // unit (epsilon) cells per side
  int pixels_per_cell = 8;  // pixels per unit cell
  double epsilon = 1.0;     // physical correlation length

  int pixels_per_side() const { return cells * pixels_per_cell; }
  double spacing() const { return epsilon / pixels_per_cell; }
  double side_length() const { return cells * epsilon; }

  void validate() const {
    if (cells < 2) throw std::invalid_argument("GridGeometry: cells must be >= 2");
    if (pixels_per_cell < 1)
      throw std::invalid_argument("GridGeometry: pixels_per_cell must be >= 1");
    if (epsilon <= 0.0) throw std::invalid_argument("GridGeometry: epsilon must be > 0");
  }

  bool operator==(const GridGeometry&) const = default;
};

inline int wrap_index(int k, int n) {
  k %= n;
  return k < 0 ? k + n : k;
}

/// Positive scalar conductivity values on the pixel grid, interpreted as an
/// L*epsilon-periodic field a(x) = value(x) * Id. Storage is row-major in the
/// y index: values[j * n + i].
struct ScalarField {
  GridGeometry geometry;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(GridGeometry g, double fill = 1.0)
      : geometry(g),
        values(static_cast<std::size_t>(g.pixels_per_side()) * g.pixels_per_side(), fill) {
    geometry.validate();
  }

  int n() const { return geometry.pixels_per_side(); }

  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * n() + i]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * n() + i]; }

  /// Access with periodic index arithmetic in both axes.
  double at_periodic(int i, int j) const {
    const int nn = n();
    return at(wrap_index(i, nn), wrap_index(j, nn));
  }

  /// Compensated summation keeps tile averages at closed-form accuracy.
  double mean() const {
    double s = 0.0, comp = 0.0;
    for (double v : values) {
      const double y = v - comp;
      const double t = s + y;
      comp = (t - s) - y;
      s = t;
    }
    return s / static_cast<double>(values.size());
  }

  /// Throws unless every pixel lies in [lo, hi].
  void check_bounds(double lo, double hi) const {
    for (double v : values) {
      if (!(v >= lo && v <= hi))
        throw std::runtime_error("ScalarField: pixel value " + std::to_string(v) +
                                 " outside declared bounds [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "]");
    }
  }

  ScalarField transposed() const {
    ScalarField out(geometry);
    const int nn = n();
    for (int j = 0; j < nn; ++j)
      for (int i = 0; i < nn; ++i) out.at(i, j) = at(j, i);
    return out;
  }
};

enum class Axis { X = 0, Y = 1 };

inline Axis other_axis(Axis a) { return a == Axis::X ? Axis::Y : Axis::X; }

}  // namespace rvesel
