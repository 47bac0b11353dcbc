#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rvesel/grid.hpp"
#include "rvesel/rng.hpp"

namespace rvesel {

// Substream ids; a generator may consume several decorrelated streams of the
// same SampleSeed.
inline constexpr std::uint32_t kStreamPrimary = 0;    // tile values / point process
inline constexpr std::uint32_t kStreamMicroType = 1;  // microstructure tile type
inline constexpr std::uint32_t kStreamOrientation = 2;

struct CheckerboardSpec {
  double value_lo = 0.5;
  double value_hi = 1.0;
  double p_hi = 0.5;
};

struct PoissonInclusionSpec {
  double intensity = 2.0;  // expected centers per unit area
  double radius = 0.3;     // inclusion radius, must be <= epsilon / 2
  double value_in = 0.2;
  double value_out = 1.0;
};

/// Interpolated checkerboard-with-microstructure field. kappa = 0 is a plain
/// {1, 1/2} checkerboard, kappa = 1 a checkerboard whose tiles are either
/// constant sigma or a two-scale laminate (vertical stripes of width tau
/// alternating mu with a horizontal sub-laminate of layer height tau^2
/// alternating 1 and lambda).
struct CounterexampleSpec {
  double lambda = 0.25;
  double sigma = 0.9;
  double tau = 0.25;
  double kappa = 0.0;
  bool randomize_orientation = true;
};

struct LayeredSpec {
  Axis axis = Axis::X;
  double value_lo = 0.5;
  double value_hi = 1.0;
};

struct GeneratorSpec {
  std::variant<CheckerboardSpec, PoissonInclusionSpec, CounterexampleSpec, LayeredSpec> variant;
  std::optional<double> analytic_mean_f_avg;
};

/// Stripe conductivity making the two-scale laminate's effective tensor
/// isotropic: mu = (3l^2 + (1-l)sqrt(9l^2+14l+9) + 2l + 3) / (4(l+1)).
inline double mu_star(double lambda) {
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("mu_star: lambda must lie in (0, 1]");
  const double disc = std::sqrt(9.0 * lambda * lambda + 14.0 * lambda + 9.0);
  return (3.0 * lambda * lambda + (1.0 - lambda) * disc + 2.0 * lambda + 3.0) /
         (4.0 * (lambda + 1.0));
}

/// Admissible (exclusive) window for sigma: the microstructure tile's
/// effective conductivity on the left, its spatial average on the right.
inline std::pair<double, double> sigma_window(double lambda) {
  const double mu = mu_star(lambda);
  return {lambda / (1.0 + lambda) + 0.5 * mu, 0.25 * (2.0 * mu + lambda + 1.0)};
}

namespace detail {

// The 8 axis symmetries of an m x m tile; index 0 is the identity,
// 1..3 rotations, 4..7 reflections.
inline std::pair<int, int> apply_tile_symmetry(int orientation, int px, int py, int m) {
  const int q = m - 1;
  switch (orientation) {
    case 0: return {px, py};
    case 1: return {py, q - px};
    case 2: return {q - px, q - py};
    case 3: return {q - py, px};
    case 4: return {q - px, py};
    case 5: return {px, q - py};
    case 6: return {py, px};
    default: return {q - py, q - px};
  }
}

inline void validate_counterexample(const CounterexampleSpec& s, int pixels_per_cell) {
  if (s.lambda <= 0.0 || s.lambda > 1.0)
    throw std::invalid_argument("counterexample: lambda must lie in (0, 1]");
  if (s.kappa < 0.0 || s.kappa > 1.0)
    throw std::invalid_argument("counterexample: kappa must lie in [0, 1]");
  if (!(s.tau > 0.0 && s.tau <= 0.5))
    throw std::invalid_argument("counterexample: tau must lie in (0, 1/2]");
  const double inv_tau_real = 1.0 / s.tau;
  const int inv_tau = static_cast<int>(std::lround(inv_tau_real));
  if (std::abs(inv_tau_real - inv_tau) > 1e-9 || inv_tau % 2 != 0)
    throw std::invalid_argument("counterexample: 1/tau must be an even integer");
  const int inv_tau2 = inv_tau * inv_tau;
  if (pixels_per_cell % inv_tau2 != 0)
    throw std::invalid_argument(
        "counterexample: pixels_per_cell must be divisible by 1/tau^2 so stripes snap to pixels");
  const auto [lo, hi] = sigma_window(s.lambda);
  if (!(s.sigma > lo && s.sigma < hi)) {
    std::ostringstream msg;
    msg << "counterexample: sigma = " << s.sigma << " outside the admissible window ("
        << lo << ", " << hi << ") for lambda = " << s.lambda;
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace detail

/// Renders one microstructure tile at pixel resolution m x m (base
/// orientation: vertical mu stripes of width tau*m interleaved with the
/// horizontal 1/lambda sub-laminate of layer height tau^2*m).
inline std::vector<double> render_micro_tile(int m, double lambda, double mu, double tau) {
  const int stripe_w = static_cast<int>(std::lround(m * tau));
  const int layer_h = static_cast<int>(std::lround(m * tau * tau));
  if (stripe_w < 1 || layer_h < 1 || stripe_w * static_cast<int>(std::lround(1.0 / tau)) != m)
    throw std::invalid_argument("render_micro_tile: stripes do not snap to the pixel grid");
  std::vector<double> tile(static_cast<std::size_t>(m) * m);
  for (int py = 0; py < m; ++py)
    for (int px = 0; px < m; ++px) {
      const int stripe = px / stripe_w;
      double v;
      if (stripe % 2 == 0) {
        v = mu;
      } else {
        const int layer = py / layer_h;
        v = (layer % 2 == 0) ? 1.0 : lambda;
      }
      tile[static_cast<std::size_t>(py) * m + px] = v;
    }
  return tile;
}

inline ScalarField generate_checkerboard(const CheckerboardSpec& spec, const GridGeometry& geom,
                                         SampleSeed seed) {
  geom.validate();
  if (spec.value_lo <= 0.0 || spec.value_hi <= 0.0)
    throw std::invalid_argument("checkerboard: values must be positive");
  if (spec.p_hi < 0.0 || spec.p_hi > 1.0)
    throw std::invalid_argument("checkerboard: p_hi must lie in [0, 1]");
  ScalarField field(geom);
  CounterRng rng(seed, kStreamPrimary);
  const int m = geom.pixels_per_cell;
  for (int ty = 0; ty < geom.cells; ++ty)
    for (int tx = 0; tx < geom.cells; ++tx) {
      const double v = rng.bernoulli(spec.p_hi) ? spec.value_hi : spec.value_lo;
      for (int py = 0; py < m; ++py)
        for (int px = 0; px < m; ++px) field.at(tx * m + px, ty * m + py) = v;
    }
  return field;
}

struct PointCandidate {
  double x = 0.0, y = 0.0;
  double mark = 0.0;
  long long index = 0;
};

inline double periodic_distance2(double ax, double ay, double bx, double by, double side) {
  double dx = std::abs(ax - bx);
  double dy = std::abs(ay - by);
  dx = std::min(dx, side - dx);
  dy = std::min(dy, side - dy);
  return dx * dx + dy * dy;
}

/// Orders candidates by their mark and keeps one only if every previously
/// accepted center is at periodic distance >= min_dist (earlier mark wins).
inline std::vector<PointCandidate> hard_core_accept(std::vector<PointCandidate> candidates,
                                                    double min_dist, double side) {
  std::sort(candidates.begin(), candidates.end(),
            [](const PointCandidate& a, const PointCandidate& b) {
              return a.mark != b.mark ? a.mark < b.mark : a.index < b.index;
            });
  std::vector<PointCandidate> accepted;
  const double min_dist2 = min_dist * min_dist;
  for (const auto& c : candidates) {
    bool ok = true;
    for (const auto& a : accepted)
      if (periodic_distance2(c.x, c.y, a.x, a.y, side) < min_dist2) {
        ok = false;
        break;
      }
    if (ok) accepted.push_back(c);
  }
  return accepted;
}

inline std::vector<PointCandidate> poisson_accepted_centers(const PoissonInclusionSpec& spec,
                                                            const GridGeometry& geom,
                                                            SampleSeed seed) {
  if (spec.intensity < 0.0) throw std::invalid_argument("poisson: intensity must be >= 0");
  const double side = geom.side_length();
  CounterRng rng(seed, kStreamPrimary);
  const long long count = rng.poisson(spec.intensity * side * side);
  std::vector<PointCandidate> candidates(static_cast<std::size_t>(count));
  for (auto& c : candidates) {
    c.x = rng.uniform(0.0, side);
    c.y = rng.uniform(0.0, side);
    c.mark = rng.uniform();
  }
  for (long long k = 0; k < count; ++k) candidates[static_cast<std::size_t>(k)].index = k;
  return hard_core_accept(std::move(candidates), 2.0 * spec.radius, side);
}

inline ScalarField generate_poisson_inclusions(const PoissonInclusionSpec& spec,
                                               const GridGeometry& geom, SampleSeed seed) {
  geom.validate();
  if (spec.value_in <= 0.0 || spec.value_out <= 0.0)
    throw std::invalid_argument("poisson: values must be positive");
  if (spec.radius <= 0.0 || spec.radius > 0.5 * geom.epsilon)
    throw std::invalid_argument("poisson: radius must lie in (0, epsilon/2]");

  const std::vector<PointCandidate> accepted = poisson_accepted_centers(spec, geom, seed);
  const double side = geom.side_length();

  ScalarField field(geom, spec.value_out);
  const int n = geom.pixels_per_side();
  const double h = geom.spacing();
  const double r2 = spec.radius * spec.radius;
  const int reach = static_cast<int>(std::ceil(spec.radius / h)) + 1;
  for (const auto& c : accepted) {
    const int ci = static_cast<int>(std::floor(c.x / h));
    const int cj = static_cast<int>(std::floor(c.y / h));
    for (int dj = -reach; dj <= reach; ++dj)
      for (int di = -reach; di <= reach; ++di) {
        const int i = wrap_index(ci + di, n);
        const int j = wrap_index(cj + dj, n);
        const double px = (i + 0.5) * h;
        const double py = (j + 0.5) * h;
        if (periodic_distance2(px, py, c.x, c.y, side) <= r2) field.at(i, j) = spec.value_in;
      }
  }
  return field;
}

inline ScalarField generate_counterexample(const CounterexampleSpec& spec,
                                           const GridGeometry& geom, SampleSeed seed) {
  geom.validate();
  detail::validate_counterexample(spec, geom.pixels_per_cell);

  const int m = geom.pixels_per_cell;
  const double mu = mu_star(spec.lambda);
  const std::vector<double> base_tile = render_micro_tile(m, spec.lambda, mu, spec.tau);

  // Plain board and microstructure board live on independent substreams of
  // the same seed ("product probability space"); the blend only mixes values.
  CounterRng plain_rng(seed, kStreamPrimary);
  CounterRng micro_rng(seed, kStreamMicroType);
  CounterRng orient_rng(seed, kStreamOrientation);

  ScalarField field(geom);
  const double kappa = spec.kappa;
  for (int ty = 0; ty < geom.cells; ++ty)
    for (int tx = 0; tx < geom.cells; ++tx) {
      const double plain = plain_rng.bernoulli(0.5) ? 1.0 : 0.5;
      const bool has_micro = micro_rng.bernoulli(0.5);
      const int orientation =
          spec.randomize_orientation ? static_cast<int>(orient_rng.uniform_index(8)) : 0;
      for (int py = 0; py < m; ++py)
        for (int px = 0; px < m; ++px) {
          double micro;
          if (has_micro) {
            const auto [qx, qy] = detail::apply_tile_symmetry(orientation, px, py, m);
            micro = base_tile[static_cast<std::size_t>(qy) * m + qx];
          } else {
            micro = spec.sigma;
          }
          field.at(tx * m + px, ty * m + py) = (1.0 - kappa) * plain + kappa * micro;
        }
    }
  return field;
}

inline ScalarField generate_layered(const LayeredSpec& spec, const GridGeometry& geom,
                                    SampleSeed /*seed*/) {
  geom.validate();
  if (spec.value_lo <= 0.0 || spec.value_hi <= 0.0)
    throw std::invalid_argument("layered: values must be positive");
  ScalarField field(geom);
  const int m = geom.pixels_per_cell;
  const int n = geom.pixels_per_side();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int stripe = (spec.axis == Axis::X ? i : j) / m;
      field.at(i, j) = (stripe % 2 == 0) ? spec.value_lo : spec.value_hi;
    }
  return field;
}

/// Declared ellipticity interval of the generator's law (every generated
/// pixel must land inside it).
inline std::pair<double, double> value_bounds(const GeneratorSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::pair<double, double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CheckerboardSpec>) {
          return {std::min(s.value_lo, s.value_hi), std::max(s.value_lo, s.value_hi)};
        } else if constexpr (std::is_same_v<T, PoissonInclusionSpec>) {
          return {std::min(s.value_in, s.value_out), std::max(s.value_in, s.value_out)};
        } else if constexpr (std::is_same_v<T, CounterexampleSpec>) {
          const double mu = mu_star(s.lambda);
          const double micro_lo = std::min({s.lambda, s.sigma, 1.0, mu});
          const double micro_hi = std::max({s.lambda, s.sigma, 1.0, mu});
          return {(1.0 - s.kappa) * 0.5 + s.kappa * micro_lo,
                  (1.0 - s.kappa) * 1.0 + s.kappa * micro_hi};
        } else {
          return {std::min(s.value_lo, s.value_hi), std::max(s.value_lo, s.value_hi)};
        }
      },
      spec.variant);
}

/// Pure function of (spec, geom, seed); checks the per-pixel bound invariant.
inline ScalarField generate(const GeneratorSpec& spec, const GridGeometry& geom,
                            SampleSeed seed) {
  ScalarField field = std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CheckerboardSpec>)
          return generate_checkerboard(s, geom, seed);
        else if constexpr (std::is_same_v<T, PoissonInclusionSpec>)
          return generate_poisson_inclusions(s, geom, seed);
        else if constexpr (std::is_same_v<T, CounterexampleSpec>)
          return generate_counterexample(s, geom, seed);
        else
          return generate_layered(s, geom, seed);
      },
      spec.variant);
  const auto [lo, hi] = value_bounds(spec);
  field.check_bounds(lo - 1e-12, hi + 1e-12);
  return field;
}

}  // namespace rvesel
