#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "rvesel/fieldgen.hpp"
#include "rvesel/pde.hpp"

using namespace rvesel;

TEST_CASE("edge coefficients: harmonic means of the adjacent pixels") {
  const GridGeometry geom{2, 2};
  ScalarField constant(geom, 0.7);
  const EdgeCoefficients ec = edge_coefficients(constant);
  for (double v : ec.x) REQUIRE(v == Catch::Approx(0.7).epsilon(1e-15));
  for (double v : ec.y) REQUIRE(v == Catch::Approx(0.7).epsilon(1e-15));

  ScalarField field(geom, 1.0);
  field.at(1, 0) = 0.5;
  const EdgeCoefficients e2 = edge_coefficients(field);
  CHECK(e2.x[e2.idx(0, 0)] == Catch::Approx(2.0 / 3.0).epsilon(1e-15));

  // Mean inequality: every edge lies between the adjacent pixel values.
  const ScalarField rnd = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                   {4, 2}, {5, 0});
  const EdgeCoefficients er = edge_coefficients(rnd);
  const int n = rnd.n();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double a = rnd.at(i, j), b = rnd.at_periodic(i + 1, j);
      REQUIRE(er.x[er.idx(i, j)] >= std::min(a, b) - 1e-15);
      REQUIRE(er.x[er.idx(i, j)] <= std::max(a, b) + 1e-15);
    }
}

TEST_CASE("corrector: constant field has zero corrector and zero iterations") {
  const GridGeometry geom{4, 2};
  const ScalarField field(geom, 0.8);
  const CorrectorSolution sol = solve_corrector(field, Axis::X);
  CHECK(sol.iterations == 0);
  CHECK(sol.residual_rel == 0.0);
  for (double v : sol.grad.x) REQUIRE(v == 0.0);
  for (double v : sol.grad.y) REQUIRE(v == 0.0);
}

TEST_CASE("corrector: x-layered field needs no correction transverse to the layers") {
  const ScalarField field = generate_layered({Axis::X, 0.5, 1.0}, {4, 4}, {0, 0});
  const CorrectorSolution sol = solve_corrector(field, Axis::Y);
  CHECK(sol.iterations == 0);
  for (double v : sol.grad.x) REQUIRE(v == 0.0);
  for (double v : sol.grad.y) REQUIRE(v == 0.0);
}

TEST_CASE("corrector: x-layered field reproduces the explicit 1D corrector") {
  const GridGeometry geom{4, 4};
  const ScalarField field = generate_layered({Axis::X, 1.0, 0.5}, geom, {0, 0});
  const CorrectorSolution sol = solve_corrector(field, Axis::X, {1e-11, 20});
  const EdgeCoefficients ec = edge_coefficients(field);
  const int n = field.n();
  // The flux through every x-edge is the harmonic mean 2/3, so the explicit
  // gradient is 2/(3 c) - 1 on an edge of conductivity c.
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double c = ec.x[ec.idx(i, j)];
      const double flux = c * (1.0 + sol.grad.x[ec.idx(i, j)]);
      REQUIRE(flux == Catch::Approx(2.0 / 3.0).margin(1e-8));
      REQUIRE(sol.grad.x[ec.idx(i, j)] ==
              Catch::Approx(2.0 / (3.0 * c) - 1.0).margin(1e-8));
      REQUIRE(std::abs(sol.grad.y[ec.idx(i, j)]) < 1e-8);
    }
}

TEST_CASE("corrector: gradient components have zero mean over all edges") {
  const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                     {8, 2}, {17, 4});
  const CorrectorSolution sol = solve_corrector(field, Axis::X);
  double sx = 0.0, sy = 0.0;
  for (double v : sol.grad.x) sx += v;
  for (double v : sol.grad.y) sy += v;
  const double slack = 1e-12 * static_cast<double>(field.values.size());
  CHECK(std::abs(sx) <= slack);
  CHECK(std::abs(sy) <= slack);
}

TEST_CASE("corrector: preconditioned residual decreases monotonically") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                       {8, 4}, {41, s});
    const CorrectorSolution sol = solve_corrector(field, Axis::X);
    REQUIRE(sol.residual_history.size() >= 2);
    for (std::size_t k = 1; k < sol.residual_history.size(); ++k)
      REQUIRE(sol.residual_history[k] <=
              sol.residual_history[k - 1] + 1e-13 * sol.residual_history[0]);
  }
}

TEST_CASE("corrector: non-convergence raises an error carrying the residual history") {
  const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                     {8, 2}, {3, 3});
  try {
    solve_corrector(field, Axis::X, {1e-9, 0});
    FAIL("expected SolverError");
  } catch (const SolverError& err) {
    CHECK_FALSE(err.residual_history.empty());
  }
}

TEST_CASE("corrector: scaling the field leaves the corrector unchanged") {
  const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.5, 1.0, 0.5}, {}},
                                     {4, 4}, {21, 9});
  ScalarField scaled = field;
  for (double& v : scaled.values) v *= 3.0;
  const SolveOptions opts{1e-9, 20};
  const CorrectorSolution a = solve_corrector(field, Axis::X, opts);
  const CorrectorSolution b = solve_corrector(scaled, Axis::X, opts);
  double diff = 0.0;
  for (std::size_t k = 0; k < a.grad.x.size(); ++k) {
    diff = std::max(diff, std::abs(a.grad.x[k] - b.grad.x[k]));
    diff = std::max(diff, std::abs(a.grad.y[k] - b.grad.y[k]));
  }
  CHECK(diff <= 10.0 * opts.tol);
}

TEST_CASE("operator: div(a grad .) is self-adjoint") {
  const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                     {4, 4}, {8, 1});
  const EdgeCoefficients edges = edge_coefficients(field);
  const int n = field.n();
  const std::size_t count = static_cast<std::size_t>(n) * n;
  CounterRng rng({1000, 0}, 0);
  std::vector<double> u(count), w(count), au(count), aw(count);
  for (auto* v : {&u, &w})
    for (double& x : *v) x = rng.uniform(-1.0, 1.0);
  apply_div_a_grad(edges, u, au, field.geometry.spacing());
  apply_div_a_grad(edges, w, aw, field.geometry.spacing());
  double upper = 0.0, lower = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    upper += au[k] * w[k];
    lower += u[k] * aw[k];
    scale += std::abs(au[k] * w[k]);
  }
  CHECK(std::abs(upper - lower) <= 1e-12 * scale);
}

TEST_CASE("corrector: layered flux is conserved across columns") {
  const GridGeometry geom{4, 4};
  const ScalarField field = generate_layered({Axis::X, 1.0, 0.5}, geom, {0, 0});
  const CorrectorSolution sol = solve_corrector(field, Axis::X);
  const EdgeCoefficients ec = edge_coefficients(field);
  const int n = field.n();
  std::vector<double> column_flux(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      column_flux[static_cast<std::size_t>(i)] +=
          ec.x[ec.idx(i, j)] * (1.0 + sol.grad.x[ec.idx(i, j)]);
    column_flux[static_cast<std::size_t>(i)] /= n;
    total += column_flux[static_cast<std::size_t>(i)];
  }
  total /= n;
  for (double f : column_flux) CHECK(f == Catch::Approx(total).margin(1e-8));
}

TEST_CASE("aux solve: constant field gives zero solution") {
  const ScalarField field({4, 2}, 1.3);
  const AuxSolution sol = solve_aux_poisson(field, Axis::X);
  for (double v : sol.grad.x) REQUIRE(v == 0.0);
  for (double v : sol.grad.y) REQUIRE(v == 0.0);
}

TEST_CASE("aux solve: single-mode field matches the discrete-symbol closed form") {
  const GridGeometry geom{4, 8};
  const int n = geom.pixels_per_side();
  const double eta = 0.3;
  ScalarField field(geom);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      field.at(i, j) = 1.0 + eta * std::cos(2.0 * M_PI * (i + 0.5) / n);

  const AuxSolution sol = solve_aux_poisson(field, Axis::X);

  // Independent oracle: the problem reduces to one dimension; solve it by a
  // naive DFT with the symbols of the forward/backward differences.
  const EdgeCoefficients ec = edge_coefficients(field);
  const double h = geom.spacing();
  std::vector<double> rhs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int im = i == 0 ? n - 1 : i - 1;
    rhs[static_cast<std::size_t>(i)] = (ec.x[ec.idx(i, 0)] - ec.x[ec.idx(im, 0)]) / h;
  }
  std::vector<std::complex<double>> vhat(static_cast<std::size_t>(n), 0.0);
  for (int k = 1; k < n; ++k) {
    std::complex<double> bk = 0.0;
    for (int i = 0; i < n; ++i)
      bk += rhs[static_cast<std::size_t>(i)] *
            std::exp(std::complex<double>(0.0, -2.0 * M_PI * k * i / n));
    const double sym = (2.0 - 2.0 * std::cos(2.0 * M_PI * k / n)) / (h * h);
    vhat[static_cast<std::size_t>(k)] = bk / sym;
  }
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::complex<double> s = 0.0;
    for (int k = 1; k < n; ++k)
      s += vhat[static_cast<std::size_t>(k)] *
           std::exp(std::complex<double>(0.0, 2.0 * M_PI * k * i / n));
    v[static_cast<std::size_t>(i)] = s.real() / n;
  }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int ip = i + 1 == n ? 0 : i + 1;
      const double oracle =
          (v[static_cast<std::size_t>(ip)] - v[static_cast<std::size_t>(i)]) / h;
      REQUIRE(sol.grad.x[ec.idx(i, j)] == Catch::Approx(oracle).margin(1e-10));
      REQUIRE(std::abs(sol.grad.y[ec.idx(i, j)]) < 1e-10);
    }

  // 1D identity: the gradient equals minus the mean-free edge coefficient.
  double mean_ax = 0.0;
  for (int i = 0; i < n; ++i) mean_ax += ec.x[ec.idx(i, 0)];
  mean_ax /= n;
  for (int i = 0; i < n; ++i)
    CHECK(sol.grad.x[ec.idx(i, 0)] ==
          Catch::Approx(-(ec.x[ec.idx(i, 0)] - mean_ax)).margin(1e-10));
}

TEST_CASE("aux solve: transposing the field swaps the directions") {
  const ScalarField field = generate(GeneratorSpec{CheckerboardSpec{0.2, 1.0, 0.5}, {}},
                                     {4, 2}, {44, 2});
  const ScalarField fieldT = field.transposed();
  const AuxSolution vx = solve_aux_poisson(field, Axis::X);
  const AuxSolution vyT = solve_aux_poisson(fieldT, Axis::Y);
  const int n = field.n();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      REQUIRE(vx.grad.x[vx.grad.idx(i, j)] ==
              Catch::Approx(vyT.grad.y[vyT.grad.idx(j, i)]).margin(1e-12));
}
