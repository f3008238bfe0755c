#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "mhdtc/checkpoint.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/random_field.hpp"
#include "mhdtc/steady.hpp"

using namespace mhdtc;

namespace {

// Composite Simpson on [a, b]; independent of the Chebyshev quadrature.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

const TCProfile kPreset = solve_tc_coefficients(1.0, 2.0, 3.0, 1.0);

double max_abs(const SpectralField& f) { return f.data().cwiseAbs().maxCoeff(); }

// phi = c(r) e^{i(m theta + k z)} placed on one mode (complex field).
ScalarField single_mode(GridPtr g, LayoutPtr l, ModeIndex q, const std::function<cplx(double)>& c) {
  ScalarField phi(g, l, 1);
  const int i = l->find(q);
  for (int j = 0; j < g->size(); ++j) phi.radial(0, i)(j) = c(g->nodes(j));
  return phi;
}

}  // namespace

TEST(FieldCalculus, TaylorCouetteIsSolenoidal) {
  auto g = make_grid(1.0, 2.0, 32);
  auto l = ModeLayout::box(2, 2);
  const auto u = evaluate_tc(kPreset, g, l);
  EXPECT_LE(l2_norm(divergence(u)), 1e-12);
  EXPECT_EQ(l2_norm(divergence(SpectralField(g, l))), 0.0);
}

TEST(FieldCalculus, DivergenceOfGradientIsLaplacian) {
  auto g = make_grid(1.0, 2.0, 24);
  auto l = ModeLayout::box(2, 2);
  // phi = Re{r^2 e^{i(theta+z)}}
  ScalarField phi(g, l, 1);
  for (int j = 0; j < g->size(); ++j) {
    const double r2 = g->nodes(j) * g->nodes(j);
    phi.radial(0, l->find({1, 1}))(j) = 0.5 * r2;
    phi.radial(0, l->find({-1, -1}))(j) = 0.5 * r2;
  }
  const auto lhs = divergence(gradient(phi));
  const auto rhs = scalar_laplacian(phi);
  EXPECT_LE(max_abs(lhs - rhs), 1e-8 * max_abs(rhs));
}

TEST(FieldCalculus, CurlOfTaylorCouette) {
  auto g = make_grid(1.0, 2.0, 32);
  auto l = ModeLayout::box(0, 0);
  const auto w = curl(evaluate_tc(kPreset, g, l));
  for (int j = 0; j < g->size(); ++j) {
    const double r = g->nodes(j);
    EXPECT_NEAR(std::abs(w.radial(0, 0)(j)), 0.0, 1e-12);
    EXPECT_NEAR(w.radial(1, 0)(j).real(), -1.0 / (r * std::log(2.0)), 1e-10);
    EXPECT_NEAR(w.radial(2, 0)(j).real(), 4.0, 1e-10);
  }
}

TEST(FieldCalculus, CurlGradAndDivCurlVanish) {
  auto g = make_grid(1.0, 2.0, 24);
  auto l = ModeLayout::box(3, 2);
  const auto phi = random_smooth(11, g, l, 1);
  EXPECT_LE(max_abs(curl(gradient(phi))), 1e-10 * max_abs(gradient(phi)));
  const auto f = random_smooth(12, g, l, 3);
  EXPECT_LE(max_abs(divergence(curl(f))), 1e-10 * max_abs(curl(f)));
}

TEST(FieldCalculus, GradientExamples) {
  auto g = make_grid(1.0, 2.0, 24);
  auto l = ModeLayout::box(1, 1);
  EXPECT_LE(max_abs(gradient(single_mode(g, l, {0, 0}, [](double) { return cplx(3.0); }))), 1e-12);

  const auto glog = gradient(single_mode(g, l, {0, 0}, [](double r) { return cplx(std::log(r)); }));
  const int i0 = l->find({0, 0});
  for (int j = 0; j < g->size(); ++j) EXPECT_NEAR(std::abs(glog.radial(0, i0)(j) - 1.0 / g->nodes(j)), 0.0, 1e-10);
  EXPECT_LE(glog.component(1).cwiseAbs().maxCoeff() + glog.component(2).cwiseAbs().maxCoeff(), 1e-14);

  const auto gw = gradient(single_mode(g, l, {1, 1}, [](double) { return cplx(1.0); }));
  const int i1 = l->find({1, 1});
  for (int j = 0; j < g->size(); ++j) {
    EXPECT_LE(std::abs(gw.radial(0, i1)(j)), 1e-12);
    EXPECT_LE(std::abs(gw.radial(1, i1)(j) - I_unit / g->nodes(j)), 1e-15);
    EXPECT_LE(std::abs(gw.radial(2, i1)(j) - I_unit), 1e-15);
  }
}

TEST(FieldCalculus, TaylorCouetteIsVectorHarmonic) {
  auto g = make_grid(1.0, 2.0, 32);
  const auto lap = vector_laplacian(evaluate_tc(kPreset, g, ModeLayout::box(0, 0)));
  EXPECT_LE(max_abs(lap), 1e-9);
}

TEST(FieldCalculus, AxialComponentUsesScalarLaplacian) {
  auto g = make_grid(1.0, 2.0, 32);
  auto l = ModeLayout::box(2, 2);
  SpectralField f(g, l, 3);
  const int i = l->find({2, -1});
  for (int j = 0; j < g->size(); ++j) f.radial(2, i)(j) = std::sin(std::numbers::pi * (g->nodes(j) - 1.0));
  const auto lap = vector_laplacian(f);
  ScalarField fz = SpectralField::zeros_like(f, 1);
  fz.component(0) = f.component(2);
  const auto slap = scalar_laplacian(fz);
  EXPECT_LE((lap.component(2) - slap.component(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(lap.component(0).cwiseAbs().maxCoeff() + lap.component(1).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FieldCalculus, LaplacianCommutesWithGradient) {
  // Third derivatives amplify round-off like Nr^6, so stay at moderate Nr.
  auto g = make_grid(1.0, 2.0, 24);
  auto l = ModeLayout::box(2, 2);
  const auto phi = random_smooth(5, g, l, 1);
  const auto lhs = vector_laplacian(gradient(phi));
  const auto rhs = gradient(scalar_laplacian(phi));
  EXPECT_LE(l2_norm(lhs - rhs), 1e-8 * l2_norm(rhs));
}

TEST(FieldNorms, ConstantMagnitudeField) {
  auto g = make_grid(1.0, 2.0, 16);
  auto l = ModeLayout::box(3, 2);
  SpectralField f(g, l, 3);
  f.radial(0, l->find({0, 0})).setOnes();
  EXPECT_NEAR(lp_norm(f, 2.0), std::sqrt(6.0 * std::numbers::pi * std::numbers::pi), 1e-12);
  EXPECT_NEAR(lp_norm(f, 2.0), 7.6953, 1e-4);
  EXPECT_NEAR(lp_norm(f, std::numeric_limits<double>::infinity()), 1.0, 1e-15);
  EXPECT_NEAR(lp_norm(f, 3.0), std::cbrt(6.0 * std::numbers::pi * std::numbers::pi), 1e-12);
  EXPECT_THROW(lp_norm(f, 0.5), InvalidArgument);
}

TEST(FieldNorms, ParsevalMatchesPhysicalQuadrature) {
  auto g = make_grid(1.0, 2.0, 20);
  for (auto l : {ModeLayout::box(3, 4), ModeLayout::helical({1, -2}, 5)}) {
    const auto f = random_divfree(3, BcTag::conducting_magnetic, g, l);
    EXPECT_NEAR(lp_norm(f, 2.0), l2_norm(f), 1e-10 * l2_norm(f));
  }
}

TEST(FieldNorms, HelicalLayoutAgreesWithBox) {
  // The same field represented in both layouts has identical norms.
  auto g = make_grid(1.0, 2.0, 16);
  auto hel = ModeLayout::helical({1, -2}, 3);
  const auto f = random_divfree(8, BcTag::dirichlet_velocity, g, hel);
  auto box = ModeLayout::box(3, 6);
  SpectralField fb(g, box, 3);
  for (int i = 0; i < hel->size(); ++i)
    for (int c = 0; c < 3; ++c) fb.radial(c, box->find(hel->mode(i))) = f.radial(c, i);
  EXPECT_NEAR(lp_norm(f, 2.0), lp_norm(fb, 2.0), 1e-12 * lp_norm(f, 2.0));
  // |f|^p is not band-limited for p != 2; the two sampling grids differ.
  for (double p : {3.0, 4.0}) EXPECT_NEAR(lp_norm(f, p), lp_norm(fb, p), 1e-6 * lp_norm(f, p)) << p;
}

TEST(FieldNorms, SobolevNorms) {
  auto g = make_grid(1.0, 2.0, 40);
  auto l = ModeLayout::box(1, 1);
  const auto u = evaluate_tc(kPreset, g, l);
  EXPECT_DOUBLE_EQ(sobolev_norm(u, 0, 2.0), lp_norm(u, 2.0));

  const auto& p = kPreset;
  const double area = 4.0 * std::numbers::pi * std::numbers::pi;
  const double l2 = std::sqrt(area * simpson([&](double r) {
                      return (p.u_theta(r) * p.u_theta(r) + p.u_z(r) * p.u_z(r)) * r;
                    }, 1.0, 2.0));
  const double h1 = std::sqrt(area * simpson([&](double r) {
                      const double a = p.du_theta(r), b = p.du_z(r), c = p.u_theta(r) / r;
                      return (a * a + b * b + c * c) * r;
                    }, 1.0, 2.0));
  EXPECT_NEAR(sobolev_norm(u, 1, 2.0), l2 + h1, 1e-9 * (l2 + h1));

  const auto f = random_divfree(4, BcTag::none, g, ModeLayout::box(2, 2));
  for (int s : {0, 1, 2}) EXPECT_NEAR(sobolev_norm(3.7 * f, s, 2.0), 3.7 * sobolev_norm(f, s, 2.0), 1e-12 * sobolev_norm(f, s, 2.0) * 4);
  EXPECT_THROW(sobolev_norm(f, 3, 2.0), InvalidArgument);
  EXPECT_THROW(sobolev_norm(f, 1, 1.0), InvalidArgument);
}

TEST(FieldNorms, CovariantGradientOfRigidRotationIsAntisymmetric) {
  // u = r e_theta is a rigid rotation: grad u is the rotation generator,
  // with (theta, r) = -1 and (r, theta) = +1 in the (direction, component) order.
  auto g = make_grid(1.0, 2.0, 12);
  auto l = ModeLayout::box(0, 0);
  SpectralField u(g, l, 3);
  u.radial(1, 0) = g->nodes.cast<cplx>();
  const auto d = covariant_gradient(u);
  ASSERT_EQ(d.ncomp(), 9);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const double expect = (a == 0 && b == 1) ? 1.0 : (a == 1 && b == 0) ? -1.0 : 0.0;
      EXPECT_LE((d.radial(3 * a + b, 0).array() - expect).abs().maxCoeff(), 1e-12) << a << b;
    }
}

TEST(RandomField, DivergenceFreeWithBoundaryConditions) {
  auto g = make_grid(1.0, 2.0, 24);
  auto l = ModeLayout::box(3, 3);
  for (auto bc : {BcTag::conducting_magnetic, BcTag::dirichlet_velocity}) {
    const auto f = random_divfree(17, bc, g, l);
    EXPECT_LE(divergence_score(f), 1e-10);
    EXPECT_LE(boundary_residual(f, bc), 1e-10);
    EXPECT_LE(f.reality_defect(), 0.0);
    EXPECT_GT(l2_norm(f), 0.0);
  }
}

TEST(RandomField, Deterministic) {
  auto g = make_grid(1.0, 2.0, 16);
  auto l = ModeLayout::box(2, 2);
  const auto a = random_divfree(99, BcTag::conducting_magnetic, g, l);
  const auto b = random_divfree(99, BcTag::conducting_magnetic, g, l);
  EXPECT_TRUE(a.data() == b.data());
  const auto c = random_divfree(100, BcTag::conducting_magnetic, g, l);
  EXPECT_FALSE(a.data() == c.data());
}

TEST(Checkpoint, BitExactRoundTrip) {
  auto g = make_grid(1.0, 2.0, 10);
  auto l = ModeLayout::box(2, 3);
  const auto f = random_divfree(5, BcTag::conducting_magnetic, g, l);
  const auto path = (std::filesystem::temp_directory_path() / "mhdtc_ckpt_test.bin").string();
  write_checkpoint(path, f, 1.25);
  const auto back = read_checkpoint(path);
  EXPECT_EQ(back.time, 1.25);
  EXPECT_EQ(back.field.grid().nr, 10);
  EXPECT_EQ(back.field.layout().mmax(), 2);
  EXPECT_EQ(back.field.layout().kmax(), 3);
  EXPECT_TRUE(back.field.data() == f.data());
  EXPECT_EQ(std::filesystem::file_size(path), 6u + 16u + 24u + 16u * 3 * 11 * 5 * 7);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = (std::filesystem::temp_directory_path() / "mhdtc_bad.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTMHD";
  }
  EXPECT_THROW(read_checkpoint(path), IoError);
  std::remove(path.c_str());
  EXPECT_THROW(read_checkpoint("/nonexistent/dir/x.bin"), IoError);
}
