#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fenri/phantom.hpp"
#include "fenri/rng.hpp"
#include "oracles.hpp"

using namespace fenri;
using namespace fenri::phantom;

namespace {

constexpr double kTwoSqrtPi = 3.5449077018110318;  // 2 sqrt(pi) = 1 / Y00

Phantom straight_z_phantom(double fraction = 0.75, double radius = 3.0) {
  Phantom ph;
  ph.grid = make_grid(Vec3i(12, 12, 12), Vec3(1.25, 1.25, 1.25), Vec3::Zero());
  BundleSpec b;
  b.centerline = {Vec3(6.875, 6.875, -5.0), Vec3(6.875, 6.875, 19.0)};
  b.radius = radius;
  b.volume_fraction = fraction;
  ph.bundles.push_back(b);
  return ph;
}

}  // namespace

TEST_CASE("ground_truth_fodf: background, on-axis peak, crossing") {
  const Phantom ph = straight_z_phantom();
  const PhantomSampler sampler(ph);

  // outside all bundles the anisotropic fODF vanishes
  const Eigen::VectorXd bg = sampler.ground_truth_fodf(Vec3(0.1, 0.1, 6.0));
  CHECK(bg.cwiseAbs().maxCoeff() == 0.0);

  const Vec3 on_axis(6.875, 6.875, 6.0);
  const Eigen::VectorXd c = sampler.ground_truth_fodf(on_axis);
  const auto peak = oracles::dense_grid_argmax(c, Vec3::UnitZ(), 10.0, 0.1);
  CHECK(sh::axis_angle(peak.direction, Vec3::UnitZ()) < 0.5 * kPi / 180.0);

  Phantom crossing = straight_z_phantom(0.45);
  BundleSpec bx;
  bx.centerline = {Vec3(-5.0, 6.875, 6.875), Vec3(19.0, 6.875, 6.875)};
  bx.radius = 3.0;
  bx.volume_fraction = 0.45;
  crossing.bundles.push_back(bx);
  const PhantomSampler cs(crossing);
  const Vec3 mid(6.875, 6.875, 6.875);
  const Eigen::VectorXd cc = cs.ground_truth_fodf(mid);
  const auto pz = oracles::dense_grid_argmax(cc, Vec3::UnitZ(), 8.0, 0.1);
  const auto px = oracles::dense_grid_argmax(cc, Vec3::UnitX(), 8.0, 0.1);
  CHECK(sh::axis_angle(pz.direction, Vec3::UnitZ()) < 2.0 * kPi / 180.0);
  CHECK(sh::axis_angle(px.direction, Vec3::UnitX()) < 2.0 * kPi / 180.0);
  CHECK(pz.amplitude == doctest::Approx(px.amplitude).epsilon(1e-6));
}

TEST_CASE("ground_truth_fodf: c0 integrates to the anisotropic fraction") {
  Phantom ph = straight_z_phantom(0.6);
  const PhantomSampler sampler(ph);
  const Eigen::VectorXd inside = sampler.ground_truth_fodf(Vec3(6.875, 6.875, 6.0));
  CHECK(inside[0] * kTwoSqrtPi == doctest::Approx(0.6).epsilon(1e-3));
}

TEST_CASE("simulate_dwi: closed forms") {
  Phantom ph = straight_z_phantom(1.0, 4.0);
  const PhantomSampler sampler(ph);
  Eigen::VectorXd bvals(3);
  bvals << 0.0, 1000.0, 1000.0;
  Eigen::Matrix3Xd grads(3, 3);
  grads.col(0).setZero();
  grads.col(1) = Vec3::UnitZ();
  grads.col(2) = Vec3::UnitX();
  const auto scheme = make_scheme(bvals, grads);
  const ChannelVolume dwi = sampler.simulate_dwi(scheme);

  const std::int64_t v = ph.grid.linear_index(Vec3i(5, 5, 6));  // inside, f=1
  CHECK(dwi.data(0, v) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(dwi.data(1, v) ==
        doctest::Approx(1000.0 * std::exp(-1000.0 * 1.7e-3)).epsilon(1e-10));
  CHECK(dwi.data(2, v) ==
        doctest::Approx(1000.0 * std::exp(-1000.0 * 0.2e-3)).epsilon(1e-10));
  CHECK(dwi.data(2, v) > dwi.data(1, v));
}

TEST_CASE("simulate_dwi: signal decreases with b for fixed direction") {
  Phantom ph = straight_z_phantom(0.7);
  const PhantomSampler sampler(ph);
  const Vec3 g = Vec3(1, 1, 1).normalized();
  Eigen::VectorXd bvals(3);
  bvals << 0.0, 1000.0, 3000.0;
  Eigen::Matrix3Xd grads(3, 3);
  grads.col(0).setZero();
  grads.col(1) = g;
  grads.col(2) = g;
  const ChannelVolume dwi = sampler.simulate_dwi(make_scheme(bvals, grads));
  for (std::int64_t v = 0; v < ph.grid.num_voxels(); ++v) {
    CHECK(dwi.data(0, v) > dwi.data(1, v));
    CHECK(dwi.data(1, v) > dwi.data(2, v));
  }
}

TEST_CASE("simulate_dwi: overfull fractions are rejected") {
  Phantom ph = straight_z_phantom(0.7);
  BundleSpec dup = ph.bundles[0];
  dup.volume_fraction = 0.6;
  ph.bundles.push_back(dup);  // 1.3 total inside the tube
  const PhantomSampler sampler(ph);
  const auto scheme = standard_scheme(1, {{1000.0, 6}});
  CHECK_THROWS_AS(sampler.simulate_dwi(scheme), InvalidArgument);
}

TEST_CASE("rician noise: sigma 0 is identity, Rayleigh mean at s=0") {
  const VolumeGrid g = make_grid(Vec3i(100, 100, 100), Vec3(1, 1, 1), Vec3::Zero());
  ChannelVolume zeros = make_volume(g, 1);

  const ChannelVolume same = add_rician_noise_sigma(zeros, 0.0, 5);
  CHECK((same.data - zeros.data).cwiseAbs().maxCoeff() == 0.0);

  const double sigma = 2.0;
  const ChannelVolume noisy = add_rician_noise_sigma(zeros, sigma, 5);
  const double mean = noisy.data.mean();
  const double expect = sigma * std::sqrt(kPi / 2.0);
  CHECK(std::abs(mean - expect) / expect < 0.02);
}

TEST_CASE("rician noise: 30 dB calibration on a constant volume") {
  const VolumeGrid g = make_grid(Vec3i(64, 64, 64), Vec3(1, 1, 1), Vec3::Zero());
  ChannelVolume vol = make_volume(g, 1);
  vol.data.setConstant(1000.0);
  Eigen::VectorXd bvals(1);
  bvals << 0.0;
  Eigen::Matrix3Xd grads = Eigen::Matrix3Xd::Zero(3, 1);
  const auto scheme = make_scheme(bvals, grads);

  const ChannelVolume noisy = add_rician_noise(vol, scheme, 30.0, 17);
  const double m = noisy.data.mean();
  const double var = (noisy.data.array() - m).square().mean();
  const double snr_hat = 20.0 * std::log10(1000.0 / std::sqrt(var));
  CHECK(snr_hat > 29.0);
  CHECK(snr_hat < 31.0);

  // deterministic under a fixed seed
  const ChannelVolume again = add_rician_noise(vol, scheme, 30.0, 17);
  CHECK((noisy.data - again.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degrade: identity case, 1.6x grid, channel subsetting") {
  Phantom ph = straight_z_phantom(0.7);
  ph.grid = make_grid(Vec3i(16, 16, 16), Vec3(1.25, 1.25, 1.25), Vec3::Zero());
  ph.bundles[0].centerline = {Vec3(10, 10, -5), Vec3(10, 10, 25)};
  const PhantomSampler sampler(ph);
  const auto scheme = standard_scheme(2, {{1000.0, 6}, {3000.0, 6}});
  const ChannelVolume dwi = sampler.simulate_dwi(scheme);

  std::vector<int> all(size_t(scheme.size()));
  for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  const auto [same, s1] = degrade(dwi, scheme, 1.25, all,
                                  std::numeric_limits<double>::infinity(), 3);
  CHECK((same.data - dwi.data).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(s1.size() == scheme.size());

  const auto keep = keep_first_channels(scheme, 1, {{1000.0, 3}, {3000.0, 3}});
  CHECK(keep.size() == 7);
  const auto [coarse, s2] = degrade(dwi, scheme, 2.0, keep, 30.0, 3);
  CHECK(coarse.grid.shape == Vec3i(10, 10, 10));
  CHECK((coarse.grid.voxel_size - Vec3(2, 2, 2)).norm() < 1e-12);
  CHECK(coarse.channels() == 7);
  CHECK(s2.size() == 7);

  const auto [coarse2, s3] = degrade(dwi, scheme, 2.0, keep, 30.0, 3);
  CHECK((coarse.data - coarse2.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degrade: the 9 + 45 + 45 subset of an HCP-like scheme") {
  // 18 b0 + 90 b1000 + 90 b3000 full protocol; the degraded subset keeps the
  // first 9/45/45, i.e. 99 channels
  const auto scheme = standard_scheme(18, {{1000.0, 90}, {3000.0, 90}});
  const auto keep = keep_first_channels(scheme, 9, {{1000.0, 45}, {3000.0, 45}});
  CHECK(keep.size() == 99);
  CHECK_THROWS_AS(keep_first_channels(scheme, 19, {}), InvalidArgument);
}

TEST_CASE("ground_truth_streamlines: straight lines inside the tube") {
  Phantom ph = straight_z_phantom(0.75, 3.0);
  const PhantomSampler sampler(ph);
  const StreamlineSet lines = sampler.ground_truth_streamlines(0, 20, 11);
  REQUIRE(lines.size() == 20);

  const Curve& curve = sampler.curve(0);
  for (const auto& line : lines.lines) {
    REQUIRE(line.points.size() >= 3);
    const Vec3 dir = (line.points.back() - line.points.front()).normalized();
    for (size_t i = 1; i + 1 < line.points.size(); ++i) {
      const Vec3 d = (line.points[i] - line.points.front());
      CHECK((d - d.dot(dir) * dir).norm() < 1e-6);  // collinear
      CHECK(curve.nearest(line.points[i]).distance <= 3.0 + 1e-9);
      const double spacing = (line.points[i] - line.points[i - 1]).norm();
      CHECK(spacing == doctest::Approx(0.5).epsilon(1e-9));
    }
    CHECK(curve.nearest(line.seed).distance <= 3.0 + 1e-9);
  }
}

TEST_CASE("ground_truth_streamlines: quarter-circle arc length") {
  Phantom ph;
  ph.grid = make_grid(Vec3i(20, 20, 20), Vec3(1.25, 1.25, 1.25), Vec3::Zero());
  const double R = 8.0;
  const Vec3 center(4.0, 12.0, 4.0);
  BundleSpec b;
  // dense control points so the interpolated centerline is circular to well
  // under the 1% length budget
  for (int k = 0; k <= 18; ++k) {
    const double th = (kPi / 2.0) * k / 18.0;
    b.centerline.push_back(center + R * Vec3(std::cos(th), 0.0, std::sin(th)));
  }
  b.radius = 2.0;
  ph.bundles.push_back(b);
  const PhantomSampler sampler(ph);

  const StreamlineSet lines = sampler.ground_truth_streamlines(0, 10, 29);
  for (const auto& line : lines.lines) {
    // effective radius: in-plane distance of the first point from the axis
    Vec3 rel = line.points.front() - center;
    rel.y() = 0.0;
    const double rho = rel.norm();
    const double expect = rho * kPi / 2.0;
    CHECK(std::abs(line.length() - expect) / expect < 0.01);
  }
}

TEST_CASE("scheme construction and validation") {
  const auto s = standard_scheme(2, {{1000.0, 5}, {3000.0, 7}});
  CHECK(s.size() == 14);
  CHECK(s.is_b0(0));
  CHECK(s.is_b0(1));
  CHECK(!s.is_b0(2));
  for (int i = 2; i < s.size(); ++i)
    CHECK(s.gradients.col(i).norm() == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::VectorXd bv(1);
  bv << 1000.0;
  Eigen::Matrix3Xd g(3, 1);
  g.col(0) = Vec3(1.0, 1.0, 0.0);  // norm sqrt(2)
  CHECK_THROWS_AS(make_scheme(bv, g), InvalidArgument);
}

TEST_CASE("normalize_by_b0 scales foreground-mean b0 to 1") {
  Phantom ph = straight_z_phantom();
  const PhantomSampler sampler(ph);
  const auto scheme = standard_scheme(2, {{1000.0, 4}});
  const ChannelVolume dwi = sampler.simulate_dwi(scheme);
  const ChannelVolume norm = normalize_by_b0(dwi, scheme);
  CHECK(norm.data.row(0).mean() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("watson kernel: normalized mass and axial symmetry") {
  CHECK(watson_normalization(20.0) > 0);
  const Eigen::VectorXd c = watson_sh(20.0, Vec3::UnitZ());
  CHECK(c[0] * kTwoSqrtPi == doctest::Approx(1.0).epsilon(1e-6));
  // zonal in the aligned frame: all m != 0 terms vanish
  for (int l = 2; l <= 8; l += 2)
    for (int m = -l; m <= l; ++m)
      if (m != 0) CHECK(std::abs(c[sh::coeff_index(l, m)]) < 1e-9);
}
