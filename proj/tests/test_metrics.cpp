#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fenri/metrics.hpp"
#include "fenri/rng.hpp"
#include "oracles.hpp"

using namespace fenri;
using namespace fenri::metrics;

namespace {

constexpr double kY00 = 0.28209479177387814;

/// Coefficients whose ODF is positive at `axis` and exactly zero on the
/// orthogonal great circle (axial kernel minus its 90-degree floor).
Eigen::VectorXd one_hot_axis(const Vec3& axis) {
  Eigen::VectorXd c = oracles::axial_kernel_sh(20.0, axis);
  Vec3 perp = axis.unitOrthogonal();
  const double floor_value = sh::evaluate_odf(c, perp);
  c[0] -= floor_value / kY00;
  return c;
}

ChannelVolume volume_of(const std::vector<Eigen::VectorXd>& voxels) {
  const int n = int(voxels.size());
  const VolumeGrid g = make_grid(Vec3i(std::max(2, n), 2, 2), Vec3(1, 1, 1),
                                 Vec3::Zero());
  ChannelVolume v = make_volume(g, 45);
  for (int i = 0; i < n; ++i) v.data.col(i) = voxels[size_t(i)];
  return v;
}

}  // namespace

TEST_CASE("jensen_shannon: bounds and direct-summation oracle") {
  Eigen::VectorXd p(4), q(4);
  p << 0.25, 0.25, 0.25, 0.25;
  CHECK(jensen_shannon(p, p) == 0.0);

  p << 1, 0, 0, 0;
  q << 0, 1, 0, 0;
  CHECK(jensen_shannon(p, q) == doctest::Approx(1.0).epsilon(1e-12));

  // 50/50 mixture vs one component for orthogonal P, Q
  Eigen::VectorXd mix = 0.5 * p + 0.5 * q;
  CHECK(jensen_shannon(p, mix) ==
        doctest::Approx(oracles::jsd_direct(p, mix)).epsilon(1e-12));

  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(jensen_shannon(a, b) ==
          doctest::Approx(oracles::jsd_direct(a, b)).epsilon(1e-12));
    CHECK(jensen_shannon(a, b) == jensen_shannon(b, a));  // symmetry, exact
    CHECK(jensen_shannon(a, b) >= 0.0);
    CHECK(jensen_shannon(a, b) <= 1.0);
  }
}

TEST_CASE("msjsd: identical volumes score zero, disjoint densities score one") {
  const Eigen::VectorXd cx = one_hot_axis(Vec3::UnitX());
  const Eigen::VectorXd cz = one_hot_axis(Vec3::UnitZ());
  const ChannelVolume a = volume_of({cx, cz});
  const ChannelVolume b = volume_of({cz, cx});
  const std::vector<std::int64_t> mask{0, 1};

  CHECK(msjsd(a, a, msjsd_directions(), mask) == 0.0);

  // two-direction density estimate: (positive, 0) vs (0, positive)
  Eigen::Matrix3Xd two(3, 2);
  two.col(0) = Vec3::UnitX();
  two.col(1) = Vec3::UnitZ();
  const auto dirs = sh::make_direction_set(two, false);
  CHECK(msjsd(a, b, dirs, mask) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(msjsd(a, b, dirs, {}), InvalidArgument);
}

TEST_CASE("waae: zero for identical, oracle angle for a 10-degree offset") {
  const Eigen::VectorXd target_c = oracles::axial_kernel_sh(20.0, Vec3::UnitZ());
  const Vec3 off_axis = (std::cos(10.0 * kPi / 180.0) * Vec3::UnitZ() +
                         std::sin(10.0 * kPi / 180.0) * Vec3::UnitX());
  const Eigen::VectorXd pred_c = oracles::axial_kernel_sh(20.0, off_axis);

  const ChannelVolume t = volume_of({target_c});
  const ChannelVolume p = volume_of({pred_c});
  const std::vector<std::int64_t> mask{0};

  CHECK(waae(t, t, mask) == 0.0);

  const auto pt = oracles::dense_grid_argmax(target_c, Vec3::UnitZ());
  const auto pp = oracles::dense_grid_argmax(pred_c, off_axis);
  const double expect = sh::axis_angle(pt.direction, pp.direction);
  CHECK(expect == doctest::Approx(10.0 * kPi / 180.0).epsilon(0.02));
  CHECK(waae(p, t, mask) == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("waae: false-negative penalty is 0.0073 pi / 2") {
  const Eigen::VectorXd target_c = oracles::axial_kernel_sh(20.0, Vec3::UnitZ());
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(45);
  flat[0] = 0.01;  // no peaks above 0.1
  const ChannelVolume t = volume_of({target_c});
  const ChannelVolume p = volume_of({flat});
  const std::vector<std::int64_t> mask{0};

  const double penalty = 0.0073 * kPi / 2.0;
  CHECK(waae(p, t, mask) == doctest::Approx(penalty).epsilon(1e-12));
  CHECK(penalty == doctest::Approx(0.011467).epsilon(1e-4));
}

TEST_CASE("waae: invariant under common positive scaling above threshold") {
  const Eigen::VectorXd t1 = oracles::axial_kernel_sh(20.0, Vec3::UnitZ());
  const Eigen::VectorXd t2 =
      0.5 * oracles::axial_kernel_sh(20.0, Vec3::UnitZ()) +
      0.5 * oracles::axial_kernel_sh(20.0, Vec3::UnitX());
  const Eigen::VectorXd p1 = oracles::axial_kernel_sh(
      18.0, (Vec3::UnitZ() + 0.1 * Vec3::UnitY()).normalized());
  const Eigen::VectorXd p2 =
      0.6 * oracles::axial_kernel_sh(20.0, (Vec3::UnitZ() + 0.05 * Vec3::UnitX()).normalized()) +
      0.4 * oracles::axial_kernel_sh(20.0, (Vec3::UnitX() + 0.05 * Vec3::UnitY()).normalized());

  const ChannelVolume t = volume_of({t1, t2});
  const ChannelVolume p = volume_of({p1, p2});
  // the invariant holds for scalings that leave the peak sets unchanged:
  // 1.15 keeps band-limit ringing (~0.085) below the 0.1 cutoff
  ChannelVolume t_scaled = t, p_scaled = p;
  t_scaled.data *= 1.15;
  p_scaled.data *= 1.15;
  const std::vector<std::int64_t> mask{0, 1};

  // identical matching; values agree up to peak-refinement tolerance
  CHECK(waae(p, t, mask) ==
        doctest::Approx(waae(p_scaled, t_scaled, mask)).epsilon(1e-4));
}

TEST_CASE("voxelization: diagonal segments cannot skip voxels") {
  const VolumeGrid g = make_grid(Vec3i(12, 10, 9), Vec3(1.1, 0.9, 1.3),
                                 Vec3(0.3, -1.0, 2.0));
  Streamline line;
  line.points = {g.grid_to_world(Vec3(0.2, 0.1, 0.35)),
                 g.grid_to_world(Vec3(10.7, 8.6, 7.9))};
  StreamlineSet set;
  set.lines.push_back(line);
  const auto covered = voxelize_streamlines(set, g);

  // dense-sampling oracle
  std::vector<std::uint8_t> sampled(covered.size(), 0);
  const Vec3 a = line.points[0], b = line.points[1];
  for (int k = 0; k <= 100000; ++k) {
    const Vec3 q = a + (b - a) * (double(k) / 100000.0);
    const Vec3 u = g.world_to_grid(q);
    const Vec3i v(int(std::floor(u.x() + 0.5)), int(std::floor(u.y() + 0.5)),
                  int(std::floor(u.z() + 0.5)));
    sampled[size_t(g.linear_index(v))] = 1;
  }
  for (size_t i = 0; i < covered.size(); ++i) {
    CHECK(covered[i] == sampled[i]);
  }
}

TEST_CASE("tract_scores: exact fill, empty candidate, halo") {
  const VolumeGrid g = make_grid(Vec3i(6, 6, 6), Vec3(1, 1, 1), Vec3::Zero());
  ChannelVolume gt = make_volume(g, 1);
  std::vector<Vec3i> gt_voxels, halo_voxels;
  for (int z = 2; z < 4; ++z)
    for (int y = 2; y < 4; ++y)
      for (int x = 1; x < 3; ++x) gt_voxels.emplace_back(x, y, z);
  for (int z = 2; z < 4; ++z)
    for (int y = 2; y < 4; ++y)
      for (int x = 3; x < 5; ++x) halo_voxels.emplace_back(x, y, z);
  for (const auto& v : gt_voxels) gt.data(0, g.linear_index(v)) = 1.0;

  auto lines_for = [&](const std::vector<Vec3i>& voxels) {
    StreamlineSet set;
    for (const auto& v : voxels) {
      Streamline s;
      const Vec3 c = g.voxel_center(v);
      s.points = {c - Vec3(0.2, 0, 0), c + Vec3(0.2, 0, 0)};
      set.lines.push_back(s);
    }
    return set;
  };

  const TractScoreReport exact = tract_scores(lines_for(gt_voxels), gt);
  CHECK(exact.ol == doctest::Approx(1.0));
  CHECK(exact.or_ == doctest::Approx(0.0));
  CHECK(exact.dice == doctest::Approx(1.0));

  const TractScoreReport none = tract_scores(StreamlineSet{}, gt);
  CHECK(none.ol == 0.0);
  CHECK(none.or_ == 0.0);
  CHECK(none.dice == 0.0);

  std::vector<Vec3i> both = gt_voxels;
  both.insert(both.end(), halo_voxels.begin(), halo_voxels.end());
  const TractScoreReport halo = tract_scores(lines_for(both), gt);
  CHECK(halo.ol == doctest::Approx(1.0));
  CHECK(halo.or_ == doctest::Approx(1.0));
  CHECK(halo.dice == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // Dice identity: dice = 2 OL |gt| / (|covered| + |gt|)
  const auto covered = voxelize_streamlines(lines_for(both), g);
  std::int64_t n_cov = 0;
  for (auto c : covered) n_cov += c;
  CHECK(halo.dice ==
        doctest::Approx(2.0 * halo.ol * 8.0 / (double(n_cov) + 8.0)).epsilon(1e-12));
}

TEST_CASE("score_odf_volumes: zero for identical, finite for noisy") {
  Rng rng(9);
  std::vector<Eigen::VectorXd> voxels;
  for (int i = 0; i < 4; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    voxels.push_back(oracles::axial_kernel_sh(15.0, axis.normalized()));
  }
  const ChannelVolume t = volume_of(voxels);
  ChannelVolume noisy = t;
  for (Eigen::Index i = 0; i < noisy.data.size(); ++i)
    noisy.data.data()[i] += 0.01 * rng.normal();

  const std::vector<std::int64_t> mask = nonzero_c0_mask(t);
  REQUIRE(mask.size() == 4);
  const Eigen::VectorXd scales = Eigen::VectorXd::Ones(5);

  const OdfScoreReport same = score_odf_volumes(t, t, mask, scales);
  CHECK(same.wmse == 0.0);
  CHECK(same.msjsd == 0.0);
  CHECK(same.waae == 0.0);

  const OdfScoreReport r = score_odf_volumes(noisy, t, mask, scales);
  CHECK(std::isfinite(r.wmse));
  CHECK(std::isfinite(r.msjsd));
  CHECK(std::isfinite(r.waae));
  CHECK(r.wmse > 0.0);
}
