#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fenri/grid.hpp"
#include "fenri/rng.hpp"

using namespace fenri;

namespace {

VolumeGrid small_grid() {
  return make_grid(Vec3i(6, 5, 4), Vec3(1.25, 1.0, 2.0), Vec3(10.0, -3.0, 0.5));
}

// data[c=0] = 2x + 3y - z in grid units, plus extra random channels
ChannelVolume affine_volume(const VolumeGrid& g, int extra_channels, Rng& rng) {
  ChannelVolume v = make_volume(g, 1 + extra_channels);
  for (std::int64_t i = 0; i < g.num_voxels(); ++i) {
    const Vec3i u = g.unravel(i);
    v.data(0, i) = 2.0 * u.x() + 3.0 * u.y() - u.z();
    for (int c = 1; c <= extra_channels; ++c) v.data(c, i) = rng.normal();
  }
  return v;
}

}  // namespace

TEST_CASE("world/grid round-trip") {
  const VolumeGrid g = small_grid();
  CHECK((g.world_to_grid(g.origin) - Vec3::Zero()).norm() < 1e-12);
  CHECK((g.world_to_grid(g.origin + g.voxel_size) - Vec3::Ones()).norm() < 1e-12);

  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const Vec3 q(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
    CHECK((g.grid_to_world(g.world_to_grid(q)) - q).norm() < 1e-9);
  }
}

TEST_CASE("local_ensemble: corners, centroid, domain") {
  const VolumeGrid g = small_grid();

  const Vec3 center = g.voxel_center(Vec3i(2, 3, 1));
  const LocalEnsemble at_center = local_ensemble(g, center);
  int ones = 0;
  for (const auto& e : at_center.entries) {
    if (e.weight == doctest::Approx(1.0).epsilon(1e-15)) {
      ++ones;
      CHECK((e.voxel_center - center).norm() < 1e-12);
    } else {
      CHECK(e.weight == doctest::Approx(0.0).epsilon(1e-15));
    }
  }
  CHECK(ones == 1);

  const Vec3 centroid = g.voxel_center(Vec3i(1, 1, 1)) + 0.5 * g.voxel_size;
  for (const auto& e : local_ensemble(g, centroid).entries)
    CHECK(e.weight == doctest::Approx(0.125).epsilon(1e-12));

  // half-voxel margin is legal, beyond is not
  CHECK_NOTHROW(local_ensemble(g, g.world_min() + Vec3(1e-9, 1e-9, 1e-9)));
  CHECK_THROWS_AS(local_ensemble(g, g.world_min() - Vec3(1e-3, 0, 0)),
                  OutOfDomain);
}

TEST_CASE("partition of unity on random queries") {
  const VolumeGrid g = small_grid();
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    Vec3 q;
    for (int a = 0; a < 3; ++a)
      q[a] = rng.uniform(g.world_min()[a], g.world_max()[a]);
    const LocalEnsemble e = local_ensemble(g, q);
    double sum = 0;
    for (const auto& entry : e.entries) {
      CHECK(entry.weight >= 0.0);
      sum += entry.weight;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("trilinear_sample: stored values, midpoints, affine reproduction") {
  const VolumeGrid g = small_grid();
  Rng rng(13);
  const ChannelVolume v = affine_volume(g, 2, rng);

  const Vec3i idx(4, 2, 3);
  CHECK((trilinear_sample(v, g.voxel_center(idx)) -
         v.data.col(g.linear_index(idx)))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  const Vec3 mid = 0.5 * (g.voxel_center(Vec3i(1, 2, 3)) + g.voxel_center(Vec3i(2, 2, 3)));
  const Eigen::VectorXd expect =
      0.5 * (v.data.col(g.linear_index(Vec3i(1, 2, 3))) +
             v.data.col(g.linear_index(Vec3i(2, 2, 3))));
  CHECK((trilinear_sample(v, mid) - expect).cwiseAbs().maxCoeff() < 1e-12);

  for (int k = 0; k < 1000; ++k) {
    Vec3 gq;
    for (int a = 0; a < 3; ++a) gq[a] = rng.uniform(0.0, g.shape[a] - 1.0);
    const double got = trilinear_sample(v, g.grid_to_world(gq))[0];
    const double want = 2.0 * gq.x() + 3.0 * gq.y() - gq.z();
    CHECK(std::abs(got - want) < 1e-10);
  }
}

TEST_CASE("continuity across cell faces") {
  const VolumeGrid g = small_grid();
  Rng rng(17);
  ChannelVolume v = make_volume(g, 3);
  for (std::int64_t i = 0; i < g.num_voxels(); ++i)
    for (int c = 0; c < 3; ++c) v.data(c, i) = rng.normal();

  for (int k = 0; k < 1000; ++k) {
    const int axis = int(rng.below(3));
    Vec3 gq;
    for (int a = 0; a < 3; ++a) gq[a] = rng.uniform(0.2, g.shape[a] - 1.2);
    gq[axis] = double(1 + int(rng.below(std::uint64_t(g.shape[axis] - 2))));
    Vec3 lo = gq, hi = gq;
    lo[axis] -= 1e-7;
    hi[axis] += 1e-7;
    const Eigen::VectorXd a = trilinear_sample(v, g.grid_to_world(lo));
    const Eigen::VectorXd b = trilinear_sample(v, g.grid_to_world(hi));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);  // Lipschitz bound over 2e-7
  }

  // exact statement: both adjoining ensembles agree for a linear field
  const ChannelVolume av = affine_volume(g, 0, rng);
  const Vec3 face = g.grid_to_world(Vec3(2.0, 1.3, 2.7));
  const Vec3 eps = Vec3(1e-12, 0, 0);
  CHECK(trilinear_sample(av, face)[0] ==
        doctest::Approx(trilinear_sample(av, face + eps)[0]).epsilon(1e-10));
}

TEST_CASE("resample_volume: identity, constants, affine continuation") {
  const VolumeGrid g = small_grid();
  Rng rng(19);
  const ChannelVolume v = affine_volume(g, 1, rng);

  const ChannelVolume same = resample_volume(v, g);
  CHECK((same.data - v.data).cwiseAbs().maxCoeff() < 1e-12);

  ChannelVolume constant = make_volume(g, 2);
  constant.data.setConstant(4.2);
  const VolumeGrid fine =
      make_grid(Vec3i(9, 9, 9), Vec3(0.7, 0.55, 0.8), g.origin + Vec3(0.1, 0.2, 0.3));
  const ChannelVolume cr = resample_volume(constant, fine);
  CHECK((cr.data.array() - 4.2).abs().maxCoeff() < 1e-12);

  // 2x upsample of the affine ramp continues the ramp (interior)
  const VolumeGrid up = make_grid(
      Vec3i(10, 8, 6), 0.5 * g.voxel_size,
      g.origin + Vec3(0.3, 0.3, 0.3));
  const ChannelVolume ur = resample_volume(v, up);
  for (std::int64_t i = 0; i < up.num_voxels(); ++i) {
    const Vec3 gq = g.world_to_grid(up.voxel_center(up.unravel(i)));
    bool interior = true;
    for (int a = 0; a < 3; ++a)
      if (gq[a] < 0 || gq[a] > g.shape[a] - 1) interior = false;
    if (!interior) continue;
    const double want = 2.0 * gq.x() + 3.0 * gq.y() - gq.z();
    CHECK(std::abs(ur.data(0, i) - want) < 1e-10);
  }

  const VolumeGrid far_grid =
      make_grid(Vec3i(4, 4, 4), Vec3(1, 1, 1), g.origin + Vec3(1000, 0, 0));
  CHECK_THROWS_AS(resample_volume(v, far_grid), InvalidArgument);
}

TEST_CASE("block_downsample: identity, constant, affine at 1.6x") {
  Rng rng(23);
  const VolumeGrid g =
      make_grid(Vec3i(16, 16, 16), Vec3(1.25, 1.25, 1.25), Vec3::Zero());
  ChannelVolume v = make_volume(g, 2);
  for (std::int64_t i = 0; i < g.num_voxels(); ++i) {
    const Vec3i u = g.unravel(i);
    v.data(0, i) = 2.0 * u.x() + 3.0 * u.y() - u.z();
    v.data(1, i) = rng.normal();
  }

  const ChannelVolume same = block_downsample(v, 1.0);
  CHECK((same.data - v.data).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(same.grid == v.grid);

  ChannelVolume constant = make_volume(g, 1);
  constant.data.setConstant(-2.5);
  const ChannelVolume cdown = block_downsample(constant, 1.6);
  CHECK((cdown.data.array() + 2.5).abs().maxCoeff() < 1e-12);
  CHECK(cdown.grid.shape == Vec3i(10, 10, 10));
  CHECK((cdown.grid.voxel_size - Vec3(2.0, 2.0, 2.0)).norm() < 1e-12);

  const ChannelVolume down = block_downsample(v, 1.6);
  for (std::int64_t i = 0; i < down.grid.num_voxels(); ++i) {
    const Vec3 gq = g.world_to_grid(down.grid.voxel_center(down.grid.unravel(i)));
    bool interior = true;
    for (int a = 0; a < 3; ++a)
      if (gq[a] < 1.0 || gq[a] > g.shape[a] - 2.0) interior = false;
    if (!interior) continue;
    const double want = 2.0 * gq.x() + 3.0 * gq.y() - gq.z();
    CHECK(std::abs(down.data(0, i) - want) < 1e-6);
  }

  CHECK_THROWS_AS(block_downsample(v, 0.8), InvalidArgument);
}

TEST_CASE("grid and volume validation") {
  CHECK_THROWS_AS(make_grid(Vec3i(1, 4, 4), Vec3(1, 1, 1), Vec3::Zero()),
                  InvalidArgument);
  CHECK_THROWS_AS(make_grid(Vec3i(4, 4, 4), Vec3(1, 0, 1), Vec3::Zero()),
                  InvalidArgument);
  ChannelVolume bad = make_volume(small_grid(), 1);
  bad.data(0, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_volume(bad), InvalidArgument);
}
