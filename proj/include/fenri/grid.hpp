#pragma once

#include <array>

#include "fenri/types.hpp"

namespace fenri {

/// Axis-aligned rectilinear sampling grid. origin is the world position of
/// voxel center (0,0,0); the grid's domain extends half a voxel beyond the
/// outer centers on every side.
struct VolumeGrid {
  Vec3i shape;      // >= 2 per axis
  Vec3 voxel_size;  // mm, > 0 per axis
  Vec3 origin;      // mm

  std::int64_t num_voxels() const {
    return std::int64_t(shape.x()) * shape.y() * shape.z();
  }
  std::int64_t linear_index(const Vec3i& v) const {
    return v.x() + std::int64_t(shape.x()) * (v.y() + std::int64_t(shape.y()) * v.z());
  }
  Vec3i unravel(std::int64_t i) const {
    const int x = int(i % shape.x());
    const int y = int((i / shape.x()) % shape.y());
    const int z = int(i / (std::int64_t(shape.x()) * shape.y()));
    return Vec3i(x, y, z);
  }
  Vec3 voxel_center(const Vec3i& v) const {
    return origin + voxel_size.cwiseProduct(v.cast<double>());
  }
  Vec3 grid_to_world(const Vec3& g) const {
    return origin + voxel_size.cwiseProduct(g);
  }
  Vec3 world_to_grid(const Vec3& q) const {
    return (q - origin).cwiseQuotient(voxel_size);
  }
  /// World box covered by the grid (outer centers plus half a voxel).
  Vec3 world_min() const { return origin - 0.5 * voxel_size; }
  Vec3 world_max() const {
    return origin + voxel_size.cwiseProduct((shape.cast<double>().array() - 0.5).matrix());
  }
  bool in_domain(const Vec3& q) const {
    const Vec3 g = world_to_grid(q);
    for (int a = 0; a < 3; ++a)
      if (!(g[a] >= -0.5 && g[a] <= shape[a] - 0.5)) return false;
    return true;
  }
  bool operator==(const VolumeGrid& o) const {
    return shape == o.shape && voxel_size == o.voxel_size && origin == o.origin;
  }
};

VolumeGrid make_grid(const Vec3i& shape, const Vec3& voxel_size,
                     const Vec3& origin);

/// Multi-channel samples on a grid. data stores one voxel per column in
/// x-fastest linear order, one channel per row; immutable by convention
/// once filled.
struct ChannelVolume {
  VolumeGrid grid;
  Eigen::MatrixXd data;  // channels x num_voxels

  int channels() const { return int(data.rows()); }
  Eigen::MatrixXd::ConstColXpr voxel(std::int64_t i) const { return data.col(i); }
};

ChannelVolume make_volume(const VolumeGrid& grid, int channels);

/// Checks data dimensions against the grid and that all values are finite.
void validate_volume(const ChannelVolume& v);

struct EnsembleEntry {
  Vec3i voxel_index;
  Vec3 voxel_center;
  double weight;
};

/// The 2x2x2 voxel-center cube around a query with trilinear weights.
/// Entry order is fixed: x fastest, then y, then z.
struct LocalEnsemble {
  std::array<EnsembleEntry, 8> entries;
};

/// Cube + weights for the cell containing q. Queries up to half a voxel
/// outside the outer centers clamp onto the boundary cell; beyond that is
/// out of domain.
LocalEnsemble local_ensemble(const VolumeGrid& g, const Vec3& q);

/// Trilinear interpolation of the per-voxel channel vectors at q.
Eigen::VectorXd trilinear_sample(const ChannelVolume& v, const Vec3& q);

/// Samples v at every voxel center of target; queries beyond the source
/// domain clamp to the nearest valid sample.
ChannelVolume resample_volume(const ChannelVolume& v, const VolumeGrid& target);

/// Anti-aliased resolution reduction: voxel size scales by factor, each
/// output voxel averages a 4x4x4 supersampled box window of its footprint.
/// Box averaging preserves affine fields; factor 1 is an exact copy.
ChannelVolume block_downsample(const ChannelVolume& v, double factor);

}  // namespace fenri
