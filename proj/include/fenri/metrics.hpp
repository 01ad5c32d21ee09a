#pragma once

#include <vector>

#include "fenri/grid.hpp"
#include "fenri/sh.hpp"
#include "fenri/streamline.hpp"
#include "fenri/types.hpp"

namespace fenri::metrics {

struct OdfScoreReport {
  double wmse = 0.0;
  double msjsd = 0.0;
  double waae = 0.0;
};

struct TractScoreReport {
  double ol = 0.0;    // overlap voxel ratio, in [0,1]
  double or_ = 0.0;   // overreach normalized by bundle volume; may exceed 1
  double dice = 0.0;  // segmentation f1, in [0,1]
};

/// Base-2 Jensen-Shannon divergence of two probability vectors (squared JS
/// distance), bounded by 1.
double jensen_shannon(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Clamps negatives to zero and normalizes to a probability vector; all-zero
/// input falls back to uniform.
Eigen::VectorXd density_from_amplitudes(const Eigen::VectorXd& amplitudes);

/// Default direction set for density estimation: the full 362-point icosphere.
const sh::DirectionSet& msjsd_directions();

/// Mean squared Jensen-Shannon distance between ODFs over the mask, with
/// densities estimated on dirs.
double msjsd(const ChannelVolume& pred, const ChannelVolume& target,
             const sh::DirectionSet& dirs, const std::vector<std::int64_t>& mask);

struct WaaeOptions {
  double min_peak = 0.1;
  int max_target_peaks = 2;
  int max_pred_peaks = 3;
  double penalty = 0.0073 * kPi / 2.0;  // per unmatched peak
};

/// Weighted average angular error of matched peaks, penalizing false
/// positive/negative peaks; averaged over the mask.
double waae(const ChannelVolume& pred, const ChannelVolume& target,
            const std::vector<std::int64_t>& mask, const WaaeOptions& opts = {});

/// Voxels a streamline set covers on the mask's grid: a voxel counts when any
/// segment intersects it (3D DDA traversal).
std::vector<std::uint8_t> voxelize_streamlines(const StreamlineSet& lines,
                                               const VolumeGrid& grid);

/// OL / OR / Dice of the voxelized candidate against a binary mask volume.
TractScoreReport tract_scores(const StreamlineSet& candidate,
                              const ChannelVolume& gt_mask);

/// Linear voxel indices where mask data (channel 0) is > 0.5; the default
/// ODF-scoring mask is every voxel whose target degree-0 coefficient is
/// nonzero (the tissue analogue).
std::vector<std::int64_t> mask_indices(const ChannelVolume& mask);
std::vector<std::int64_t> nonzero_c0_mask(const ChannelVolume& sh_volume);

/// WMSE + MSJSD + WAAE of two aligned SH volumes over the mask.
OdfScoreReport score_odf_volumes(const ChannelVolume& pred,
                                 const ChannelVolume& target,
                                 const std::vector<std::int64_t>& mask,
                                 const Eigen::VectorXd& degree_scales);

}  // namespace fenri::metrics
