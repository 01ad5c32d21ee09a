#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "fenri/field.hpp"
#include "fenri/grid.hpp"
#include "fenri/sh.hpp"
#include "fenri/streamline.hpp"
#include "fenri/types.hpp"

namespace fenri::track {

/// SD-Stream-style parameters. The curvature limit follows the convention of
/// scaling the per-step angle with step size over voxel size.
struct TrackingParams {
  double step_size = 0.125;      // mm
  double max_turn_deg = 6.0;     // per step
  double amplitude_cutoff = 0.1;
  double min_length = 6.25;  // mm; shorter tracks are discarded
  double max_length = 125.0; // mm; longer tracks are discarded
  int max_steps = 1000;      // per half-track

  static TrackingParams defaults_for_voxel(double voxel_mm) {
    TrackingParams p;
    p.step_size = 0.1 * voxel_mm;
    p.max_turn_deg = 60.0 * (p.step_size / voxel_mm);
    p.min_length = 5.0 * voxel_mm;
    p.max_length = 100.0 * voxel_mm;
    p.max_steps = int(std::ceil(p.max_length / p.step_size)) + 2;
    return p;
  }
};

/// A continuous fODF field: the common surface for both the trilinear SH
/// sampler and the neural field.
class DirectionField {
 public:
  virtual ~DirectionField() = default;

  /// SH coefficients at q; false when q is out of the field's domain.
  virtual bool odf(const Vec3& q, Eigen::VectorXd& out) const = 0;

  /// ODF amplitude along dir at q; NaN when out of domain.
  double amplitude(const Vec3& q, const Vec3& dir) const;
};

/// Trilinear interpolation over a 45-channel SH volume.
class TrilinearSHField final : public DirectionField {
 public:
  explicit TrilinearSHField(const ChannelVolume& sh_volume);
  bool odf(const Vec3& q, Eigen::VectorXd& out) const override;

 private:
  const ChannelVolume* vol_;
};

/// Continuous sampling of the neural field's latent space: the DWI volume is
/// encoded once, queries decode through the cached latents.
class FenriField final : public DirectionField {
 public:
  FenriField(field::FenriModel& model, const ChannelVolume& dwi);
  bool odf(const Vec3& q, Eigen::VectorXd& out) const override;

 private:
  field::FenriModel* model_;
  field::LatentVolume<float> latent_;
};

/// Double-precision variant used by equivalence tests.
class FenriFieldD final : public DirectionField {
 public:
  FenriFieldD(field::FenriModelT<double>& model, const ChannelVolume& dwi);
  bool odf(const Vec3& q, Eigen::VectorXd& out) const override;

 private:
  field::FenriModelT<double>* model_;
  field::LatentVolume<double> latent_;
};

struct StepResult {
  std::optional<Vec3> direction;
  Termination reason = Termination::kNone;
};

/// Spherical gradient ascent of the ODF at q from the previous direction;
/// empty when out of domain, below the amplitude cutoff, or past the
/// curvature limit. The sign is fixed so result . prev >= 0.
StepResult next_direction(const DirectionField& f, const Vec3& q,
                          const Vec3& prev, const TrackingParams& params);

/// Bidirectional Euler tracking from one seed. The initial direction is the
/// largest ODF peak at the seed; tracks outside [min_length, max_length] are
/// returned empty.
Streamline track_from_seed(const DirectionField& f, const Vec3& seed,
                           const TrackingParams& params, int seed_index = -1);

/// Independent tracking per seed; output order matches seed order and empty
/// streamlines are dropped.
StreamlineSet track_all(const DirectionField& f, const std::vector<Vec3>& seeds,
                        const TrackingParams& params);

}  // namespace fenri::track
