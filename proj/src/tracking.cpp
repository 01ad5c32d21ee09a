#include "fenri/tracking.hpp"

#include <cmath>
#include <limits>

#include "fenri/parallel.hpp"

namespace fenri {

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kNone: return "none";
    case Termination::kOutOfDomain: return "out-of-domain";
    case Termination::kLowAmplitude: return "low-amplitude";
    case Termination::kHighCurvature: return "high-curvature";
    case Termination::kMaxSteps: return "max-steps";
  }
  return "unknown";
}

}  // namespace fenri

namespace fenri::track {

double DirectionField::amplitude(const Vec3& q, const Vec3& dir) const {
  Eigen::VectorXd c;
  if (!odf(q, c)) return std::numeric_limits<double>::quiet_NaN();
  return sh::evaluate_odf(c, dir);
}

TrilinearSHField::TrilinearSHField(const ChannelVolume& sh_volume)
    : vol_(&sh_volume) {
  if (sh_volume.channels() != sh::kNumCoeffs)
    throw InvalidArgument("TrilinearSHField: volume must have 45 SH channels");
}

bool TrilinearSHField::odf(const Vec3& q, Eigen::VectorXd& out) const {
  if (!vol_->grid.in_domain(q)) return false;
  out = trilinear_sample(*vol_, q);
  return true;
}

FenriField::FenriField(field::FenriModel& model, const ChannelVolume& dwi)
    : model_(&model), latent_(field::encode(model, dwi)) {}

bool FenriField::odf(const Vec3& q, Eigen::VectorXd& out) const {
  if (!latent_.grid.in_domain(q)) return false;
  out = field::predict(*model_, latent_, q);
  return true;
}

FenriFieldD::FenriFieldD(field::FenriModelT<double>& model,
                         const ChannelVolume& dwi)
    : model_(&model), latent_(field::encode(model, dwi)) {}

bool FenriFieldD::odf(const Vec3& q, Eigen::VectorXd& out) const {
  if (!latent_.grid.in_domain(q)) return false;
  out = field::predict(*model_, latent_, q);
  return true;
}

StepResult next_direction(const DirectionField& f, const Vec3& q,
                          const Vec3& prev, const TrackingParams& params) {
  Eigen::VectorXd c;
  if (!f.odf(q, c)) return {std::nullopt, Termination::kOutOfDomain};

  sh::Peak p = sh::refine_peak(c, prev);
  if (p.amplitude < params.amplitude_cutoff)
    return {std::nullopt, Termination::kLowAmplitude};
  Vec3 d = p.direction;
  if (d.dot(prev) < 0) d = -d;
  const double cos_turn = std::clamp(d.dot(prev), -1.0, 1.0);
  if (std::acos(cos_turn) > params.max_turn_deg * kPi / 180.0)
    return {std::nullopt, Termination::kHighCurvature};
  return {d, Termination::kNone};
}

namespace {

struct HalfTrack {
  std::vector<Vec3> points;  // excludes the seed
  Termination reason = Termination::kMaxSteps;
};

HalfTrack track_half(const DirectionField& f, const Vec3& seed,
                     const Vec3& init_dir, const TrackingParams& params) {
  HalfTrack half;
  Vec3 pos = seed;
  Vec3 dir = init_dir;
  for (int step = 0; step < params.max_steps; ++step) {
    const Vec3 next = pos + params.step_size * dir;
    const StepResult r = next_direction(f, next, dir, params);
    if (!r.direction) {
      half.reason = r.reason;
      return half;
    }
    half.points.push_back(next);
    pos = next;
    dir = *r.direction;
  }
  half.reason = Termination::kMaxSteps;
  return half;
}

}  // namespace

Streamline track_from_seed(const DirectionField& f, const Vec3& seed,
                           const TrackingParams& params, int seed_index) {
  Streamline line;
  line.seed = seed;
  line.seed_index = seed_index;

  Eigen::VectorXd c;
  if (!f.odf(seed, c)) {
    line.reason_forward = line.reason_backward = Termination::kOutOfDomain;
    return line;
  }
  const sh::PeakSet peaks = sh::default_peak_finder().find(
      c, params.amplitude_cutoff, /*max_peaks=*/1);
  if (peaks.empty()) {
    line.reason_forward = line.reason_backward = Termination::kLowAmplitude;
    return line;
  }
  const Vec3 d0 = peaks[0].direction;

  const HalfTrack fwd = track_half(f, seed, d0, params);
  const HalfTrack bwd = track_half(f, seed, -d0, params);
  line.reason_forward = fwd.reason;
  line.reason_backward = bwd.reason;

  line.points.reserve(fwd.points.size() + bwd.points.size() + 1);
  for (auto it = bwd.points.rbegin(); it != bwd.points.rend(); ++it)
    line.points.push_back(*it);
  line.points.push_back(seed);
  for (const Vec3& p : fwd.points) line.points.push_back(p);

  const double len = line.length();
  if (len < params.min_length || len > params.max_length) line.points.clear();
  return line;
}

StreamlineSet track_all(const DirectionField& f, const std::vector<Vec3>& seeds,
                        const TrackingParams& params) {
  std::vector<Streamline> slots(seeds.size());
  parallel_for(std::int64_t(seeds.size()), [&](std::int64_t i) {
    slots[size_t(i)] = track_from_seed(f, seeds[size_t(i)], params, int(i));
  });
  StreamlineSet out;
  out.source = "tracking";
  for (auto& s : slots)
    if (!s.empty()) out.lines.push_back(std::move(s));
  return out;
}

}  // namespace fenri::track
