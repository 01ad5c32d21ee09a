#pragma once

#include <string>
#include <vector>

#include "fenri/types.hpp"

namespace fenri {

enum class Termination {
  kNone,
  kOutOfDomain,
  kLowAmplitude,
  kHighCurvature,
  kMaxSteps,
};

const char* termination_name(Termination t);

struct Streamline {
  std::vector<Vec3> points;  // world mm, uniform step spacing
  int seed_index = -1;       // position in the seed list that produced it
  Vec3 seed = Vec3::Zero();
  Termination reason_forward = Termination::kNone;
  Termination reason_backward = Termination::kNone;

  double length() const {
    double len = 0;
    for (size_t i = 1; i < points.size(); ++i)
      len += (points[i] - points[i - 1]).norm();
    return len;
  }
  bool empty() const { return points.size() < 2; }
};

struct StreamlineSet {
  std::vector<Streamline> lines;
  std::string source;  // provenance tag (field or generator name)

  size_t size() const { return lines.size(); }
};

}  // namespace fenri
