#pragma once

#include <string>

#include "fenri/field.hpp"
#include "fenri/grid.hpp"
#include "fenri/phantom.hpp"
#include "fenri/streamline.hpp"
#include "fenri/types.hpp"

namespace fenri::io {

// NIfTI-1, single-file (.nii), float32 only, axis-aligned positive-diagonal
// sform. 4th dimension maps to channels. Anything else is rejected with a
// typed error rather than silently coerced.

ChannelVolume read_nifti(const std::string& path);
void write_nifti(const ChannelVolume& v, const std::string& path);

// MRtrix .tck: text header ("mrtrix tracks", datatype Float32LE, count,
// file offset), float32 triplets, NaN triplet after each streamline, Inf
// triplet terminator.

StreamlineSet read_tck(const std::string& path);
void write_tck(const StreamlineSet& s, const std::string& path);

// Whitespace-delimited scheme files: one b-value per entry; gradients as one
// row of three components per entry (zero rows are b0). Non-unit gradients
// are normalized with a warning on stderr.

phantom::AcquisitionScheme read_scheme(const std::string& bvals_path,
                                       const std::string& bvecs_path);
void write_scheme(const phantom::AcquisitionScheme& s,
                  const std::string& bvals_path, const std::string& bvecs_path);

// Versioned model checkpoint: JSON header (configs, tensor table) followed by
// contiguous little-endian float32 tensors. Round-trips bit-exactly.

void save_checkpoint(const field::FenriModel& model, const std::string& path);
field::FenriModel load_checkpoint(const std::string& path);

/// Seed list: one "x y z" world-mm triple per line.
std::vector<Vec3> read_seeds(const std::string& path);
void write_seeds(const std::vector<Vec3>& seeds, const std::string& path);

/// Writes content to path atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace fenri::io
