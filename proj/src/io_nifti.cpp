#include <cstring>
#include <fstream>
#include <vector>

#include "fenri/io.hpp"

namespace fenri::io {

namespace {

// NIfTI-1 header, 348 bytes. All fields little-endian; this build targets
// little-endian hosts and rejects byte-swapped files.
#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtFloat32 = 16;

}  // namespace

ChannelVolume read_nifti(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("nifti: cannot open " + path);

  Nifti1Header h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in) throw CorruptFile("nifti: truncated header in " + path);

  if (h.sizeof_hdr != 348) {
    std::int32_t swapped = h.sizeof_hdr;
    char* b = reinterpret_cast<char*>(&swapped);
    std::swap(b[0], b[3]);
    std::swap(b[1], b[2]);
    if (swapped == 348)
      throw UnsupportedFormat("nifti: big-endian files are not supported");
    throw CorruptFile("nifti: bad header size in " + path);
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0)
    throw UnsupportedFormat("nifti: only single-file n+1 images are supported");
  if (h.datatype != kDtFloat32)
    throw UnsupportedFormat("nifti: unsupported datatype " +
                            std::to_string(h.datatype) + " (float32 only)");
  if (h.dim[0] != 3 && h.dim[0] != 4)
    throw UnsupportedFormat("nifti: only 3D/4D images are supported");

  const Vec3i shape(h.dim[1], h.dim[2], h.dim[3]);
  const int channels = h.dim[0] == 4 ? std::max<int>(1, h.dim[4]) : 1;

  Vec3 voxel(h.pixdim[1], h.pixdim[2], h.pixdim[3]);
  Vec3 origin = Vec3::Zero();
  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (r != c && std::abs(rows[r][c]) > 1e-6)
          throw UnsupportedFormat(
              "nifti: oblique/rotated sform is not supported");
    for (int a = 0; a < 3; ++a) {
      if (rows[a][a] <= 0)
        throw UnsupportedFormat("nifti: sform must have a positive diagonal");
      voxel[a] = rows[a][a];
      origin[a] = rows[a][3];
    }
  }

  ChannelVolume v;
  v.grid = make_grid(shape, voxel, origin);
  const std::int64_t nvox = v.grid.num_voxels();
  v.data.resize(channels, nvox);

  in.seekg(std::streamoff(h.vox_offset), std::ios::beg);
  std::vector<float> buf(static_cast<size_t>(nvox));
  const bool rescale = h.scl_slope != 0.0f && h.scl_slope != 1.0f;
  const double slope = rescale ? double(h.scl_slope) : 1.0;
  const double inter =
      (rescale || h.scl_inter != 0.0f) ? double(h.scl_inter) : 0.0;
  for (int c = 0; c < channels; ++c) {
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
    if (!in) throw CorruptFile("nifti: truncated data in " + path);
    for (std::int64_t i = 0; i < nvox; ++i)
      v.data(c, i) = slope * double(buf[size_t(i)]) + inter;
  }
  return v;
}

void write_nifti(const ChannelVolume& v, const std::string& path) {
  validate_volume(v);
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  const bool is4d = v.channels() > 1;
  h.dim[0] = is4d ? 4 : 3;
  h.dim[1] = std::int16_t(v.grid.shape.x());
  h.dim[2] = std::int16_t(v.grid.shape.y());
  h.dim[3] = std::int16_t(v.grid.shape.z());
  h.dim[4] = std::int16_t(is4d ? v.channels() : 1);
  for (int i = 5; i < 8; ++i) h.dim[i] = 1;
  h.datatype = kDtFloat32;
  h.bitpix = 32;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = float(v.grid.voxel_size[a]);
  h.pixdim[4] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  h.sform_code = 1;
  h.srow_x[0] = float(v.grid.voxel_size.x());
  h.srow_y[1] = float(v.grid.voxel_size.y());
  h.srow_z[2] = float(v.grid.voxel_size.z());
  h.srow_x[3] = float(v.grid.origin.x());
  h.srow_y[3] = float(v.grid.origin.y());
  h.srow_z[3] = float(v.grid.origin.z());
  std::memcpy(h.magic, "n+1", 4);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptFile("nifti: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const char extender[4] = {0, 0, 0, 0};
    out.write(extender, 4);

    const std::int64_t nvox = v.grid.num_voxels();
    std::vector<float> buf(static_cast<size_t>(nvox));
    for (int c = 0; c < v.channels(); ++c) {
      for (std::int64_t i = 0; i < nvox; ++i)
        buf[size_t(i)] = float(v.data(c, i));
      out.write(reinterpret_cast<const char*>(buf.data()),
                std::streamsize(buf.size() * sizeof(float)));
    }
    if (!out) throw CorruptFile("nifti: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CorruptFile("nifti: cannot move " + tmp + " to " + path);
}

}  // namespace fenri::io
