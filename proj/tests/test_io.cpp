#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fenri/io.hpp"
#include "fenri/rng.hpp"

using namespace fenri;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fenri_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Random volume whose values are exactly representable in float32.
ChannelVolume random_f32_volume(const VolumeGrid& g, int channels, uint64_t seed) {
  Rng rng(seed);
  ChannelVolume v = make_volume(g, channels);
  for (Eigen::Index i = 0; i < v.data.size(); ++i)
    v.data.data()[i] = double(float(rng.normal()));
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("nifti: bit-exact round trip and header fields") {
  TempDir tmp;
  const VolumeGrid g = make_grid(Vec3i(8, 8, 8), Vec3(2.0, 2.0, 2.0),
                                 Vec3(-3.0, 1.5, 0.25));
  const ChannelVolume v = random_f32_volume(g, 45, 3);
  const std::string path = tmp.file("vol.nii");
  io::write_nifti(v, path);

  const ChannelVolume back = io::read_nifti(path);
  CHECK(back.grid.shape == g.shape);
  CHECK((back.grid.voxel_size - g.voxel_size).norm() < 1e-6);
  CHECK((back.grid.origin - g.origin).norm() < 1e-6);
  CHECK(back.channels() == 45);
  CHECK((back.data - v.data).cwiseAbs().maxCoeff() == 0.0);

  // write(read(file)) reproduces the file byte for byte
  const std::string path2 = tmp.file("vol2.nii");
  io::write_nifti(back, path2);
  CHECK(slurp(path) == slurp(path2));

  // 3D single-channel volume
  const ChannelVolume v3 = random_f32_volume(g, 1, 5);
  const std::string path3 = tmp.file("vol3.nii");
  io::write_nifti(v3, path3);
  const ChannelVolume back3 = io::read_nifti(path3);
  CHECK(back3.channels() == 1);
  CHECK((back3.data - v3.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nifti: typed errors for unsupported and corrupt input") {
  TempDir tmp;
  const VolumeGrid g = make_grid(Vec3i(4, 4, 4), Vec3(1, 1, 1), Vec3::Zero());
  const ChannelVolume v = random_f32_volume(g, 2, 7);
  const std::string path = tmp.file("vol.nii");
  io::write_nifti(v, path);

  // int16 datatype at header offset 70
  std::string bytes = slurp(path);
  bytes[70] = 4;
  bytes[71] = 0;
  const std::string int16_path = tmp.file("int16.nii");
  io::write_file_atomic(int16_path, bytes);
  CHECK_THROWS_AS(io::read_nifti(int16_path), UnsupportedFormat);

  // truncated data section
  const std::string trunc_path = tmp.file("trunc.nii");
  io::write_file_atomic(trunc_path, slurp(path).substr(0, 400));
  CHECK_THROWS_AS(io::read_nifti(trunc_path), CorruptFile);

  // byte-swapped header size means big-endian
  std::string be = slurp(path);
  be[0] = 0;
  be[1] = 0;
  be[2] = 1;
  be[3] = 92;
  const std::string be_path = tmp.file("be.nii");
  io::write_file_atomic(be_path, be);
  CHECK_THROWS_AS(io::read_nifti(be_path), UnsupportedFormat);

  CHECK_THROWS_AS(io::read_nifti(tmp.file("missing.nii")), CorruptFile);
}

TEST_CASE("tck: empty set, round trip, body layout") {
  TempDir tmp;

  StreamlineSet empty;
  const std::string epath = tmp.file("empty.tck");
  io::write_tck(empty, epath);
  CHECK(io::read_tck(epath).size() == 0);

  Rng rng(11);
  StreamlineSet set;
  for (int k = 0; k < 3; ++k) {
    Streamline s;
    for (int i = 0; i < 4 + 2 * k; ++i)
      s.points.emplace_back(double(float(rng.normal() * 10)),
                            double(float(rng.normal() * 10)),
                            double(float(rng.normal() * 10)));
    set.lines.push_back(s);
  }
  const std::string path = tmp.file("tracks.tck");
  io::write_tck(set, path);
  const StreamlineSet back = io::read_tck(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    REQUIRE(back.lines[i].points.size() == set.lines[i].points.size());
    for (size_t j = 0; j < back.lines[i].points.size(); ++j)
      CHECK((back.lines[i].points[j] - set.lines[i].points[j]).norm() == 0.0);
  }

  // 5-point and 7-point streamlines: 12 point triplets + separators, plus
  // the Inf terminator
  StreamlineSet two;
  two.lines.resize(2);
  for (int i = 0; i < 5; ++i) two.lines[0].points.emplace_back(i, 0, 0);
  for (int i = 0; i < 7; ++i) two.lines[1].points.emplace_back(0, i, 0);
  const std::string tpath = tmp.file("two.tck");
  io::write_tck(two, tpath);
  const std::string bytes = slurp(tpath);
  const size_t offset = bytes.find("END\n") + 4;
  const size_t body_triplets = (bytes.size() - offset) / (3 * sizeof(float));
  CHECK(body_triplets == 15);  // 12 points + 2 separators + terminator
  CHECK(io::read_tck(tpath).size() == 2);
}

TEST_CASE("tck: missing terminator is corrupt") {
  TempDir tmp;
  StreamlineSet set;
  Streamline s;
  s.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  set.lines.push_back(s);
  const std::string path = tmp.file("t.tck");
  io::write_tck(set, path);
  std::string bytes = slurp(path);
  bytes.resize(bytes.size() - 12);  // drop the Inf triplet
  io::write_file_atomic(path, bytes);
  CHECK_THROWS_AS(io::read_tck(path), CorruptFile);
}

TEST_CASE("scheme files: b0 rows, mismatches, normalization") {
  TempDir tmp;
  const std::string bvals = tmp.file("bvals.txt");
  const std::string bvecs = tmp.file("bvecs.txt");

  io::write_file_atomic(bvals, "0 1000 1000\n");
  io::write_file_atomic(bvecs, "0 0 0\n1 0 0\n0 0 1\n");
  const auto s = io::read_scheme(bvals, bvecs);
  CHECK(s.size() == 3);
  CHECK(s.is_b0(0));
  CHECK(!s.is_b0(1));

  io::write_file_atomic(bvecs, "0 0 0\n1 0 0\n");
  CHECK_THROWS_AS(io::read_scheme(bvals, bvecs), InvalidArgument);

  // non-unit gradient normalized on read (with a warning)
  io::write_file_atomic(bvecs, "0 0 0\n2 0 0\n0 0 3\n");
  const auto n = io::read_scheme(bvals, bvecs);
  CHECK(n.gradients.col(1).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.gradients.col(2).norm() == doctest::Approx(1.0).epsilon(1e-12));

  // round trip
  const auto s2 = io::read_scheme(bvals, bvecs);
  io::write_scheme(s2, tmp.file("b2.txt"), tmp.file("g2.txt"));
  const auto s3 = io::read_scheme(tmp.file("b2.txt"), tmp.file("g2.txt"));
  CHECK((s3.bvalues - s2.bvalues).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s3.gradients - s2.gradients).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint: bit-exact round trip") {
  TempDir tmp;
  field::EncoderConfig ec;
  ec.in_channels = 7;
  ec.latent_channels = 12;
  ec.n_blocks = 2;
  field::DecoderConfig dc;
  dc.hidden_layers = 2;
  dc.hidden_width = 24;
  dc.freq_count = 3;
  field::FenriModel model;
  model.init(ec, dc, 99);
  model.degree_scales << 0.1, 0.2, 0.3, 0.4, 0.5;
  model.degree_means << -0.01, 0.02, 0.0, 0.3, 1e-7;
  model.world_lo = Vec3(-1.25, 0, 3.5);
  model.world_hi = Vec3(30, 31.25, 40);
  // make running stats nontrivial
  model.encoder.bn.running_mean.setConstant(0.25f);
  model.encoder.bn.running_var.setConstant(1.75f);

  const std::string path = tmp.file("model.ckpt");
  io::save_checkpoint(model, path);
  field::FenriModel back = io::load_checkpoint(path);

  CHECK(back.enc_cfg.in_channels == 7);
  CHECK(back.dec_cfg.freq_count == 3);
  CHECK((back.degree_scales - model.degree_scales).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.degree_means - model.degree_means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.world_lo - model.world_lo).norm() == 0.0);
  auto ta = model.tensors();
  auto tb = back.tensors();
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i]->name == tb[i]->name);
    CHECK((ta[i]->value - tb[i]->value).cwiseAbs().maxCoeff() == 0.0f);
  }
  CHECK((back.encoder.bn.running_mean - model.encoder.bn.running_mean)
            .cwiseAbs()
            .maxCoeff() == 0.0f);

  // file-level round trip
  const std::string path2 = tmp.file("model2.ckpt");
  io::save_checkpoint(back, path2);
  CHECK(slurp(path) == slurp(path2));

  // corrupt: truncate
  std::string bytes = slurp(path);
  bytes.resize(bytes.size() / 2);
  io::write_file_atomic(path2, bytes);
  CHECK_THROWS_AS(io::load_checkpoint(path2), CorruptFile);
}

TEST_CASE("seed list round trip") {
  TempDir tmp;
  std::vector<Vec3> seeds{Vec3(0.5, -1.25, 3.75), Vec3(10, 11, 12)};
  const std::string path = tmp.file("seeds.txt");
  io::write_seeds(seeds, path);
  const auto back = io::read_seeds(path);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) CHECK((back[i] - seeds[i]).norm() == 0.0);
}
