// fenri: end-to-end pipeline driver.
//
//   simulate  phantom DWIs + ground truth from a phantom config
//   degrade   angular subset, downsampling, Rician noise
//   train     fit the continuous fODF field to (degraded, truth) pairs
//   predict   SH coefficient volume at an arbitrary target grid
//   track     deterministic streamline tractography
//   score     ODF metrics (WMSE/MSJSD/WAAE) or tract metrics (OL/OR/Dice)
//
// Every command writes its outputs plus the fully resolved config into the
// --out directory, so a run is reproducible from its own snapshot.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fenri/field.hpp"
#include "fenri/io.hpp"
#include "fenri/metrics.hpp"
#include "fenri/parallel.hpp"
#include "fenri/phantom.hpp"
#include "fenri/tracking.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fenri;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("config: " + path + ": " + e.what());
  }
}

void write_snapshot(const json& resolved, const fs::path& outdir) {
  io::write_file_atomic((outdir / "config.json").string(), resolved.dump(2) + "\n");
}

fs::path prepare_outdir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

/// Paths inside a config resolve relative to the config file's directory.
std::string resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base / path).string();
}

phantom::AcquisitionScheme scheme_from_json(const json& j) {
  std::vector<std::pair<double, int>> shells;
  for (const auto& s : j.at("shells"))
    shells.emplace_back(s.at("bvalue").get<double>(), s.at("n_dirs").get<int>());
  return phantom::standard_scheme(j.at("n_b0").get<int>(), shells);
}

phantom::Phantom phantom_from_json(const json& j) {
  phantom::Phantom ph;
  const auto& grid = j.at("grid");
  const auto shape = grid.at("shape");
  const double voxel = grid.at("voxel_mm").get<double>();
  Vec3 origin = Vec3::Zero();
  if (grid.contains("origin_mm")) {
    const auto& o = grid.at("origin_mm");
    origin = Vec3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
  }
  ph.grid = make_grid(
      Vec3i(shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()),
      Vec3::Constant(voxel), origin);
  ph.s0 = j.value("s0", 1000.0);
  ph.background_diffusivity = j.value("background_diffusivity", 3.0e-3);
  for (const auto& bj : j.at("bundles")) {
    phantom::BundleSpec b;
    for (const auto& p : bj.at("centerline_mm"))
      b.centerline.emplace_back(p[0].get<double>(), p[1].get<double>(),
                                p[2].get<double>());
    b.radius = bj.at("radius_mm").get<double>();
    b.kappa = bj.value("kappa", 20.0);
    b.volume_fraction = bj.at("volume_fraction").get<double>();
    const std::string profile = bj.value("profile", std::string("flat"));
    if (profile == "flat")
      b.profile = phantom::RadialProfile::kFlat;
    else if (profile == "quadratic")
      b.profile = phantom::RadialProfile::kQuadratic;
    else
      throw InvalidArgument("config: unknown profile '" + profile + "'");
    b.axial_diffusivity = bj.value("axial_diffusivity", 1.7e-3);
    b.radial_diffusivity = bj.value("radial_diffusivity", 0.2e-3);
    ph.bundles.push_back(std::move(b));
  }
  return ph;
}

/// Target grid covering the same world extent at a new voxel size.
VolumeGrid regrid(const VolumeGrid& src, double voxel_mm) {
  Vec3i shape;
  for (int a = 0; a < 3; ++a) {
    const double extent = src.shape[a] * src.voxel_size[a];
    shape[a] = std::max(2, int(std::llround(extent / voxel_mm)));
  }
  return make_grid(shape, Vec3::Constant(voxel_mm),
                   src.world_min() + 0.5 * Vec3::Constant(voxel_mm));
}

int cmd_simulate(const std::string& config_path, const std::string& out) {
  const json cfg = load_json(config_path);
  const fs::path outdir = prepare_outdir(out);
  const uint64_t seed = cfg.at("seed").get<uint64_t>();

  const phantom::Phantom ph = phantom_from_json(cfg);
  const phantom::PhantomSampler sampler(ph);
  const phantom::AcquisitionScheme scheme = scheme_from_json(cfg.at("scheme"));

  io::write_nifti(sampler.simulate_dwi(scheme), (outdir / "dwi.nii").string());
  io::write_scheme(scheme, (outdir / "bvals.txt").string(),
                   (outdir / "bvecs.txt").string());
  io::write_nifti(sampler.ground_truth_sh_volume(ph.grid),
                  (outdir / "gt_sh.nii").string());

  for (size_t k = 0; k < ph.bundles.size(); ++k) {
    const std::string tag = "bundle" + std::to_string(k);
    io::write_nifti(sampler.bundle_mask(int(k)),
                    (outdir / (tag + "_mask.nii")).string());
    const int n_lines = cfg.at("bundles")[k].value("n_streamlines", 100);
    const StreamlineSet gt =
        sampler.ground_truth_streamlines(int(k), n_lines, seed + k);
    io::write_tck(gt, (outdir / (tag + "_gt.tck")).string());
    std::vector<Vec3> seeds;
    for (const auto& line : gt.lines) seeds.push_back(line.seed);
    io::write_seeds(seeds, (outdir / (tag + "_seeds.txt")).string());
  }
  write_snapshot(cfg, outdir);
  return kExitOk;
}

int cmd_degrade(const std::string& config_path, const std::string& dwi,
                const std::string& bvals, const std::string& bvecs,
                const std::string& out) {
  const json cfg = load_json(config_path);
  const fs::path outdir = prepare_outdir(out);

  const ChannelVolume vol = io::read_nifti(dwi);
  const phantom::AcquisitionScheme scheme = io::read_scheme(bvals, bvecs);

  std::vector<std::pair<double, int>> shells;
  for (const auto& s : cfg.at("keep").at("shells"))
    shells.emplace_back(s.at("bvalue").get<double>(), s.at("n_dirs").get<int>());
  const std::vector<int> keep = phantom::keep_first_channels(
      scheme, cfg.at("keep").at("n_b0").get<int>(), shells);

  const auto [degraded, sub] = phantom::degrade(
      vol, scheme, cfg.at("target_voxel_mm").get<double>(), keep,
      cfg.value("snr_db", 30.0), cfg.at("seed").get<uint64_t>());

  io::write_nifti(degraded, (outdir / "dwi.nii").string());
  io::write_scheme(sub, (outdir / "bvals.txt").string(),
                   (outdir / "bvecs.txt").string());
  write_snapshot(cfg, outdir);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out) {
  const json cfg = load_json(config_path);
  const fs::path outdir = prepare_outdir(out);
  const fs::path base = fs::path(config_path).parent_path();

  std::vector<field::TrainSample> dataset;
  for (const auto& d : cfg.at("data")) {
    field::TrainSample s;
    const ChannelVolume dwi =
        io::read_nifti(resolve_path(d.at("dwi").get<std::string>(), base));
    const auto scheme =
        io::read_scheme(resolve_path(d.at("bvals").get<std::string>(), base),
                        resolve_path(d.at("bvecs").get<std::string>(), base));
    s.input = phantom::normalize_by_b0(dwi, scheme);
    s.target_sh =
        io::read_nifti(resolve_path(d.at("target_sh").get<std::string>(), base));
    dataset.push_back(std::move(s));
  }
  if (dataset.empty()) throw InvalidArgument("train: config lists no data");

  const json& mj = cfg.at("model");
  field::EncoderConfig ec;
  ec.in_channels = dataset[0].input.channels();
  ec.latent_channels = mj.value("latent_channels", 32);
  ec.n_blocks = mj.value("n_blocks", 3);
  field::DecoderConfig dc;
  dc.hidden_layers = mj.value("hidden_layers", 3);
  dc.hidden_width = mj.value("hidden_width", 96);
  dc.freq_count = mj.value("freq_count", 4);

  field::FenriModel model;
  model.init(ec, dc, mj.value("model_seed", cfg.at("seed").get<uint64_t>()));
  field::prepare_for_training(model, dataset);

  const json& tj = cfg.at("train");
  field::TrainConfig tc;
  tc.learning_rate = tj.value("learning_rate", 1e-3);
  tc.batch_queries = tj.value("batch_queries", 1024);
  tc.epochs = tj.value("epochs", 100);
  tc.patch_size = tj.value("patch_size", 16);
  tc.foreground_bias = tj.value("foreground_bias", 0.5);
  tc.final_lr_fraction = tj.value("final_lr_fraction", 0.05);
  tc.seed = cfg.at("seed").get<uint64_t>();

  const field::TrainResult result = field::train(model, dataset, tc);

  io::save_checkpoint(model, (outdir / "model.ckpt").string());
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,wmse\n";
  for (size_t i = 0; i < result.loss_history.size(); ++i)
    csv << i << "," << result.loss_history[i] << "\n";
  io::write_file_atomic((outdir / "loss_history.csv").string(), csv.str());
  write_snapshot(cfg, outdir);
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& dwi,
                const std::string& bvals, const std::string& bvecs,
                double target_voxel, const std::string& like,
                const std::string& out) {
  const fs::path outdir = prepare_outdir(out);
  field::FenriModel model = io::load_checkpoint(checkpoint);
  const ChannelVolume raw = io::read_nifti(dwi);
  const auto scheme = io::read_scheme(bvals, bvecs);
  const ChannelVolume input = phantom::normalize_by_b0(raw, scheme);

  VolumeGrid target =
      like.empty() ? regrid(input.grid, target_voxel) : io::read_nifti(like).grid;
  const ChannelVolume sh_volume = field::predict_volume(model, input, target);
  io::write_nifti(sh_volume, (outdir / "sh.nii").string());

  json resolved{{"checkpoint", checkpoint},
                {"dwi", dwi},
                {"bvals", bvals},
                {"bvecs", bvecs},
                {"target_voxel_mm", target.voxel_size.x()},
                {"like", like}};
  write_snapshot(resolved, outdir);
  return kExitOk;
}

int cmd_track(const std::string& sh_path, const std::string& checkpoint,
              const std::string& dwi, const std::string& bvals,
              const std::string& bvecs, const std::string& seeds_path,
              const json& params_json, const std::string& out) {
  const fs::path outdir = prepare_outdir(out);
  const std::vector<Vec3> seeds = io::read_seeds(seeds_path);

  std::unique_ptr<track::DirectionField> field_ptr;
  ChannelVolume sh_volume;
  ChannelVolume input;
  field::FenriModel model;
  double voxel = 0;
  if (!sh_path.empty()) {
    sh_volume = io::read_nifti(sh_path);
    voxel = sh_volume.grid.voxel_size.x();
    field_ptr = std::make_unique<track::TrilinearSHField>(sh_volume);
  } else {
    if (checkpoint.empty() || dwi.empty() || bvals.empty() || bvecs.empty())
      throw InvalidArgument(
          "track: need either --sh or --checkpoint with --dwi/--bvals/--bvecs");
    model = io::load_checkpoint(checkpoint);
    const ChannelVolume raw = io::read_nifti(dwi);
    const auto scheme = io::read_scheme(bvals, bvecs);
    input = phantom::normalize_by_b0(raw, scheme);
    voxel = input.grid.voxel_size.x();
    field_ptr = std::make_unique<track::FenriField>(model, input);
  }

  track::TrackingParams params = track::TrackingParams::defaults_for_voxel(voxel);
  if (params_json.contains("step_size"))
    params.step_size = params_json["step_size"].get<double>();
  if (params_json.contains("max_turn_deg"))
    params.max_turn_deg = params_json["max_turn_deg"].get<double>();
  if (params_json.contains("amplitude_cutoff"))
    params.amplitude_cutoff = params_json["amplitude_cutoff"].get<double>();
  if (params_json.contains("min_length"))
    params.min_length = params_json["min_length"].get<double>();
  if (params_json.contains("max_length"))
    params.max_length = params_json["max_length"].get<double>();
  if (params_json.contains("max_steps"))
    params.max_steps = params_json["max_steps"].get<int>();

  const StreamlineSet tracks = track::track_all(*field_ptr, seeds, params);
  io::write_tck(tracks, (outdir / "tracks.tck").string());

  json resolved{{"sh", sh_path},
                {"checkpoint", checkpoint},
                {"dwi", dwi},
                {"bvals", bvals},
                {"bvecs", bvecs},
                {"seeds", seeds_path},
                {"step_size", params.step_size},
                {"max_turn_deg", params.max_turn_deg},
                {"amplitude_cutoff", params.amplitude_cutoff},
                {"min_length", params.min_length},
                {"max_length", params.max_length},
                {"max_steps", params.max_steps},
                {"n_seeds", seeds.size()},
                {"n_tracks", tracks.size()}};
  write_snapshot(resolved, outdir);
  return kExitOk;
}

int cmd_baseline(const std::string& sh_path, double factor,
                 const std::string& out) {
  const fs::path outdir = prepare_outdir(out);
  const ChannelVolume sh_volume = io::read_nifti(sh_path);
  const ChannelVolume coarse = block_downsample(sh_volume, factor);
  io::write_nifti(coarse, (outdir / "sh_lowres.nii").string());
  io::write_nifti(resample_volume(coarse, sh_volume.grid),
                  (outdir / "sh_trilinear.nii").string());
  json resolved{{"sh", sh_path}, {"factor", factor}};
  write_snapshot(resolved, outdir);
  return kExitOk;
}

void write_report(const json& report, const fs::path& outdir) {
  io::write_file_atomic((outdir / "report.json").string(), report.dump(2) + "\n");
  std::ostringstream txt;
  txt.precision(17);
  for (const auto& [key, value] : report.items())
    txt << key << " = " << value.dump() << "\n";
  io::write_file_atomic((outdir / "report.txt").string(), txt.str());
}

int cmd_score_odf(const std::string& pred, const std::string& target,
                  const std::string& mask_path, const std::string& out) {
  const fs::path outdir = prepare_outdir(out);
  const ChannelVolume p = io::read_nifti(pred);
  const ChannelVolume t = io::read_nifti(target);

  std::vector<std::int64_t> mask;
  if (mask_path.empty())
    mask = metrics::nonzero_c0_mask(t);
  else
    mask = metrics::mask_indices(io::read_nifti(mask_path));
  if (mask.empty()) throw InvalidArgument("score: empty evaluation mask");

  Eigen::VectorXd scales, means;
  field::degree_standardization({&t}, scales, means);
  const metrics::OdfScoreReport r = metrics::score_odf_volumes(p, t, mask, scales);

  json report{{"wmse", r.wmse},   {"msjsd", r.msjsd}, {"waae", r.waae},
              {"n_voxels", mask.size()}, {"pred", pred}, {"target", target},
              {"mask", mask_path}};
  write_report(report, outdir);
  std::cout << "wmse " << r.wmse << "  msjsd " << r.msjsd << "  waae " << r.waae
            << "\n";
  return kExitOk;
}

int cmd_score_tract(const std::string& tracks, const std::string& mask_path,
                    const std::string& out) {
  const fs::path outdir = prepare_outdir(out);
  const StreamlineSet lines = io::read_tck(tracks);
  const ChannelVolume mask = io::read_nifti(mask_path);
  const metrics::TractScoreReport r = metrics::tract_scores(lines, mask);

  json report{{"ol", r.ol},       {"or", r.or_},      {"dice", r.dice},
              {"tracks", tracks}, {"mask", mask_path},
              {"n_streamlines", lines.size()}};
  write_report(report, outdir);
  std::cout << "ol " << r.ol << "  or " << r.or_ << "  dice " << r.dice << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fenri: continuous fODF fields, phantoms, tractography, metrics"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "worker thread cap")->capture_default_str();

  std::string config, out, dwi, bvals, bvecs, checkpoint, sh_path, like;
  std::string seeds_path, pred, target, mask_path, tracks_path;
  double target_voxel = 1.25;

  auto* sim = app.add_subcommand("simulate", "phantom DWIs + ground truth")->fallthrough();
  sim->add_option("--config", config, "phantom config json")->required();
  sim->add_option("--out", out, "output directory")->required();

  auto* deg = app.add_subcommand("degrade", "subset + downsample + noise")->fallthrough();
  deg->add_option("--config", config, "degradation config json")->required();
  deg->add_option("--dwi", dwi, "input DWI nifti")->required();
  deg->add_option("--bvals", bvals, "b-values file")->required();
  deg->add_option("--bvecs", bvecs, "gradients file")->required();
  deg->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "fit the continuous fODF field")->fallthrough();
  train->add_option("--config", config, "training config json")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "SH volume at a target grid")->fallthrough();
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--dwi", dwi, "input DWI nifti")->required();
  predict->add_option("--bvals", bvals, "b-values file")->required();
  predict->add_option("--bvecs", bvecs, "gradients file")->required();
  predict->add_option("--target-voxel", target_voxel, "output voxel size (mm)")
      ->capture_default_str();
  predict->add_option("--like", like, "take the output grid from this nifti");
  predict->add_option("--out", out, "output directory")->required();

  auto* track_cmd = app.add_subcommand("track", "deterministic tractography")->fallthrough();
  track_cmd->add_option("--sh", sh_path, "SH volume (trilinear field)");
  track_cmd->add_option("--checkpoint", checkpoint,
                        "model checkpoint (neural field)");
  track_cmd->add_option("--dwi", dwi, "input DWI nifti (neural field)");
  track_cmd->add_option("--bvals", bvals, "b-values file");
  track_cmd->add_option("--bvecs", bvecs, "gradients file");
  track_cmd->add_option("--seeds", seeds_path, "seed list (x y z per line)")
      ->required();
  track_cmd->add_option("--out", out, "output directory")->required();
  double opt_step = -1, opt_turn = -1, opt_cutoff = -1, opt_minlen = -1,
         opt_maxlen = -1;
  int opt_maxsteps = -1;
  track_cmd->add_option("--step", opt_step, "step size (mm)");
  track_cmd->add_option("--max-turn-deg", opt_turn, "max angle per step");
  track_cmd->add_option("--cutoff", opt_cutoff, "ODF amplitude cutoff");
  track_cmd->add_option("--min-length", opt_minlen, "min track length (mm)");
  track_cmd->add_option("--max-length", opt_maxlen, "max track length (mm)");
  track_cmd->add_option("--max-steps", opt_maxsteps, "max steps per half-track");

  double baseline_factor = 1.6;
  auto* baseline_cmd =
      app.add_subcommand("baseline",
                         "trilinear baseline: downsample an SH volume and "
                         "resample it back")->fallthrough();
  baseline_cmd->add_option("--sh", sh_path, "SH volume nifti")->required();
  baseline_cmd->add_option("--factor", baseline_factor, "downsampling factor")
      ->capture_default_str();
  baseline_cmd->add_option("--out", out, "output directory")->required();

  auto* score = app.add_subcommand("score", "evaluation metrics")->fallthrough();
  score->require_subcommand(1);
  auto* score_odf = score->add_subcommand("odf", "WMSE / MSJSD / WAAE")->fallthrough();
  score_odf->add_option("--pred", pred, "predicted SH nifti")->required();
  score_odf->add_option("--target", target, "ground-truth SH nifti")->required();
  score_odf->add_option("--mask", mask_path,
                        "binary mask nifti (default: target c0 != 0)");
  score_odf->add_option("--out", out, "output directory")->required();
  auto* score_tract = score->add_subcommand("tract", "OL / OR / Dice")->fallthrough();
  score_tract->add_option("--tracks", tracks_path, "candidate tck")->required();
  score_tract->add_option("--mask", mask_path, "ground-truth bundle mask nifti")
      ->required();
  score_tract->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  max_threads() = std::max(1, threads);

  try {
    if (sim->parsed()) return cmd_simulate(config, out);
    if (deg->parsed()) return cmd_degrade(config, dwi, bvals, bvecs, out);
    if (train->parsed()) return cmd_train(config, out);
    if (predict->parsed())
      return cmd_predict(checkpoint, dwi, bvals, bvecs, target_voxel, like, out);
    if (track_cmd->parsed()) {
      json params;
      if (opt_step > 0) params["step_size"] = opt_step;
      if (opt_turn > 0) params["max_turn_deg"] = opt_turn;
      if (opt_cutoff >= 0) params["amplitude_cutoff"] = opt_cutoff;
      if (opt_minlen >= 0) params["min_length"] = opt_minlen;
      if (opt_maxlen > 0) params["max_length"] = opt_maxlen;
      if (opt_maxsteps > 0) params["max_steps"] = opt_maxsteps;
      return cmd_track(sh_path, checkpoint, dwi, bvals, bvecs, seeds_path,
                       params, out);
    }
    if (baseline_cmd->parsed()) return cmd_baseline(sh_path, baseline_factor, out);
    if (score_odf->parsed()) return cmd_score_odf(pred, target, mask_path, out);
    if (score_tract->parsed())
      return cmd_score_tract(tracks_path, mask_path, out);
    std::cerr << "no subcommand\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
