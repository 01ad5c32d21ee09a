#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "fenri/io.hpp"

namespace fenri::io {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'N', 'R', 'I', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[Eigen::Index(i)] = a[i].get<double>();
  return v;
}

}  // namespace

void save_checkpoint(const field::FenriModel& model, const std::string& path) {
  auto& m = const_cast<field::FenriModel&>(model);
  std::vector<nn::Tensor<float>*> tensors = m.tensors();

  json header;
  header["format"] = "fenri-checkpoint";
  header["encoder"] = {
      {"in_channels", m.enc_cfg.in_channels},
      {"latent_channels", m.enc_cfg.latent_channels},
      {"n_blocks", m.enc_cfg.n_blocks},
      {"kernel", m.enc_cfg.kernel},
      {"pool_kernel", m.enc_cfg.pool_kernel},
      {"batch_norm_at_output", m.enc_cfg.batch_norm_at_output}};
  header["decoder"] = {{"hidden_layers", m.dec_cfg.hidden_layers},
                       {"hidden_width", m.dec_cfg.hidden_width},
                       {"freq_count", m.dec_cfg.freq_count},
                       {"out_dim", m.dec_cfg.out_dim}};
  header["degree_scales"] = vec_to_json(m.degree_scales);
  header["degree_means"] = vec_to_json(m.degree_means);
  header["world_lo"] = {m.world_lo.x(), m.world_lo.y(), m.world_lo.z()};
  header["world_hi"] = {m.world_hi.x(), m.world_hi.y(), m.world_hi.z()};
  json table = json::array();
  for (auto* t : tensors)
    table.push_back({{"name", t->name},
                     {"rows", t->value.rows()},
                     {"cols", t->value.cols()}});
  header["tensors"] = table;
  header["buffers"] = {
      {{"name", "enc.bn.running_mean"}, {"size", m.encoder.bn.running_mean.size()}},
      {{"name", "enc.bn.running_var"}, {"size", m.encoder.bn.running_var.size()}}};

  const std::string hs = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptFile("checkpoint: cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), std::streamsize(hs.size()));
    for (auto* t : tensors)
      out.write(reinterpret_cast<const char*>(t->value.data()),
                std::streamsize(sizeof(float) * size_t(t->value.size())));
    out.write(reinterpret_cast<const char*>(m.encoder.bn.running_mean.data()),
              std::streamsize(sizeof(float) * size_t(m.encoder.bn.running_mean.size())));
    out.write(reinterpret_cast<const char*>(m.encoder.bn.running_var.data()),
              std::streamsize(sizeof(float) * size_t(m.encoder.bn.running_var.size())));
    if (!out) throw CorruptFile("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CorruptFile("checkpoint: cannot move " + tmp + " to " + path);
}

field::FenriModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw UnsupportedFormat("checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    throw UnsupportedFormat("checkpoint: unsupported version " +
                            std::to_string(version));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  if (!in) throw CorruptFile("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("checkpoint: bad header json: ") + e.what());
  }

  field::EncoderConfig ec;
  ec.in_channels = header["encoder"]["in_channels"].get<int>();
  ec.latent_channels = header["encoder"]["latent_channels"].get<int>();
  ec.n_blocks = header["encoder"]["n_blocks"].get<int>();
  ec.kernel = header["encoder"]["kernel"].get<int>();
  ec.pool_kernel = header["encoder"]["pool_kernel"].get<int>();
  ec.batch_norm_at_output = header["encoder"]["batch_norm_at_output"].get<bool>();
  field::DecoderConfig dc;
  dc.hidden_layers = header["decoder"]["hidden_layers"].get<int>();
  dc.hidden_width = header["decoder"]["hidden_width"].get<int>();
  dc.freq_count = header["decoder"]["freq_count"].get<int>();
  dc.out_dim = header["decoder"]["out_dim"].get<int>();

  field::FenriModel model;
  model.init(ec, dc, /*seed=*/0);
  model.degree_scales = vec_from_json(header["degree_scales"]);
  model.degree_means = vec_from_json(header["degree_means"]);
  const auto lo = header["world_lo"];
  const auto hi = header["world_hi"];
  model.world_lo = Vec3(lo[0].get<double>(), lo[1].get<double>(), lo[2].get<double>());
  model.world_hi = Vec3(hi[0].get<double>(), hi[1].get<double>(), hi[2].get<double>());

  std::vector<nn::Tensor<float>*> tensors = model.tensors();
  const auto& table = header["tensors"];
  if (table.size() != tensors.size())
    throw CorruptFile("checkpoint: tensor table does not match architecture");
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = table[i];
    if (e["name"].get<std::string>() != tensors[i]->name ||
        e["rows"].get<Eigen::Index>() != tensors[i]->value.rows() ||
        e["cols"].get<Eigen::Index>() != tensors[i]->value.cols())
      throw CorruptFile("checkpoint: tensor mismatch at " + tensors[i]->name);
    in.read(reinterpret_cast<char*>(tensors[i]->value.data()),
            std::streamsize(sizeof(float) * size_t(tensors[i]->value.size())));
  }
  in.read(reinterpret_cast<char*>(model.encoder.bn.running_mean.data()),
          std::streamsize(sizeof(float) * size_t(model.encoder.bn.running_mean.size())));
  in.read(reinterpret_cast<char*>(model.encoder.bn.running_var.data()),
          std::streamsize(sizeof(float) * size_t(model.encoder.bn.running_var.size())));
  if (!in) throw CorruptFile("checkpoint: truncated tensor data");
  return model;
}

}  // namespace fenri::io
