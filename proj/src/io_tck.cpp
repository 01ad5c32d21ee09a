#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "fenri/io.hpp"

namespace fenri::io {

namespace {

std::string build_tck_header(size_t count, size_t offset) {
  std::ostringstream os;
  os << "mrtrix tracks\n";
  os << "datatype: Float32LE\n";
  os << "count: " << count << "\n";
  os << "file: . " << offset << "\n";
  os << "END\n";
  return os.str();
}

}  // namespace

void write_tck(const StreamlineSet& s, const std::string& path) {
  // header length depends on the offset it declares; iterate to fixpoint
  size_t offset = 0;
  std::string header;
  for (int pass = 0; pass < 8; ++pass) {
    header = build_tck_header(s.size(), offset);
    if (header.size() == offset) break;
    offset = header.size();
  }
  if (header.size() != offset)
    throw NumericError("tck: header offset did not converge");

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptFile("tck: cannot write " + tmp);
    out.write(header.data(), std::streamsize(header.size()));

    const float nanv = std::numeric_limits<float>::quiet_NaN();
    const float infv = std::numeric_limits<float>::infinity();
    auto put = [&](float x, float y, float z) {
      const float t[3] = {x, y, z};
      out.write(reinterpret_cast<const char*>(t), sizeof(t));
    };
    for (const Streamline& line : s.lines) {
      for (const Vec3& p : line.points)
        put(float(p.x()), float(p.y()), float(p.z()));
      put(nanv, nanv, nanv);
    }
    put(infv, infv, infv);
    if (!out) throw CorruptFile("tck: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CorruptFile("tck: cannot move " + tmp + " to " + path);
}

StreamlineSet read_tck(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("tck: cannot open " + path);

  std::string first;
  if (!std::getline(in, first) || first != "mrtrix tracks")
    throw UnsupportedFormat("tck: missing 'mrtrix tracks' signature");

  size_t offset = 0;
  long long declared_count = -1;
  bool have_offset = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line == "END") break;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    if (key == "datatype") {
      if (value != "Float32LE")
        throw UnsupportedFormat("tck: unsupported datatype " + value);
    } else if (key == "count") {
      declared_count = std::stoll(value);
    } else if (key == "file") {
      // "file: . <offset>"
      std::istringstream vs(value);
      std::string dot;
      vs >> dot >> offset;
      have_offset = vs && dot == ".";
    }
  }
  if (!in) throw CorruptFile("tck: header without END terminator");
  if (!have_offset) throw CorruptFile("tck: missing file offset field");

  in.clear();
  in.seekg(std::streamoff(offset), std::ios::beg);

  StreamlineSet set;
  set.source = path;
  Streamline current;
  bool terminated = false;
  float t[3];
  while (in.read(reinterpret_cast<char*>(t), sizeof(t))) {
    if (std::isinf(t[0]) && std::isinf(t[1]) && std::isinf(t[2])) {
      terminated = true;
      break;
    }
    if (std::isnan(t[0]) || std::isnan(t[1]) || std::isnan(t[2])) {
      if (!current.points.empty()) set.lines.push_back(std::move(current));
      current = Streamline{};
      continue;
    }
    current.points.emplace_back(double(t[0]), double(t[1]), double(t[2]));
  }
  if (!terminated) throw CorruptFile("tck: missing Inf terminator");
  if (!current.points.empty()) set.lines.push_back(std::move(current));
  if (declared_count >= 0 && size_t(declared_count) != set.lines.size())
    throw CorruptFile("tck: declared count " + std::to_string(declared_count) +
                      " does not match body (" +
                      std::to_string(set.lines.size()) + ")");
  for (size_t i = 0; i < set.lines.size(); ++i)
    set.lines[i].seed_index = int(i);
  return set;
}

std::vector<Vec3> read_seeds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("seeds: cannot open " + path);
  std::vector<Vec3> seeds;
  double x, y, z;
  while (in >> x >> y >> z) seeds.emplace_back(x, y, z);
  if (!in.eof()) throw CorruptFile("seeds: malformed line in " + path);
  return seeds;
}

void write_seeds(const std::vector<Vec3>& seeds, const std::string& path) {
  std::ostringstream os;
  os.precision(17);
  for (const Vec3& s : seeds) os << s.x() << " " << s.y() << " " << s.z() << "\n";
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CorruptFile("cannot write " + tmp);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw CorruptFile("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CorruptFile("cannot move " + tmp + " to " + path);
}

}  // namespace fenri::io
