#include "ctn/volio.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctn {

namespace {

using nlohmann::json;

void write_header(const std::string& path, const std::array<int64_t, 3>& shape,
                  const char* dtype, const std::array<double, 3>& spacing,
                  const std::array<double, 3>& origin) {
  json j;
  j["shape"] = shape;
  j["dtype"] = dtype;
  j["spacing"] = spacing;
  j["origin"] = origin;
  j["byte_order"] = "little";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write header: " + path);
  f << j.dump(2) << "\n";
}

json read_header(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing header file: " + path);
  json j;
  f >> j;
  return j;
}

void write_raw(const std::string& path, const void* data, size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write payload: " + path);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("short write: " + path);
}

std::vector<char> read_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("missing payload file: " + path);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(size));
  f.read(buf.data(), size);
  return buf;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

void write_volume(const Volume& volume, const LabelMask* mask, const std::string& base_path) {
  for (double s : volume.spacing)
    if (!(s > 0)) throw std::invalid_argument("volume spacing must be positive");
  write_header(base_path + ".hdr.json", volume.shape, "float32", volume.spacing, volume.origin);
  write_raw(base_path + ".raw", volume.data.data(), volume.data.size() * sizeof(float));
  if (mask) write_label(*mask, base_path);
}

void write_label(const LabelMask& mask, const std::string& base_path) {
  for (uint8_t v : mask.data)
    if (v > 2) throw std::invalid_argument("label values must be in {0,1,2}");
  write_header(base_path + ".label.hdr.json", mask.shape, "uint8", mask.spacing, mask.origin);
  write_raw(base_path + ".label.raw", mask.data.data(), mask.data.size());
}

std::pair<Volume, std::optional<LabelMask>> read_volume(const std::string& base_path) {
  const json h = read_header(base_path + ".hdr.json");
  if (h.at("dtype").get<std::string>() != "float32")
    throw std::runtime_error("volume dtype must be float32: " + base_path);
  if (h.at("byte_order").get<std::string>() != "little")
    throw std::runtime_error("unsupported byte order: " + base_path);
  Volume v;
  h.at("shape").get_to(v.shape);
  h.at("spacing").get_to(v.spacing);
  h.at("origin").get_to(v.origin);
  for (double s : v.spacing)
    if (!(s > 0)) throw std::runtime_error("non-positive spacing in header: " + base_path);
  const auto raw = read_raw(base_path + ".raw");
  const size_t expected = static_cast<size_t>(v.numel()) * sizeof(float);
  if (raw.size() != expected) {
    std::ostringstream msg;
    msg << "payload size mismatch for " << base_path << ": header implies " << expected
        << " bytes, file has " << raw.size();
    throw std::runtime_error(msg.str());
  }
  v.data.resize(static_cast<size_t>(v.numel()));
  std::memcpy(v.data.data(), raw.data(), raw.size());

  std::optional<LabelMask> mask;
  if (file_exists(base_path + ".label.hdr.json")) mask = read_label(base_path);
  return {std::move(v), std::move(mask)};
}

LabelMask read_label(const std::string& base_path) {
  const json h = read_header(base_path + ".label.hdr.json");
  if (h.at("dtype").get<std::string>() != "uint8")
    throw std::runtime_error("label dtype must be uint8: " + base_path);
  LabelMask m;
  h.at("shape").get_to(m.shape);
  h.at("spacing").get_to(m.spacing);
  h.at("origin").get_to(m.origin);
  const auto raw = read_raw(base_path + ".label.raw");
  if (raw.size() != static_cast<size_t>(m.numel()))
    throw std::runtime_error("label payload size mismatch: " + base_path);
  m.data.assign(raw.begin(), raw.end());
  for (uint8_t v : m.data)
    if (v > 2) throw std::runtime_error("label value outside {0,1,2}: " + base_path);
  return m;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& e : entries) f << e.image << "\t" << e.label << "\t" << e.split << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!std::getline(ss, e.image, '\t') || !std::getline(ss, e.label, '\t') ||
        !std::getline(ss, e.split))
      throw std::runtime_error("malformed manifest line: " + line);
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw std::runtime_error("unknown split in manifest: " + e.split);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace ctn
