#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctn/volume.hpp"

namespace ctn {

/// Volumes live as a `<base>.hdr.json` + `<base>.raw` pair; labels, when
/// present, alongside as `<base>.label.hdr.json` + `<base>.label.raw`.
void write_volume(const Volume& volume, const LabelMask* mask, const std::string& base_path);
std::pair<Volume, std::optional<LabelMask>> read_volume(const std::string& base_path);
LabelMask read_label(const std::string& base_path);
void write_label(const LabelMask& mask, const std::string& base_path);

struct ManifestEntry {
  std::string image;  // base path
  std::string label;  // base path (may equal image when stored alongside)
  std::string split;  // train | val | test
};

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace ctn
