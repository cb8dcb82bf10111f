#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmiris/error.hpp"
#include "pmiris/image_io.hpp"
#include "pmiris/polar.hpp"

namespace pmiris {

struct ManifestEntry {
  std::string capture_id;
  std::string subject_id;
  Eye eye = Eye::L;
  double pmi_hours = 0.0;
  std::string image_path;
  std::string mask_path;  // empty: none
  bool has_corners = false;
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  std::string kind = "polar";  // cartesian | polar

  CaptureMeta meta() const { return {subject_id, eye, pmi_hours, capture_id}; }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  double reference_angle = 0.0;

  void validate() const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (e.capture_id.empty()) throw InvalidConfig("manifest: empty capture_id");
      if (!ids.insert(e.capture_id).second)
        throw InvalidConfig("manifest: duplicate capture_id \"" + e.capture_id + "\"");
      if (!(e.pmi_hours >= 0.0))
        throw InvalidConfig("manifest: pmi_hours < 0 for \"" + e.capture_id + "\"");
      if (e.kind != "cartesian" && e.kind != "polar")
        throw InvalidConfig("manifest: kind must be cartesian|polar for \"" + e.capture_id +
                            "\"");
    }
  }
};

namespace detail {

inline int line_of_offset(const std::vector<std::uint8_t>& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  m.validate();
  nlohmann::ordered_json j;
  j["reference_angle"] = m.reference_angle;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json je;
    je["capture_id"] = e.capture_id;
    je["subject_id"] = e.subject_id;
    je["eye"] = to_string(e.eye);
    je["pmi_hours"] = e.pmi_hours;
    je["image_path"] = e.image_path;
    if (!e.mask_path.empty()) je["mask_path"] = e.mask_path;
    if (e.has_corners)
      je["corners"] = nlohmann::ordered_json::array(
          {nlohmann::ordered_json::array({e.x1, e.y1}),
           nlohmann::ordered_json::array({e.x2, e.y2})});
    je["kind"] = e.kind;
    arr.push_back(std::move(je));
  }
  j["entries"] = std::move(arr);
  return j;
}

inline void save_manifest(const std::string& path, const Manifest& m) {
  atomic_write_text(path, manifest_to_json(m).dump(2) + "\n");
}

// Paths are kept relative to the manifest file; existence is checked here
// unless the caller defers that to per-entry handling.
inline Manifest load_manifest(const std::string& path, bool check_files = true) {
  namespace fs = std::filesystem;
  const auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest " + path + " line " +
                     std::to_string(detail::line_of_offset(bytes, e.byte)) + ": " + e.what());
  }
  Manifest m;
  const fs::path base = fs::path(path).parent_path();
  try {
    m.reference_angle = j.value("reference_angle", 0.0);
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.capture_id = je.at("capture_id").get<std::string>();
      e.subject_id = je.at("subject_id").get<std::string>();
      e.eye = eye_from_string(je.at("eye").get<std::string>());
      e.pmi_hours = je.at("pmi_hours").get<double>();
      e.image_path = (base / je.at("image_path").get<std::string>()).string();
      if (je.contains("mask_path"))
        e.mask_path = (base / je.at("mask_path").get<std::string>()).string();
      if (je.contains("corners")) {
        const auto& c = je.at("corners");
        if (!c.is_array() || c.size() != 2 || c[0].size() != 2 || c[1].size() != 2)
          throw ParseError("manifest: corners must be [[x,y],[x,y]]");
        e.has_corners = true;
        e.x1 = c[0][0].get<double>();
        e.y1 = c[0][1].get<double>();
        e.x2 = c[1][0].get<double>();
        e.y2 = c[1][1].get<double>();
      }
      e.kind = je.value("kind", "polar");
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  m.validate();
  if (check_files)
    for (const auto& e : m.entries) {
      if (!fs::exists(e.image_path))
        throw FileNotFound("manifest entry \"" + e.capture_id + "\": " + e.image_path);
      if (!e.mask_path.empty() && !fs::exists(e.mask_path))
        throw FileNotFound("manifest entry \"" + e.capture_id + "\": " + e.mask_path);
    }
  return m;
}

// Loads a polar-kind entry as texture + mask, applying corner alignment when
// annotations are present.
inline PolarIris load_polar_entry(const ManifestEntry& e, double reference_angle) {
  if (e.kind != "polar")
    throw InvalidParam("load_polar_entry: entry \"" + e.capture_id + "\" is not polar");
  const GrayImage img = load_gray(e.image_path);
  if (img.width() != polar_width || img.height() != polar_height)
    throw DimensionMismatch("polar entry \"" + e.capture_id + "\" is " +
                            std::to_string(img.width()) + "x" + std::to_string(img.height()));
  RealGrid tex(polar_width, polar_height);
  for (std::size_t i = 0; i < tex.size(); ++i) tex.data()[i] = img.data()[i] / 255.0;
  MaskGrid mask(polar_width, polar_height, std::vector<std::uint8_t>(tex.size(), 1));
  if (!e.mask_path.empty()) mask = load_mask(e.mask_path, polar_width, polar_height);
  PolarIris p(std::move(tex), std::move(mask), e.meta());
  if (e.has_corners) p = align(p, e.x1, e.y1, e.x2, e.y2, reference_angle);
  return p;
}

}  // namespace pmiris
