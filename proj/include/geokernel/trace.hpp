#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "geokernel/geometry.hpp"

namespace geokernel::trace {

using geometry::GeometricFeature;
using geometry::PrimitiveKind;

/// One observation: the features visible at a time step, plus the oracle
/// labels (ground-truth association tuples) when this is a labeled trace.
struct Frame {
  int frame_index = 0;
  std::vector<GeometricFeature> features;
  std::vector<std::vector<std::int64_t>> labels;

  const GeometricFeature* find(std::int64_t id) const {
    for (const auto& f : features)
      if (f.id == id) return &f;
    return nullptr;
  }
};

/// Ordered frames of one demonstration; the state sequence the IRL loop
/// consumes. Labels may be empty (unlabeled trace).
struct DemonstrationTrace {
  std::int64_t trace_id = 0;
  std::size_t descriptor_dim = 0;
  std::vector<Frame> frames;

  bool labeled() const {
    for (const auto& f : frames)
      if (!f.labels.empty()) return true;
    return false;
  }
};

inline void validate(const DemonstrationTrace& t) {
  for (const Frame& fr : t.frames) {
    std::set<std::int64_t> seen;
    for (const GeometricFeature& f : fr.features) {
      if (!seen.insert(f.id).second)
        fail("trace: duplicate feature id " + std::to_string(f.id) + " in frame " +
             std::to_string(fr.frame_index));
      if (f.descriptor.size() != t.descriptor_dim)
        fail("trace: feature " + std::to_string(f.id) + " has descriptor length " +
             std::to_string(f.descriptor.size()) + ", expected " +
             std::to_string(t.descriptor_dim));
      if (f.kind == PrimitiveKind::line2d) {
        double n = f.coords[0] * f.coords[0] + f.coords[1] * f.coords[1];
        if (std::fabs(n - 1.0) > 1e-9)
          fail("trace: line feature " + std::to_string(f.id) + " is not normalized");
      }
    }
  }
}

inline nlohmann::json feature_to_json(const GeometricFeature& f) {
  nlohmann::json j;
  j["id"] = f.id;
  j["kind"] = geometry::kind_name(f.kind);
  j["descriptor"] = f.descriptor;
  switch (f.kind) {
    case PrimitiveKind::point2d:
      j["coords"] = {f.coords[0], f.coords[1]};
      break;
    case PrimitiveKind::line2d:
      j["coords"] = {f.coords[0], f.coords[1], f.coords[2],
                     f.end1[0], f.end1[1], f.end2[0], f.end2[1]};
      break;
    case PrimitiveKind::point3d:
      j["coords"] = {f.coords[0], f.coords[1], f.coords[2]};
      break;
  }
  return j;
}

inline GeometricFeature feature_from_json(const nlohmann::json& j) {
  GeometricFeature f;
  f.id = j.at("id").get<std::int64_t>();
  f.kind = geometry::kind_from_name(j.at("kind").get<std::string>());
  f.descriptor = j.at("descriptor").get<std::vector<double>>();
  auto coords = j.at("coords").get<std::vector<double>>();
  switch (f.kind) {
    case PrimitiveKind::point2d:
      if (coords.size() != 2) fail("trace: point2d wants 2 coords");
      f.coords = {coords[0], coords[1], 0};
      break;
    case PrimitiveKind::line2d:
      if (coords.size() != 7) fail("trace: line2d wants 7 coords (a,b,c,x1,y1,x2,y2)");
      f.coords = {coords[0], coords[1], coords[2]};
      f.end1 = {coords[3], coords[4]};
      f.end2 = {coords[5], coords[6]};
      break;
    case PrimitiveKind::point3d:
      if (coords.size() != 3) fail("trace: point3d wants 3 coords");
      f.coords = {coords[0], coords[1], coords[2]};
      break;
  }
  return f;
}

inline nlohmann::json frame_to_json(const Frame& fr) {
  nlohmann::json j;
  j["frame_index"] = fr.frame_index;
  j["features"] = nlohmann::json::array();
  for (const auto& f : fr.features) j["features"].push_back(feature_to_json(f));
  j["labels"] = fr.labels;
  return j;
}

inline Frame frame_from_json(const nlohmann::json& j) {
  Frame fr;
  fr.frame_index = j.at("frame_index").get<int>();
  for (const auto& f : j.at("features")) fr.features.push_back(feature_from_json(f));
  if (j.contains("labels"))
    fr.labels = j.at("labels").get<std::vector<std::vector<std::int64_t>>>();
  return fr;
}

/// JSON-lines trace file: one frame per line. Doubles are emitted in
/// shortest round-trip form, so read(write(t)) reproduces t bit for bit.
inline void write_jsonl(const std::string& path, const DemonstrationTrace& t) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  for (const Frame& fr : t.frames) out << frame_to_json(fr).dump() << "\n";
}

inline DemonstrationTrace read_jsonl(const std::string& path, std::int64_t trace_id = 0) {
  std::ifstream in(path);
  if (!in) fail("cannot open trace file '" + path + "'");
  DemonstrationTrace t;
  t.trace_id = trace_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail("trace '" + path + "': invalid JSON on line " + std::to_string(line_no));
    t.frames.push_back(frame_from_json(j));
  }
  if (t.frames.empty()) fail("trace '" + path + "': no frames");
  for (const Frame& fr : t.frames) {
    if (!fr.features.empty()) {
      t.descriptor_dim = fr.features.front().descriptor.size();
      break;
    }
  }
  validate(t);
  return t;
}

}  // namespace geokernel::trace
