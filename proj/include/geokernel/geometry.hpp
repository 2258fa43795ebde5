#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geokernel/common.hpp"

namespace geokernel::geometry {

enum class PrimitiveKind { point2d, line2d, point3d };

inline const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::point2d: return "point2d";
    case PrimitiveKind::line2d: return "line2d";
    case PrimitiveKind::point3d: return "point3d";
  }
  return "?";
}

inline PrimitiveKind kind_from_name(const std::string& s) {
  if (s == "point2d") return PrimitiveKind::point2d;
  if (s == "line2d") return PrimitiveKind::line2d;
  if (s == "point3d") return PrimitiveKind::point3d;
  fail("unknown primitive kind '" + s + "'");
}

/// One observed geometric feature: a descriptor (appearance) plus coordinate
/// parameters of the primitive. Lines carry their homogeneous (a,b,c) with
/// a^2+b^2 = 1 together with the two endpoints that produced them.
struct GeometricFeature {
  std::int64_t id = 0;
  PrimitiveKind kind = PrimitiveKind::point2d;
  std::vector<double> descriptor;
  std::array<double, 3> coords{0, 0, 0};  // (x,y,-) / (a,b,c) / (x,y,z)
  std::array<double, 2> end1{0, 0};
  std::array<double, 2> end2{0, 0};
};

inline GeometricFeature make_point2d(std::int64_t id, double x, double y,
                                     std::vector<double> descriptor = {}) {
  GeometricFeature f;
  f.id = id;
  f.kind = PrimitiveKind::point2d;
  f.coords = {x, y, 0};
  f.descriptor = std::move(descriptor);
  return f;
}

inline GeometricFeature make_point3d(std::int64_t id, double x, double y, double z,
                                     std::vector<double> descriptor = {}) {
  GeometricFeature f;
  f.id = id;
  f.kind = PrimitiveKind::point3d;
  f.coords = {x, y, z};
  f.descriptor = std::move(descriptor);
  return f;
}

/// Builds a line feature through two endpoints; (a,b,c) is normalized so the
/// point-line dot product is the signed Euclidean distance.
inline GeometricFeature make_line2d(std::int64_t id, std::array<double, 2> e1,
                                    std::array<double, 2> e2,
                                    std::vector<double> descriptor = {}) {
  double dx = e2[0] - e1[0];
  double dy = e2[1] - e1[1];
  double len = std::hypot(dx, dy);
  if (len < 1e-12) fail("line2d: coincident endpoints");
  double a = -dy / len;
  double b = dx / len;
  double c = -(a * e1[0] + b * e1[1]);
  GeometricFeature f;
  f.id = id;
  f.kind = PrimitiveKind::line2d;
  f.coords = {a, b, c};
  f.end1 = e1;
  f.end2 = e2;
  f.descriptor = std::move(descriptor);
  return f;
}

enum class TemplateKind { p2p, p2l, l2l, copl };

inline const char* template_name(TemplateKind k) {
  switch (k) {
    case TemplateKind::p2p: return "p2p";
    case TemplateKind::p2l: return "p2l";
    case TemplateKind::l2l: return "l2l";
    case TemplateKind::copl: return "copl";
  }
  return "?";
}

inline TemplateKind template_from_name(const std::string& s) {
  if (s == "p2p") return TemplateKind::p2p;
  if (s == "p2l") return TemplateKind::p2l;
  if (s == "l2l") return TemplateKind::l2l;
  if (s == "copl") return TemplateKind::copl;
  fail("unknown kernel template '" + s + "'");
}

/// Fixed unit-graph structure of one skill kernel type: node roles, edge
/// list, control-error dimension, and whether node order is interchangeable.
struct KernelTemplate {
  TemplateKind kind;
  int arity;
  int error_dim;
  bool symmetric;
  std::vector<std::pair<int, int>> edges;      // undirected
  std::vector<PrimitiveKind> roles;            // one per node

  static KernelTemplate of(TemplateKind kind) {
    switch (kind) {
      case TemplateKind::p2p:
        return {kind, 2, 2, true, {{0, 1}},
                {PrimitiveKind::point2d, PrimitiveKind::point2d}};
      case TemplateKind::p2l:
        return {kind, 2, 1, false, {{0, 1}},
                {PrimitiveKind::point2d, PrimitiveKind::line2d}};
      case TemplateKind::l2l:
        return {kind, 2, 2, true, {{0, 1}},
                {PrimitiveKind::line2d, PrimitiveKind::line2d}};
      case TemplateKind::copl:
        return {kind, 4, 1, true,
                {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}},
                {PrimitiveKind::point3d, PrimitiveKind::point3d,
                 PrimitiveKind::point3d, PrimitiveKind::point3d}};
    }
    fail("unknown template kind");
  }
};

inline void require_kind(const GeometricFeature& f, PrimitiveKind k, const char* op) {
  if (f.kind != k)
    fail(std::string(op) + ": expected " + kind_name(k) + ", got " + kind_name(f.kind) +
         " (feature " + std::to_string(f.id) + ")");
}

/// Point coincidence error: second minus first, so the vector points from
/// the moving feature toward its target.
inline std::vector<double> error_p2p(const GeometricFeature& p1, const GeometricFeature& p2) {
  require_kind(p1, PrimitiveKind::point2d, "error_p2p");
  require_kind(p2, PrimitiveKind::point2d, "error_p2p");
  return {p2.coords[0] - p1.coords[0], p2.coords[1] - p1.coords[1]};
}

/// Signed point-line distance via the homogeneous dot product.
inline std::vector<double> error_p2l(const GeometricFeature& p, const GeometricFeature& l) {
  require_kind(p, PrimitiveKind::point2d, "error_p2l");
  require_kind(l, PrimitiveKind::line2d, "error_p2l");
  double norm = l.coords[0] * l.coords[0] + l.coords[1] * l.coords[1];
  if (std::fabs(norm - 1.0) > 1e-9) fail("error_p2l: line is not normalized (a^2+b^2 != 1)");
  return {l.coords[0] * p.coords[0] + l.coords[1] * p.coords[1] + l.coords[2]};
}

/// Collinearity error: both endpoints of the first line measured against the
/// second line. Zero iff the lines are collinear.
inline std::vector<double> error_l2l(const GeometricFeature& la, const GeometricFeature& lb) {
  require_kind(la, PrimitiveKind::line2d, "error_l2l");
  require_kind(lb, PrimitiveKind::line2d, "error_l2l");
  double seg = std::hypot(la.end2[0] - la.end1[0], la.end2[1] - la.end1[1]);
  if (seg < 1e-12) fail("error_l2l: degenerate segment (coincident endpoints)");
  double norm = lb.coords[0] * lb.coords[0] + lb.coords[1] * lb.coords[1];
  if (std::fabs(norm - 1.0) > 1e-9) fail("error_l2l: line is not normalized (a^2+b^2 != 1)");
  auto dist = [&](const std::array<double, 2>& e) {
    return lb.coords[0] * e[0] + lb.coords[1] * e[1] + lb.coords[2];
  };
  return {dist(la.end1), dist(la.end2)};
}

/// Coplanarity error: determinant of the homogeneous 4x4 coordinate matrix
/// (computed as the 3x3 determinant of edge vectors from p1), divided by the
/// product of the three edge lengths so the value is scale-free.
inline std::vector<double> error_copl(const GeometricFeature& p1, const GeometricFeature& p2,
                                      const GeometricFeature& p3, const GeometricFeature& p4) {
  const GeometricFeature* pts[4] = {&p1, &p2, &p3, &p4};
  for (const auto* p : pts) require_kind(*p, PrimitiveKind::point3d, "error_copl");
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (pts[i]->coords == pts[j]->coords)
        fail("error_copl: repeated points (features " + std::to_string(pts[i]->id) + ", " +
             std::to_string(pts[j]->id) + ")");
  std::array<std::array<double, 3>, 3> e;
  std::array<double, 3> len{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) e[r][c] = pts[r + 1]->coords[c] - p1.coords[c];
    len[r] = std::sqrt(e[r][0] * e[r][0] + e[r][1] * e[r][1] + e[r][2] * e[r][2]);
  }
  double det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) -
               e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
               e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
  return {det / (len[0] * len[1] * len[2])};
}

/// Control error of one template instance given its node features in
/// template order.
inline std::vector<double> instance_error(const KernelTemplate& tmpl,
                                          std::span<const GeometricFeature* const> nodes) {
  if (static_cast<int>(nodes.size()) != tmpl.arity)
    fail(std::string("instance_error: ") + template_name(tmpl.kind) + " expects " +
         std::to_string(tmpl.arity) + " nodes, got " + std::to_string(nodes.size()));
  switch (tmpl.kind) {
    case TemplateKind::p2p: return error_p2p(*nodes[0], *nodes[1]);
    case TemplateKind::p2l: return error_p2l(*nodes[0], *nodes[1]);
    case TemplateKind::l2l: return error_l2l(*nodes[0], *nodes[1]);
    case TemplateKind::copl: return error_copl(*nodes[0], *nodes[1], *nodes[2], *nodes[3]);
  }
  fail("instance_error: unknown template");
}

/// Relevance-weighted sum of per-instance control errors. Weights must sum
/// to one (within 1e-9) and all errors must share one dimension.
inline std::vector<double> aggregate_error(
    std::span<const std::pair<double, std::vector<double>>> instances) {
  if (instances.empty()) fail("aggregate_error: no instances");
  double total = 0;
  std::size_t d = instances.front().second.size();
  for (const auto& [g, e] : instances) {
    total += g;
    if (e.size() != d) fail("aggregate_error: mixed error dimensions");
  }
  if (std::fabs(total - 1.0) > 1e-9)
    fail("aggregate_error: weights sum to " + std::to_string(total) + ", expected 1");
  std::vector<double> out(d, 0.0);
  for (const auto& [g, e] : instances)
    for (std::size_t i = 0; i < d; ++i) out[i] += g * e[i];
  return out;
}

}  // namespace geokernel::geometry
