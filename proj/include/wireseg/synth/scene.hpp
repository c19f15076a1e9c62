// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"

namespace wireseg {

struct Point2 {
  double y = 0.0;
  double x = 0.0;
};

// Procedural stand-in for a simulator-rendered source domain: a smooth open
// curve through random control points, stroked with a round brush.
struct SceneParams {
  int height = 256;
  int width = 256;
  int control_point_count = 5;
  double wire_width_px = 2.0;
  double wire_intensity = 50.0;
  double background_intensity = 200.0;
  uint64_t seed = 0;

  void validate() const {
    if (control_point_count < 4)
      throw std::invalid_argument("SceneParams: control_point_count must be >= 4");
    if (wire_width_px <= 0.0) throw std::invalid_argument("SceneParams: wire_width_px must be positive");
    if (wire_intensity < 0.0 || wire_intensity > 255.0 || background_intensity < 0.0 ||
        background_intensity > 255.0)
      throw std::invalid_argument("SceneParams: intensities must lie in [0,255]");
    if (wire_intensity == background_intensity)
      throw std::invalid_argument("SceneParams: wire and background intensity must differ");
    if (height < 64 || width < 64)
      throw std::invalid_argument("SceneParams: dimensions below 64x64 are rejected");
  }
};

namespace detail {

inline Point2 catmull_rom(const Point2& p0, const Point2& p1, const Point2& p2, const Point2& p3,
                          double t) {
  const double t2 = t * t, t3 = t2 * t;
  auto comp = [&](double a, double b, double c, double d) {
    return 0.5 * ((2.0 * b) + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 +
                  (-a + 3.0 * b - 3.0 * c + d) * t3);
  };
  return {comp(p0.y, p1.y, p2.y, p3.y), comp(p0.x, p1.x, p2.x, p3.x)};
}

inline double dist_point_segment(double py, double px, const Point2& a, const Point2& b) {
  const double vy = b.y - a.y, vx = b.x - a.x;
  const double len2 = vy * vy + vx * vx;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((py - a.y) * vy + (px - a.x) * vx) / len2, 0.0, 1.0);
  const double dy = py - (a.y + t * vy), dx = px - (a.x + t * vx);
  return std::sqrt(dy * dy + dx * dx);
}

}  // namespace detail

// Dense polyline through the control points (endpoints duplicated for the
// Catmull-Rom end segments). Works for any point count >= 2.
inline std::vector<Point2> sample_spline(const std::vector<Point2>& control, int steps_per_segment = 32) {
  if (control.size() < 2) throw std::invalid_argument("sample_spline: need at least 2 control points");
  std::vector<Point2> pts;
  const int n = static_cast<int>(control.size());
  auto at = [&](int i) { return control[static_cast<size_t>(std::clamp(i, 0, n - 1))]; };
  for (int seg = 0; seg + 1 < n; ++seg) {
    for (int s = 0; s < steps_per_segment; ++s) {
      const double t = static_cast<double>(s) / steps_per_segment;
      pts.push_back(detail::catmull_rom(at(seg - 1), at(seg), at(seg + 1), at(seg + 2), t));
    }
  }
  pts.push_back(control.back());
  return pts;
}

inline double polyline_length(const std::vector<Point2>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) {
    const double dy = pts[i].y - pts[i - 1].y, dx = pts[i].x - pts[i - 1].x;
    len += std::sqrt(dy * dy + dx * dx);
  }
  return len;
}

// Strokes the polyline with a round brush of diameter width_px.
// The mask is the hard distance threshold; the image gets a one-pixel
// anti-aliased ramp between wire and background intensity.
inline Sample stroke_curve(const std::vector<Point2>& polyline, int height, int width,
                           double width_px, double wire_intensity, double background_intensity) {
  if (polyline.size() < 2) throw std::invalid_argument("stroke_curve: polyline too short");
  const double radius = width_px * 0.5;
  Sample out;
  out.image = Image(height, width, static_cast<float>(background_intensity));
  out.mask = Mask(height, width, 0);
  out.tag = DomainTag::source;

  // Distance field, restricted to a band around each segment.
  Image dist(height, width, std::numeric_limits<float>::infinity());
  const int pad = static_cast<int>(std::ceil(radius)) + 2;
  for (size_t i = 1; i < polyline.size(); ++i) {
    const Point2& a = polyline[i - 1];
    const Point2& b = polyline[i];
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - pad);
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y))) + pad);
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - pad);
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x))) + pad);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double d = detail::dist_point_segment(r, c, a, b);
        if (d < dist.at(r, c)) dist.at(r, c) = static_cast<float>(d);
      }
  }

  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double d = dist.at(r, c);
      if (d <= radius) out.mask->at(r, c) = 1;
      // coverage ramp over one pixel; mask stays hard
      const double alpha = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (alpha > 0.0)
        out.image.at(r, c) =
            static_cast<float>(alpha * wire_intensity + (1.0 - alpha) * background_intensity);
    }
  return out;
}

// Labeled source-domain scene: random smooth open curve with margins so the
// wire stays inside the frame.
inline Sample generate_guidewire_scene(const SceneParams& params) {
  params.validate();
  Rng rng(params.seed);
  const double margin_y = params.height * 0.12;
  const double margin_x = params.width * 0.12;
  std::vector<Point2> control(static_cast<size_t>(params.control_point_count));
  // Sweep control points across the frame left to right with jitter, so the
  // curve is open and does not self-overlap into blobs.
  for (int i = 0; i < params.control_point_count; ++i) {
    const double fx = static_cast<double>(i) / (params.control_point_count - 1);
    control[static_cast<size_t>(i)].x =
        margin_x + fx * (params.width - 2.0 * margin_x) +
        rng.uniform(-0.4, 0.4) * (params.width - 2.0 * margin_x) / params.control_point_count;
    control[static_cast<size_t>(i)].y = rng.uniform(margin_y, params.height - margin_y);
  }
  Sample s = stroke_curve(sample_spline(control), params.height, params.width, params.wire_width_px,
                          params.wire_intensity, params.background_intensity);
  s.tag = DomainTag::source;
  return s;
}

}  // namespace wireseg
