#include "osmseg/labelgen.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/png_io.hpp"

namespace osmseg {

namespace {

double shoelace_twice(std::span<const PixelXY> ring) {
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const PixelXY& a = ring[i];
    const PixelXY& b = ring[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice;
}

// Ring without the duplicated closing vertex.
std::span<const PixelXY> open_ring(std::span<const PixelXY> ring) {
  if (ring.size() >= 2 && ring.front() == ring.back()) return ring.first(ring.size() - 1);
  return ring;
}

void paint_ring(std::span<const PixelXY> closed, Mask& target, Diagnostics* diagnostics) {
  const auto ring = open_ring(closed);
  if (ring.size() < 3 || shoelace_twice(ring) == 0.0) {
    if (diagnostics != nullptr) {
      diagnostics->push_back({"DegeneratePolygon", "polygon has zero area; nothing drawn", 0});
    }
    return;
  }
  double min_y = ring[0].y;
  double max_y = ring[0].y;
  for (const auto& p : ring) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int y_begin = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int y_end = std::min(target.height - 1, static_cast<int>(std::floor(max_y)));

  const std::size_t n = ring.size();
  std::vector<double> crossings;
  for (int y = y_begin; y <= y_end; ++y) {
    const double yc = y;
    crossings.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const PixelXY& pi = ring[i];
      const PixelXY& pj = ring[j];
      // Half-open in y: a vertex row belongs to the edge below it.
      if ((pi.y > yc) != (pj.y > yc)) {
        crossings.push_back((pj.x - pi.x) * (yc - pi.y) / (pj.y - pi.y) + pi.x);
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // Centres with crossings[k] <= x < crossings[k + 1].
      const double lo = std::ceil(crossings[k]);
      const double hi = std::ceil(crossings[k + 1]) - 1.0;
      const int x0 = static_cast<int>(std::max(lo, 0.0));
      const int x1 = static_cast<int>(std::min(hi, static_cast<double>(target.width - 1)));
      for (int x = x0; x <= x1; ++x) target.at(x, y) = 1;
    }
  }
}

void paint_path(std::span<const PixelXY> raw, double radius, Mask& target,
                Diagnostics* diagnostics) {
  PixelPath path(raw.begin(), raw.end());
  path.erase(std::unique(path.begin(), path.end()), path.end());
  if (path.size() < 2) {
    if (diagnostics != nullptr) {
      diagnostics->push_back({"ZeroLengthSegment", "centerline collapses to a point; nothing drawn", 0});
    }
    return;
  }
  radius = std::max(radius, 0.0);
  const double r2 = radius * radius;
  for (std::size_t s = 0; s + 1 < path.size(); ++s) {
    const PixelXY a = path[s];
    const PixelXY b = path[s + 1];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
    const int x1 = std::min(target.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
    const int y1 = std::min(target.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x - a.x;
        const double py = y - a.y;
        const double t = std::clamp((px * dx + py * dy) / len2, 0.0, 1.0);
        const double ex = px - t * dx;
        const double ey = py - t * dy;
        if (ex * ex + ey * ey <= r2) target.at(x, y) = 1;
      }
    }
  }
}

PixelPath shifted(PixelPath path, double dx, double dy) {
  for (auto& p : path) {
    p.x += dx;
    p.y += dy;
  }
  return path;
}

void check_dims(const Mask& m, const RasterGeoref& g) {
  if (m.width != g.width_px || m.height != g.height_px ||
      m.cells.size() != static_cast<std::size_t>(m.width) * m.height) {
    throw DimensionMismatch("mask " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                            " vs raster " + std::to_string(g.width_px) + "x" +
                            std::to_string(g.height_px));
  }
}

LabelRaster compose_two(const Mask& building, const Mask& road, const RasterGeoref& g) {
  LabelRaster lr{Grid<std::uint8_t>(g.width_px, g.height_px), g};
  for (std::size_t i = 0; i < lr.classes.cells.size(); ++i) {
    if (building.cells[i]) {
      lr.classes.cells[i] = static_cast<std::uint8_t>(LabelClass::building);
    } else if (road.cells[i]) {
      lr.classes.cells[i] = static_cast<std::uint8_t>(LabelClass::road);
    }
  }
  return lr;
}

}  // namespace

void validate(const LabelRaster& lr) {
  if (lr.classes.width != lr.georef.width_px || lr.classes.height != lr.georef.height_px ||
      lr.classes.cells.size() != static_cast<std::size_t>(lr.classes.width) * lr.classes.height) {
    throw FormatViolation("label raster dimensions disagree with georef");
  }
  for (const auto c : lr.classes.cells) {
    if (c >= kNumClasses) throw FormatViolation("label value " + std::to_string(c) + " not in {0,1,2}");
  }
}

RoadWidthTable RoadWidthTable::defaults() {
  RoadWidthTable t;
  t.widths_m = {22.0, 18.0, 14.0, 11.0, 9.0, 7.0, 4.5, 6.0};
  return t;
}

void RoadWidthTable::validate() const {
  for (int i = 0; i < kRoadCategoryCount; ++i) {
    if (!(widths_m[i] > 0.0) || !std::isfinite(widths_m[i])) {
      throw InvalidArgument("road width for " +
                            std::string(to_string(static_cast<RoadCategory>(i))) +
                            " must be positive");
    }
  }
}

double WidthErrorModel::draw(Rng& rng) const {
  switch (kind) {
    case Kind::none: return 0.0;
    case Kind::uniform: return rng.uniform(-spread_px, spread_px);
    case Kind::normal: return rng.normal(0.0, spread_px);
  }
  return 0.0;
}

Mask rasterize_ring(std::span<const PixelXY> ring, int width, int height, Diagnostics* diagnostics) {
  Mask m(width, height);
  paint_ring(ring, m, diagnostics);
  return m;
}

Mask buffer_path(std::span<const PixelXY> path, double radius_px, int width, int height,
                 Diagnostics* diagnostics) {
  Mask m(width, height);
  paint_path(path, radius_px, m, diagnostics);
  return m;
}

PixelPath to_pixels(std::span<const GeoPoint> points, const RasterGeoref& g) {
  const PixelTransform t(g);
  PixelPath out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t.forward(p));
  return out;
}

Mask rasterize_polygon(const BuildingPolygon& poly, const RasterGeoref& g, Diagnostics* diagnostics) {
  const std::size_t before = diagnostics ? diagnostics->size() : 0;
  Mask m = rasterize_ring(to_pixels(poly.ring, g), g.width_px, g.height_px, diagnostics);
  if (diagnostics) {
    for (std::size_t i = before; i < diagnostics->size(); ++i) (*diagnostics)[i].entity_id = poly.source_id;
  }
  return m;
}

Mask buffer_centerline(const RoadCenterline& road, const RoadWidthTable& widths,
                       const RasterGeoref& g, Diagnostics* diagnostics) {
  const std::size_t before = diagnostics ? diagnostics->size() : 0;
  const double radius = 0.5 * widths.width_m(road.category) / g.gsd_m;
  Mask m = buffer_path(to_pixels(road.points, g), radius, g.width_px, g.height_px, diagnostics);
  if (diagnostics) {
    for (std::size_t i = before; i < diagnostics->size(); ++i) (*diagnostics)[i].entity_id = road.source_id;
  }
  return m;
}

LabelRaster compose_labels(std::span<const Mask> building_masks, std::span<const Mask> road_masks,
                           const RasterGeoref& g) {
  Mask building(g.width_px, g.height_px);
  Mask road(g.width_px, g.height_px);
  for (const auto& m : building_masks) {
    check_dims(m, g);
    for (std::size_t i = 0; i < m.cells.size(); ++i) building.cells[i] |= m.cells[i] ? 1 : 0;
  }
  for (const auto& m : road_masks) {
    check_dims(m, g);
    for (std::size_t i = 0; i < m.cells.size(); ++i) road.cells[i] |= m.cells[i] ? 1 : 0;
  }
  return compose_two(building, road, g);
}

LabelRaster perturb_labels(std::span<const BuildingPolygon> buildings,
                           std::span<const RoadCenterline> roads, const RoadWidthTable& widths,
                           const NoiseParams& noise, const RasterGeoref& g,
                           Diagnostics* diagnostics) {
  widths.validate();
  const PixelTransform t(g);
  const double dx = std::round(noise.shift_dx);
  const double dy = std::round(noise.shift_dy);
  Rng rng(noise.seed);

  Mask building(g.width_px, g.height_px);
  for (const auto& b : buildings) {
    const std::size_t before = diagnostics ? diagnostics->size() : 0;
    PixelPath ring;
    ring.reserve(b.ring.size());
    for (const auto& p : b.ring) ring.push_back(t.forward(p));
    paint_ring(shifted(std::move(ring), dx, dy), building, diagnostics);
    if (diagnostics) {
      for (std::size_t i = before; i < diagnostics->size(); ++i) (*diagnostics)[i].entity_id = b.source_id;
    }
  }
  Mask road(g.width_px, g.height_px);
  for (const auto& r : roads) {
    const double width_px = widths.width_m(r.category) / g.gsd_m + noise.width_error.draw(rng);
    const std::size_t before = diagnostics ? diagnostics->size() : 0;
    PixelPath path;
    path.reserve(r.points.size());
    for (const auto& p : r.points) path.push_back(t.forward(p));
    paint_path(shifted(std::move(path), dx, dy), 0.5 * std::max(width_px, 0.0), road, diagnostics);
    if (diagnostics) {
      for (std::size_t i = before; i < diagnostics->size(); ++i) (*diagnostics)[i].entity_id = r.source_id;
    }
  }
  return compose_two(building, road, g);
}

LabelRaster rasterize_labels(std::span<const BuildingPolygon> buildings,
                             std::span<const RoadCenterline> roads, const RoadWidthTable& widths,
                             const RasterGeoref& g, Diagnostics* diagnostics) {
  return perturb_labels(buildings, roads, widths, NoiseParams{}, g, diagnostics);
}

LabelRaster translate(const LabelRaster& lr, int dx, int dy) {
  LabelRaster out{Grid<std::uint8_t>(lr.classes.width, lr.classes.height), lr.georef};
  for (int y = 0; y < lr.classes.height; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= lr.classes.height) continue;
    for (int x = 0; x < lr.classes.width; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= lr.classes.width) continue;
      out.classes.at(x, y) = lr.classes.at(sx, sy);
    }
  }
  return out;
}

LabelStats label_stats(const LabelRaster& lr) {
  LabelStats s;
  for (const auto c : lr.classes.cells) {
    if (c >= kNumClasses) throw LabelOutOfRange("label value " + std::to_string(c));
    ++s.counts[c];
  }
  const double total = static_cast<double>(lr.classes.cells.size());
  if (total > 0) {
    for (int k = 0; k < kNumClasses; ++k) s.fractions[k] = static_cast<double>(s.counts[k]) / total;
  }
  return s;
}

void write_label_raster(const std::filesystem::path& png_path, const LabelRaster& lr) {
  validate(lr);
  write_png(png_path, Image8{lr.classes.width, lr.classes.height, 1, lr.classes.cells});
  write_georef(sidecar_path(png_path), lr.georef);
}

LabelRaster read_label_raster(const std::filesystem::path& png_path) {
  Image8 img = read_png(png_path, 1);
  LabelRaster lr;
  lr.classes.width = img.width;
  lr.classes.height = img.height;
  lr.classes.cells = std::move(img.pixels);
  lr.georef = read_georef(sidecar_path(png_path));
  validate(lr);
  return lr;
}

LabelConfig label_config_from_json(const std::string& text) {
  LabelConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("road_widths_m")) {
      for (const auto& [name, value] : j.at("road_widths_m").items()) {
        cfg.widths.widths_m[static_cast<std::size_t>(road_category_from_name(name))] =
            value.get<double>();
      }
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      if (n.contains("shift_px")) {
        cfg.noise.shift_dx = n.at("shift_px").at(0).get<double>();
        cfg.noise.shift_dy = n.at("shift_px").at(1).get<double>();
      }
      if (n.contains("width_error")) {
        const auto& w = n.at("width_error");
        const auto kind = w.value("kind", std::string("none"));
        if (kind == "none") {
          cfg.noise.width_error.kind = WidthErrorModel::Kind::none;
        } else if (kind == "uniform") {
          cfg.noise.width_error.kind = WidthErrorModel::Kind::uniform;
        } else if (kind == "normal") {
          cfg.noise.width_error.kind = WidthErrorModel::Kind::normal;
        } else {
          throw InvalidArgument("unknown width_error kind '" + kind + "'");
        }
        cfg.noise.width_error.spread_px = w.value("spread_px", 0.0);
      }
      cfg.noise.seed = n.value("seed", std::uint64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("label config: ") + e.what());
  }
  cfg.widths.validate();
  return cfg;
}

std::string label_config_to_json(const LabelConfig& cfg) {
  nlohmann::ordered_json j;
  for (int i = 0; i < kRoadCategoryCount; ++i) {
    j["road_widths_m"][std::string(to_string(static_cast<RoadCategory>(i)))] = cfg.widths.widths_m[i];
  }
  j["noise"]["shift_px"] = {cfg.noise.shift_dx, cfg.noise.shift_dy};
  const char* kind = "none";
  if (cfg.noise.width_error.kind == WidthErrorModel::Kind::uniform) kind = "uniform";
  if (cfg.noise.width_error.kind == WidthErrorModel::Kind::normal) kind = "normal";
  j["noise"]["width_error"] = {{"kind", kind}, {"spread_px", cfg.noise.width_error.spread_px}};
  j["noise"]["seed"] = cfg.noise.seed;
  return j.dump(2) + "\n";
}

LabelConfig load_label_config(const std::filesystem::path& path) {
  return label_config_from_json(detail::read_text_file(path));
}

}  // namespace osmseg
