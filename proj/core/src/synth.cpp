#include "osmseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "osmseg/error.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

std::string_view to_string(Style s) {
  switch (s) {
    case Style::A: return "A";
    case Style::B: return "B";
    case Style::C: return "C";
  }
  return "A";
}

Style style_from_name(std::string_view name) {
  if (name == "A" || name == "a") return Style::A;
  if (name == "B" || name == "b") return Style::B;
  if (name == "C" || name == "c") return Style::C;
  throw InvalidArgument("unknown style '" + std::string(name) + "'");
}

RenderStyle RenderStyle::preset(Style s) {
  RenderStyle r;
  switch (s) {
    case Style::A:
      // Satellite-like: muted, noisy, long soft shadows.
      r.ground = {98, 108, 76};
      r.ground_variation = 16;
      r.vegetation = {58, 80, 44};
      r.vegetation_density = 2.5;
      r.road = {88, 88, 94};
      r.road_marking = {170, 170, 160};
      r.roofs = {{150, 84, 64}, {168, 104, 78}, {118, 118, 124}, {176, 168, 150}, {94, 94, 100}};
      r.roof_shading = 16;
      r.clutter = {96, 95, 100};
      r.clutter_density = 0.5;
      r.shadow_dx = 2;
      r.shadow_dy = 2;
      r.shadow_factor = 0.6;
      r.noise_sigma = 14;
      r.gain = 1.0;
      r.scene_color_jitter = 0.10;
      break;
    case Style::B:
      // Aerial survey of similar terrain: sharper, brighter, other sun angle.
      r.ground = {92, 108, 68};
      r.ground_variation = 10;
      r.vegetation = {50, 78, 40};
      r.vegetation_density = 3.0;
      r.road = {104, 102, 108};
      r.road_marking = {206, 204, 196};
      r.roofs = {{164, 88, 66}, {130, 130, 138}, {188, 178, 160}, {132, 94, 78}, {108, 106, 112}};
      r.roof_shading = 24;
      r.clutter = {108, 106, 112};
      r.clutter_density = 0.5;
      r.shadow_dx = 3;
      r.shadow_dy = 0;
      r.shadow_factor = 0.5;
      r.noise_sigma = 6;
      r.gain = 1.15;
      r.scene_color_jitter = 0.12;
      break;
    case Style::C:
      // Arid city.
      r.ground = {186, 160, 122};
      r.ground_variation = 14;
      r.vegetation = {96, 106, 62};
      r.vegetation_density = 0.8;
      r.road = {64, 64, 66};
      r.road_marking = {210, 200, 120};
      r.roofs = {{228, 226, 218}, {196, 122, 88}, {170, 150, 126}};
      r.roof_shading = 12;
      r.clutter = {74, 72, 72};
      r.clutter_density = 0.4;
      r.shadow_dx = 1;
      r.shadow_dy = 3;
      r.shadow_factor = 0.55;
      r.noise_sigma = 10;
      r.gain = 0.95;
      r.scene_color_jitter = 0.08;
      break;
  }
  return r;
}

SceneParams SceneParams::for_style(Style s, std::uint64_t seed) {
  SceneParams p;
  p.seed = seed;
  p.style = s;
  p.render = RenderStyle::preset(s);
  return p;
}

void SceneParams::validate() const {
  if (extent_px < 16) throw InvalidArgument("scene extent must be at least 16 px");
  if (!(gsd_m > 0.0)) throw InvalidArgument("gsd must be positive");
  if (!(building_density >= 0.0 && building_density < 1.0)) {
    throw InvalidArgument("building density must be in [0, 1)");
  }
  if (building_min_px < 2 || building_max_px < building_min_px) throw InvalidArgument("invalid building sizes");
  if (road_spacing_px < 8 || road_jitter_px < 0 || 2 * road_jitter_px >= road_spacing_px) {
    throw InvalidArgument("invalid road grid");
  }
  double mix = 0.0;
  for (const double m : category_mix) {
    if (!(m >= 0.0)) throw InvalidArgument("category mix must be non-negative");
    mix += m;
  }
  if (!(mix > 0.0)) throw InvalidArgument("category mix is empty");
  widths.validate();
}

namespace {

struct GridLine {
  bool vertical = false;
  double centre = 0.0;  // pixel coordinate of the centreline
  double radius = 0.0;
  RoadCategory category = RoadCategory::other;
  double tone = 0.0;
};

struct Rect {
  int x0, y0, x1, y1;  // covered pixels [x0, x1) x [y0, y1)
};

RoadCategory draw_category(Rng& rng, const std::array<double, kRoadCategoryCount>& mix) {
  double total = 0.0;
  for (const double m : mix) total += m;
  double u = rng.uniform() * total;
  for (int c = 0; c < kRoadCategoryCount; ++c) {
    if (u < mix[static_cast<std::size_t>(c)]) return static_cast<RoadCategory>(c);
    u -= mix[static_cast<std::size_t>(c)];
  }
  for (int c = kRoadCategoryCount - 1; c >= 0; --c) {
    if (mix[static_cast<std::size_t>(c)] > 0.0) return static_cast<RoadCategory>(c);
  }
  return RoadCategory::other;
}

// Smooth scalar field in [-1, 1] by bilinear interpolation of a coarse random lattice.
Grid<double> value_noise(Rng& rng, int extent, int cell) {
  const int n = extent / cell + 2;
  Grid<double> lattice(n, n);
  for (auto& v : lattice.cells) v = rng.uniform(-1.0, 1.0);
  Grid<double> out(extent, extent);
  for (int y = 0; y < extent; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int iy = static_cast<int>(fy);
    const double ty = fy - iy;
    for (int x = 0; x < extent; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int ix = static_cast<int>(fx);
      const double tx = fx - ix;
      const double top = lattice.at(ix, iy) * (1 - tx) + lattice.at(ix + 1, iy) * tx;
      const double bottom = lattice.at(ix, iy + 1) * (1 - tx) + lattice.at(ix + 1, iy + 1) * tx;
      out.at(x, y) = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

}  // namespace

Scene generate_scene(const SceneParams& p) {
  p.validate();
  const int n = p.extent_px;
  const RenderStyle& st = p.render;
  Rng road_rng(mix_seed(p.seed, 1));
  Rng build_rng(mix_seed(p.seed, 2));
  Rng paint_rng(mix_seed(p.seed, 3));
  Rng noise_rng(mix_seed(p.seed, 4));

  Scene scene;
  const RasterGeoref g{p.origin, p.gsd_m, n, n};
  validate(g);
  scene.image = ImageRaster(n, n, g);
  scene.coverage.georef = g;
  auto& cls = scene.coverage.classes;
  cls = Grid<std::uint8_t>(n, n, 0);

  // Road grid. Centrelines sit 0.3 px off the pixel lattice so no pixel
  // centre is exactly one radius away.
  std::vector<GridLine> lines;
  for (const bool vertical : {true, false}) {
    for (int k = 0; k * p.road_spacing_px < n; ++k) {
      GridLine l;
      l.vertical = vertical;
      const int jitter = static_cast<int>(road_rng.between(-p.road_jitter_px, p.road_jitter_px));
      l.centre = k * p.road_spacing_px + p.road_spacing_px / 2 + jitter + 0.3;
      l.category = draw_category(road_rng, p.category_mix);
      l.radius = 0.5 * p.widths.width_m(l.category) / p.gsd_m;
      l.tone = road_rng.uniform(-8.0, 8.0);
      lines.push_back(l);
    }
  }
  Grid<int> road_id(n, n, -1);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const double r2 = l.radius * l.radius;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double d = (l.vertical ? x : y) - l.centre;
        if (d * d <= r2) {
          cls.at(x, y) = static_cast<std::uint8_t>(LabelClass::road);
          road_id.at(x, y) = static_cast<int>(i);
        }
      }
    }
  }

  // Buildings keep a 2-pixel gap to roads and to each other.
  constexpr int kGap = 2;
  std::size_t free_px = 0;
  for (const auto c : cls.cells) free_px += c == 0;
  const double mean_side = 0.5 * (p.building_min_px + p.building_max_px);
  const auto target = static_cast<long>(std::llround(p.building_density * static_cast<double>(free_px) /
                                                     (mean_side * mean_side)));
  std::vector<Rect> rects;
  for (long b = 0; b < target; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const int w = static_cast<int>(build_rng.between(p.building_min_px, p.building_max_px));
      const int h = static_cast<int>(build_rng.between(p.building_min_px, p.building_max_px));
      if (w + 2 > n || h + 2 > n) continue;
      const int x0 = static_cast<int>(build_rng.between(1, n - 1 - w));
      const int y0 = static_cast<int>(build_rng.between(1, n - 1 - h));
      bool clear = true;
      for (int y = std::max(0, y0 - kGap); clear && y < std::min(n, y0 + h + kGap); ++y) {
        for (int x = std::max(0, x0 - kGap); x < std::min(n, x0 + w + kGap); ++x) {
          if (cls.at(x, y) != 0) {
            clear = false;
            break;
          }
        }
      }
      if (!clear) continue;
      rects.push_back({x0, y0, x0 + w, y0 + h});
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) cls.at(x, y) = static_cast<std::uint8_t>(LabelClass::building);
      }
      placed = true;
    }
    if (!placed) {
      throw PlacementOverflow("could not place building " + std::to_string(b + 1) + " of " +
                              std::to_string(target) + " after 1000 attempts");
    }
  }

  // Geometry in geographic coordinates. Building corners lie on pixel edges.
  const PixelTransform t(g);
  std::int64_t next_id = 1;
  for (const auto& r : rects) {
    BuildingPolygon poly;
    poly.source_id = next_id++;
    const double xa = r.x0 - 0.5, xb = r.x1 - 0.5, ya = r.y0 - 0.5, yb = r.y1 - 0.5;
    for (const auto& [x, y] : {std::pair{xa, ya}, {xb, ya}, {xb, yb}, {xa, yb}, {xa, ya}}) {
      poly.ring.push_back(t.inverse(x, y));
    }
    scene.buildings.push_back(std::move(poly));
  }
  for (const auto& l : lines) {
    RoadCenterline road;
    road.source_id = next_id++;
    road.category = l.category;
    const double margin = l.radius + 2.0;
    if (l.vertical) {
      road.points = {t.inverse(l.centre, -margin), t.inverse(l.centre, n - 1 + margin)};
    } else {
      road.points = {t.inverse(-margin, l.centre), t.inverse(n - 1 + margin, l.centre)};
    }
    scene.roads.push_back(std::move(road));
  }

  // Painting.
  const Grid<double> texture = value_noise(paint_rng, n, 16);
  const Grid<double> fine = value_noise(paint_rng, n, 4);
  std::vector<Rgb> px(static_cast<std::size_t>(n) * n);
  auto pix = [&](int x, int y) -> Rgb& { return px[static_cast<std::size_t>(y) * n + x]; };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double v = st.ground_variation * texture.at(x, y) + 0.3 * st.ground_variation * fine.at(x, y);
      pix(x, y) = {st.ground[0] + v, st.ground[1] + v, st.ground[2] + 0.6 * v};
    }
  }
  auto on_ground = [&](int x, int y) { return x >= 0 && y >= 0 && x < n && y < n && cls.at(x, y) == 0; };

  // Paved yards and parking lots look like roads but are background.
  const auto clutter_count = static_cast<long>(std::llround(st.clutter_density * free_px / 1000.0));
  for (long i = 0; i < clutter_count; ++i) {
    const int w = static_cast<int>(paint_rng.between(4, 12));
    const int h = static_cast<int>(paint_rng.between(4, 12));
    const int x0 = static_cast<int>(paint_rng.between(0, n - 1));
    const int y0 = static_cast<int>(paint_rng.between(0, n - 1));
    const double tone = paint_rng.uniform(-10.0, 10.0);
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        if (on_ground(x, y)) pix(x, y) = {st.clutter[0] + tone, st.clutter[1] + tone, st.clutter[2] + tone};
      }
    }
  }
  const auto tree_count = static_cast<long>(std::llround(st.vegetation_density * free_px / 1000.0));
  for (long i = 0; i < tree_count; ++i) {
    const double cx = paint_rng.uniform(0.0, n);
    const double cy = paint_rng.uniform(0.0, n);
    const double rad = paint_rng.uniform(1.5, 3.5);
    const double tone = paint_rng.uniform(-12.0, 12.0);
    for (int y = static_cast<int>(cy - rad) - 1; y <= static_cast<int>(cy + rad) + 1; ++y) {
      for (int x = static_cast<int>(cx - rad) - 1; x <= static_cast<int>(cx + rad) + 1; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= rad * rad && on_ground(x, y)) {
          const double shade = tone - 10.0 * std::sqrt(dx * dx + dy * dy) / rad;
          pix(x, y) = {st.vegetation[0] + shade, st.vegetation[1] + shade, st.vegetation[2] + shade};
        }
      }
    }
  }

  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int id = road_id.at(x, y);
      if (id < 0 || cls.at(x, y) != static_cast<std::uint8_t>(LabelClass::road)) continue;
      const auto& l = lines[static_cast<std::size_t>(id)];
      const double across = (l.vertical ? x : y) - l.centre;
      const int along = l.vertical ? y : x;
      Rgb c{st.road[0] + l.tone, st.road[1] + l.tone, st.road[2] + l.tone};
      if (l.radius >= 4.0 && std::abs(across) < 0.5 && (along / 5) % 2 == 0) c = st.road_marking;
      pix(x, y) = c;
    }
  }

  for (const auto& r : rects) {
    const Rgb base = st.roofs[build_rng.below(st.roofs.size())];
    const bool split_x = (r.x1 - r.x0) < (r.y1 - r.y0);
    const double tone = build_rng.uniform(-10.0, 10.0);
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const bool first = split_x ? 2 * (x - r.x0) < (r.x1 - r.x0) : 2 * (y - r.y0) < (r.y1 - r.y0);
        const double s = tone + (first ? st.roof_shading : -st.roof_shading) * 0.5;
        const bool edge = x == r.x0 || y == r.y0 || x == r.x1 - 1 || y == r.y1 - 1;
        const double e = edge ? -12.0 : 0.0;
        pix(x, y) = {base[0] + s + e, base[1] + s + e, base[2] + s + e};
      }
    }
  }

  // Cast shadows on everything that is not a roof.
  const int sdx = static_cast<int>(st.shadow_dx);
  const int sdy = static_cast<int>(st.shadow_dy);
  if (sdx > 0 || sdy > 0) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (cls.at(x, y) == static_cast<std::uint8_t>(LabelClass::building)) continue;
        bool shaded = false;
        for (int j = 0; j <= sdy && !shaded; ++j) {
          for (int i = 0; i <= sdx && !shaded; ++i) {
            const int sx = x - i, sy = y - j;
            shaded = (i || j) && sx >= 0 && sy >= 0 && cls.at(sx, sy) == static_cast<std::uint8_t>(LabelClass::building);
          }
        }
        if (shaded) {
          for (auto& ch : pix(x, y)) ch *= st.shadow_factor;
        }
      }
    }
  }

  Rgb gain{};
  for (auto& g : gain) g = st.gain * paint_rng.uniform(1.0 - st.scene_color_jitter, 1.0 + st.scene_color_jitter);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = gain[static_cast<std::size_t>(c)] * (pix(x, y)[static_cast<std::size_t>(c)] - 128.0) + 128.0 +
                         noise_rng.normal(0.0, st.noise_sigma);
        scene.image.at(c, x, y) = std::clamp(std::round(v), 0.0, 255.0);
      }
    }
  }
  return scene;
}

std::string export_osm(const std::vector<BuildingPolygon>& buildings, const std::vector<RoadCenterline>& roads) {
  std::vector<OsmNode> nodes;
  std::vector<OsmWay> ways;
  std::int64_t next_node = 1;
  auto add_node = [&](const GeoPoint& p) {
    nodes.push_back({next_node, p});
    return next_node++;
  };
  for (const auto& b : buildings) {
    if (b.ring.size() < 4 || !(b.ring.front() == b.ring.back())) {
      throw InvalidArgument("building " + std::to_string(b.source_id) + " ring is not closed");
    }
    OsmWay w;
    w.id = b.source_id;
    for (std::size_t i = 0; i + 1 < b.ring.size(); ++i) w.node_refs.push_back(add_node(b.ring[i]));
    w.node_refs.push_back(w.node_refs.front());
    w.tags["building"] = "yes";
    ways.push_back(std::move(w));
  }
  for (const auto& r : roads) {
    OsmWay w;
    w.id = r.source_id;
    for (const auto& pt : r.points) w.node_refs.push_back(add_node(pt));
    w.tags["highway"] = std::string(to_string(r.category));
    ways.push_back(std::move(w));
  }
  std::sort(ways.begin(), ways.end(), [](const OsmWay& a, const OsmWay& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < ways.size(); ++i) {
    if (ways[i].id == ways[i - 1].id) throw InvalidArgument("duplicate source id " + std::to_string(ways[i].id));
  }
  return write_osm(nodes, ways);
}

}  // namespace osmseg
