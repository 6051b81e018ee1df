#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "osmseg/dataset.hpp"
#include "osmseg/geo.hpp"
#include "osmseg/labelgen.hpp"
#include "osmseg/osm_ingest.hpp"

namespace osmseg {

// Imaging domains. A and B differ in palette, contrast, noise and shadow;
// C is a third, unrelated look used for pre-training and generalization.
enum class Style { A, B, C };

std::string_view to_string(Style s);
Style style_from_name(std::string_view name);

using Rgb = std::array<double, 3>;

struct RenderStyle {
  Rgb ground{};
  double ground_variation = 0.0;  // amplitude of the low-frequency ground texture
  Rgb vegetation{};
  double vegetation_density = 0.0;  // tree crowns per 1000 ground pixels
  Rgb road{};
  Rgb road_marking{};
  std::vector<Rgb> roofs;
  double roof_shading = 0.0;  // brightness difference between roof halves
  Rgb clutter{};              // road-coloured patches on the ground (yards, parking)
  double clutter_density = 0.0;
  double shadow_dx = 0.0;
  double shadow_dy = 0.0;
  double shadow_factor = 1.0;
  double noise_sigma = 0.0;
  double gain = 1.0;
  // Per-scene random channel gain in [1 - j, 1 + j], like changing light.
  double scene_color_jitter = 0.0;

  static RenderStyle preset(Style s);
};

struct SceneParams {
  std::uint64_t seed = 0;
  int extent_px = 256;
  double gsd_m = 0.75;
  GeoPoint origin{8.40, 49.00};
  // Fraction of the road-free area covered by buildings; 0 gives no buildings.
  double building_density = 0.25;
  int building_min_px = 8;
  int building_max_px = 22;
  int road_spacing_px = 64;
  int road_jitter_px = 8;
  // Relative frequency of each road category.
  std::array<double, kRoadCategoryCount> category_mix{0.0, 0.0, 0.1, 0.15, 0.2, 0.4, 0.15, 0.0};
  RoadWidthTable widths = RoadWidthTable::defaults();
  Style style = Style::A;
  RenderStyle render = RenderStyle::preset(Style::A);

  // Parameters for the given style with render settings from its preset.
  static SceneParams for_style(Style s, std::uint64_t seed);
  void validate() const;
};

struct Scene {
  ImageRaster image;
  std::vector<BuildingPolygon> buildings;  // source ids 1..n
  std::vector<RoadCenterline> roads;       // source ids continue after the buildings
  // Class of every pixel as painted by the renderer.
  LabelRaster coverage;
};

// Axis-aligned jittered road grid, rectangular buildings clear of roads and
// of each other, rendered into an RGB image. Throws PlacementOverflow when a
// building cannot be placed within 1000 attempts.
Scene generate_scene(const SceneParams& p);

// OSM XML for the geometry: building=yes closed ways and highway=<category>
// ways, using each entity's source id as the way id.
std::string export_osm(const std::vector<BuildingPolygon>& buildings,
                       const std::vector<RoadCenterline>& roads);

}  // namespace osmseg
