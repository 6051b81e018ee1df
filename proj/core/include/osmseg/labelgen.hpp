#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "osmseg/error.hpp"
#include "osmseg/geo.hpp"
#include "osmseg/osm_ingest.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

enum class LabelClass : std::uint8_t { background = 0, building = 1, road = 2 };

inline constexpr int kNumClasses = 3;

// Row-major 2-D array.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> cells;

  Grid() = default;
  Grid(int w, int h, T fill = T{})
      : width(w), height(h), cells(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  T& at(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return cells.size(); }

  bool operator==(const Grid&) const = default;
};

using Mask = Grid<std::uint8_t>;

struct LabelRaster {
  Grid<std::uint8_t> classes;  // values in {0, 1, 2}
  RasterGeoref georef;

  bool operator==(const LabelRaster&) const = default;
};

// Throws FormatViolation when a cell is outside {0,1,2} or the dimensions
// disagree with the georef.
void validate(const LabelRaster& lr);

struct RoadWidthTable {
  std::array<double, kRoadCategoryCount> widths_m{};

  static RoadWidthTable defaults();
  double width_m(RoadCategory c) const { return widths_m[static_cast<std::size_t>(c)]; }
  void validate() const;
};

// Per-road signed error added to the rendered width, in pixels.
struct WidthErrorModel {
  enum class Kind { none, uniform, normal };
  Kind kind = Kind::none;
  double spread_px = 0.0;  // half-range for uniform, sigma for normal

  double draw(Rng& rng) const;
};

struct NoiseParams {
  double shift_dx = 0.0;  // pixels, rounded to the nearest integer on use
  double shift_dy = 0.0;
  WidthErrorModel width_error;
  std::uint64_t seed = 0;
};

// Pixel-space geometry.
using PixelPath = std::vector<PixelXY>;

// Cells whose centre lies inside the closed ring (even-odd rule). Centres on
// an edge follow the top-left convention: top and left edges are inside,
// bottom and right edges are outside. A zero-area ring yields an empty mask
// and a "DegeneratePolygon" diagnostic.
Mask rasterize_ring(std::span<const PixelXY> ring, int width, int height,
                    Diagnostics* diagnostics = nullptr);

// Cells whose centre is within `radius_px` of the polyline. A path that
// collapses to a point yields an empty mask and a "ZeroLengthSegment" diagnostic.
Mask buffer_path(std::span<const PixelXY> path, double radius_px, int width, int height,
                 Diagnostics* diagnostics = nullptr);

PixelPath to_pixels(std::span<const GeoPoint> points, const RasterGeoref& g);

Mask rasterize_polygon(const BuildingPolygon& poly, const RasterGeoref& g,
                       Diagnostics* diagnostics = nullptr);

Mask buffer_centerline(const RoadCenterline& road, const RoadWidthTable& widths,
                       const RasterGeoref& g, Diagnostics* diagnostics = nullptr);

// Building beats road beats background. Throws DimensionMismatch.
LabelRaster compose_labels(std::span<const Mask> building_masks, std::span<const Mask> road_masks,
                           const RasterGeoref& g);

// Shifts all geometry by the rounded (dx, dy), perturbs each road's width by
// a draw from noise.width_error (roads in input order), then composes.
LabelRaster perturb_labels(std::span<const BuildingPolygon> buildings,
                           std::span<const RoadCenterline> roads, const RoadWidthTable& widths,
                           const NoiseParams& noise, const RasterGeoref& g,
                           Diagnostics* diagnostics = nullptr);

// Noise-free label raster for the given geometry.
LabelRaster rasterize_labels(std::span<const BuildingPolygon> buildings,
                             std::span<const RoadCenterline> roads, const RoadWidthTable& widths,
                             const RasterGeoref& g, Diagnostics* diagnostics = nullptr);

// Integer translation; vacated cells become background.
LabelRaster translate(const LabelRaster& lr, int dx, int dy);

struct LabelStats {
  std::array<std::uint64_t, kNumClasses> counts{};
  std::array<double, kNumClasses> fractions{};
};

LabelStats label_stats(const LabelRaster& lr);

// 8-bit single-channel PNG plus `.georef.json` sidecar.
void write_label_raster(const std::filesystem::path& png_path, const LabelRaster& lr);
LabelRaster read_label_raster(const std::filesystem::path& png_path);

struct LabelConfig {
  RoadWidthTable widths = RoadWidthTable::defaults();
  NoiseParams noise;
};

// JSON config: {"road_widths_m": {"motorway": 22, ...},
//               "noise": {"shift_px": [dx, dy], "width_error": {"kind": "uniform",
//                         "spread_px": 3}, "seed": 7}}
// Missing keys keep their defaults.
LabelConfig label_config_from_json(const std::string& text);
std::string label_config_to_json(const LabelConfig& cfg);
LabelConfig load_label_config(const std::filesystem::path& path);

}  // namespace osmseg
