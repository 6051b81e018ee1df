#pragma once

#include <filesystem>
#include <string>

namespace osmseg {

// WGS84 longitude/latitude in degrees. Use make_geo_point() to obtain a
// validated value; the aggregate form is kept for bit-exact round trips.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

inline constexpr double kEarthRadiusM = 6378137.0;
inline constexpr double kMaxMercatorLat = 85.0511287798066;

// Normalizes lon to [-180, 180); throws InvalidArgument when lat is outside
// the open Web Mercator range or either value is non-finite.
GeoPoint make_geo_point(double lon, double lat);

// Spherical Web Mercator (EPSG:3857) metres.
struct MercatorXY {
  double x = 0.0;
  double y = 0.0;
};

MercatorXY to_mercator(const GeoPoint& p);
GeoPoint from_mercator(const MercatorXY& m);

// Georeference of a north-up raster. `origin` is the centre of the upper-left
// pixel, which is pixel (0, 0); x grows east, y grows south. gsd_m is the
// ground size of one pixel at the raster's central latitude.
struct RasterGeoref {
  GeoPoint origin;
  double gsd_m = 1.0;
  int width_px = 0;
  int height_px = 0;

  bool operator==(const RasterGeoref&) const = default;
};

void validate(const RasterGeoref& g);

struct PixelXY {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const PixelXY&) const = default;
};

// Size of one pixel in Mercator metres. Solved so that the ground size at the
// central latitude of the raster equals gsd_m.
double mercator_pixel_size(const RasterGeoref& g);
double central_latitude(const RasterGeoref& g);

// Checked transforms: throw OutOfExtent when the point lies more than one
// pixel outside the raster (pixel edges are at -0.5 and width - 0.5).
PixelXY lonlat_to_pixel(const GeoPoint& p, const RasterGeoref& g);
GeoPoint pixel_to_lonlat(double x, double y, const RasterGeoref& g);

// Precomputed forward/inverse transform for one georef.
class PixelTransform {
 public:
  explicit PixelTransform(const RasterGeoref& g);

  PixelXY forward(const GeoPoint& p) const;
  GeoPoint inverse(double x, double y) const;
  bool within_tolerance(const PixelXY& px) const;
  const RasterGeoref& georef() const { return g_; }

 private:
  RasterGeoref g_;
  MercatorXY origin_;
  double pixel_m_;
};

// Unchecked forward transform, for geometry that may extend past the raster.
PixelXY project_to_pixel(const GeoPoint& p, const RasterGeoref& g);
GeoPoint unproject_pixel(double x, double y, const RasterGeoref& g);

// `<name>.georef.json` sidecar.
std::string georef_to_json(const RasterGeoref& g);
RasterGeoref georef_from_json(const std::string& text);
void write_georef(const std::filesystem::path& path, const RasterGeoref& g);
RasterGeoref read_georef(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& raster_path);

}  // namespace osmseg
