#include "osmseg/geo.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/error.hpp"

namespace osmseg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

GeoPoint make_geo_point(double lon, double lat) {
  if (!std::isfinite(lon) || !std::isfinite(lat)) {
    throw InvalidArgument("non-finite coordinate");
  }
  if (!(lat > -kMaxMercatorLat && lat < kMaxMercatorLat)) {
    throw InvalidArgument("latitude " + std::to_string(lat) + " outside Web Mercator range");
  }
  if (lon < -180.0 || lon >= 180.0) {
    lon = std::fmod(lon + 180.0, 360.0);
    if (lon < 0.0) lon += 360.0;
    lon -= 180.0;
  }
  return GeoPoint{lon, lat};
}

MercatorXY to_mercator(const GeoPoint& p) {
  const double lat = p.lat * kDegToRad;
  return {kEarthRadiusM * p.lon * kDegToRad,
          kEarthRadiusM * std::log(std::tan(std::numbers::pi / 4.0 + lat / 2.0))};
}

GeoPoint from_mercator(const MercatorXY& m) {
  return {m.x / kEarthRadiusM * kRadToDeg,
          (2.0 * std::atan(std::exp(m.y / kEarthRadiusM)) - std::numbers::pi / 2.0) * kRadToDeg};
}

void validate(const RasterGeoref& g) {
  if (!(g.gsd_m > 0.0) || !std::isfinite(g.gsd_m)) throw InvalidArgument("gsd_m must be > 0");
  if (g.width_px <= 0 || g.height_px <= 0) throw InvalidArgument("raster dimensions must be positive");
  make_geo_point(g.origin.lon, g.origin.lat);
  const double east_lon =
      g.origin.lon + (g.width_px - 0.5) * mercator_pixel_size(g) / kEarthRadiusM * kRadToDeg;
  if (east_lon >= 180.0) throw InvalidArgument("raster extent crosses the antimeridian");
  const double south = from_mercator({0.0, to_mercator(g.origin).y -
                                               (g.height_px - 0.5) * mercator_pixel_size(g)}).lat;
  if (!(south > -kMaxMercatorLat)) throw InvalidArgument("raster extent leaves Mercator range");
}

double mercator_pixel_size(const RasterGeoref& g) {
  // Fixed point of m = gsd / cos(lat_c(m)); the map is a strong contraction
  // for any realistic raster, so a handful of iterations reach machine precision.
  const double y0 = to_mercator(g.origin).y;
  const double half_h = 0.5 * (g.height_px - 1);
  double m = g.gsd_m / std::cos(g.origin.lat * kDegToRad);
  for (int i = 0; i < 100; ++i) {
    const double lat_c = from_mercator({0.0, y0 - half_h * m}).lat;
    const double next = g.gsd_m / std::cos(lat_c * kDegToRad);
    if (next == m) break;
    m = next;
  }
  return m;
}

double central_latitude(const RasterGeoref& g) {
  const double y0 = to_mercator(g.origin).y;
  return from_mercator({0.0, y0 - 0.5 * (g.height_px - 1) * mercator_pixel_size(g)}).lat;
}

PixelTransform::PixelTransform(const RasterGeoref& g)
    : g_(g), origin_(to_mercator(g.origin)), pixel_m_(mercator_pixel_size(g)) {}

PixelXY PixelTransform::forward(const GeoPoint& p) const {
  const MercatorXY m = to_mercator(p);
  return {(m.x - origin_.x) / pixel_m_, (origin_.y - m.y) / pixel_m_};
}

GeoPoint PixelTransform::inverse(double x, double y) const {
  return from_mercator({origin_.x + x * pixel_m_, origin_.y - y * pixel_m_});
}

bool PixelTransform::within_tolerance(const PixelXY& px) const {
  return px.x >= -1.5 && px.x <= g_.width_px + 0.5 && px.y >= -1.5 && px.y <= g_.height_px + 0.5;
}

PixelXY lonlat_to_pixel(const GeoPoint& p, const RasterGeoref& g) {
  const PixelTransform t(g);
  const PixelXY px = t.forward(p);
  if (!t.within_tolerance(px)) {
    throw OutOfExtent("point (" + std::to_string(p.lon) + ", " + std::to_string(p.lat) +
                      ") maps to pixel (" + std::to_string(px.x) + ", " + std::to_string(px.y) +
                      ")");
  }
  return px;
}

GeoPoint pixel_to_lonlat(double x, double y, const RasterGeoref& g) {
  const PixelTransform t(g);
  if (!t.within_tolerance({x, y})) {
    throw OutOfExtent("pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside raster");
  }
  return t.inverse(x, y);
}

PixelXY project_to_pixel(const GeoPoint& p, const RasterGeoref& g) {
  return PixelTransform(g).forward(p);
}

GeoPoint unproject_pixel(double x, double y, const RasterGeoref& g) {
  return PixelTransform(g).inverse(x, y);
}

std::string georef_to_json(const RasterGeoref& g) {
  nlohmann::ordered_json j;
  j["origin_lon"] = g.origin.lon;
  j["origin_lat"] = g.origin.lat;
  j["gsd_m"] = g.gsd_m;
  j["width_px"] = g.width_px;
  j["height_px"] = g.height_px;
  return j.dump(2) + "\n";
}

RasterGeoref georef_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RasterGeoref g;
    g.origin = {j.at("origin_lon").get<double>(), j.at("origin_lat").get<double>()};
    g.gsd_m = j.at("gsd_m").get<double>();
    g.width_px = j.at("width_px").get<int>();
    g.height_px = j.at("height_px").get<int>();
    validate(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("georef sidecar: ") + e.what());
  }
}

void write_georef(const std::filesystem::path& path, const RasterGeoref& g) {
  detail::write_text_file(path, georef_to_json(g));
}

RasterGeoref read_georef(const std::filesystem::path& path) {
  return georef_from_json(detail::read_text_file(path));
}

std::filesystem::path sidecar_path(const std::filesystem::path& raster_path) {
  auto p = raster_path;
  p.replace_extension(".georef.json");
  return p;
}

}  // namespace osmseg
