#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "osmseg/error.hpp"
#include "osmseg/geo.hpp"
#include "osmseg/rng.hpp"
#include "support/oracles.hpp"

using namespace osmseg;

namespace {

RasterGeoref karlsruhe() { return {{8.40, 49.00}, 0.75, 256, 256}; }

double lat_of_mercator_y(double y) {
  return (2.0 * std::atan(std::exp(y / oracle::kEarthRadius)) - std::numbers::pi / 2.0) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST(Geo, MercatorMatchesTextbookFormula) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double lon = rng.uniform(-179.9, 179.9);
    const double lat = rng.uniform(-85.0, 85.0);
    const MercatorXY m = to_mercator(make_geo_point(lon, lat));
    EXPECT_NEAR(m.x, oracle::mercator_x(lon), 1e-6);
    EXPECT_NEAR(m.y, oracle::mercator_y(lat), 1e-6);
  }
}

TEST(Geo, MercatorInverse) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint p = make_geo_point(rng.uniform(-179.9, 179.9), rng.uniform(-85.0, 85.0));
    const GeoPoint q = from_mercator(to_mercator(p));
    EXPECT_NEAR(q.lon, p.lon, 1e-10);
    EXPECT_NEAR(q.lat, p.lat, 1e-10);
  }
}

TEST(Geo, MakeGeoPointValidates) {
  EXPECT_THROW(make_geo_point(0.0, 86.0), InvalidArgument);
  EXPECT_THROW(make_geo_point(NAN, 0.0), InvalidArgument);
  EXPECT_DOUBLE_EQ(make_geo_point(190.0, 0.0).lon, -170.0);
  EXPECT_DOUBLE_EQ(make_geo_point(180.0, 0.0).lon, -180.0);
}

TEST(Geo, PixelSizeGivesGroundSizeAtCentralLatitude) {
  for (const double lat : {-60.0, 0.0, 35.7, 49.0, 70.0}) {
    RasterGeoref g{{10.0, lat}, 0.5, 500, 400};
    const double m = mercator_pixel_size(g);
    const double centre_y = oracle::mercator_y(lat) - 0.5 * (g.height_px - 1) * m;
    const double lat_c = lat_of_mercator_y(centre_y);
    EXPECT_NEAR(m * std::cos(lat_c * std::numbers::pi / 180.0), g.gsd_m, 1e-12);
    EXPECT_NEAR(central_latitude(g), lat_c, 1e-12);
  }
}

TEST(Geo, OriginIsCentreOfUpperLeftPixel) {
  const auto g = karlsruhe();
  const PixelXY p = lonlat_to_pixel(g.origin, g);
  EXPECT_EQ(p.x, 0.0);
  EXPECT_EQ(p.y, 0.0);
}

TEST(Geo, ForwardMatchesOracle) {
  const auto g = karlsruhe();
  const double m = mercator_pixel_size(g);
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-0.5, 255.5);
    const double y = rng.uniform(-0.5, 255.5);
    const GeoPoint p = pixel_to_lonlat(x, y, g);
    const double ox = (oracle::mercator_x(p.lon) - oracle::mercator_x(g.origin.lon)) / m;
    const double oy = (oracle::mercator_y(g.origin.lat) - oracle::mercator_y(p.lat)) / m;
    EXPECT_NEAR(ox, x, 1e-6);
    EXPECT_NEAR(oy, y, 1e-6);
  }
}

TEST(Geo, RoundTripWithinMicroPixel) {
  Rng rng(14);
  for (int r = 0; r < 20; ++r) {
    RasterGeoref g{{rng.uniform(-170.0, 170.0), rng.uniform(-75.0, 75.0)}, rng.uniform(0.05, 2.0), 512, 512};
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(-0.5, 511.5);
      const double y = rng.uniform(-0.5, 511.5);
      const PixelXY back = lonlat_to_pixel(pixel_to_lonlat(x, y, g), g);
      EXPECT_NEAR(back.x, x, 1e-6);
      EXPECT_NEAR(back.y, y, 1e-6);
    }
  }
}

TEST(Geo, OutOfExtent) {
  const auto g = karlsruhe();
  EXPECT_NO_THROW(pixel_to_lonlat(-1.5, 256.5, g));
  EXPECT_THROW(pixel_to_lonlat(-2.0, 0.0, g), OutOfExtent);
  EXPECT_THROW(lonlat_to_pixel({8.0, 49.0}, g), OutOfExtent);
  EXPECT_NO_THROW(project_to_pixel({8.0, 49.0}, g));
}

TEST(Geo, GeorefValidation) {
  RasterGeoref g = karlsruhe();
  g.gsd_m = 0.0;
  EXPECT_THROW(validate(g), InvalidArgument);
  g = karlsruhe();
  g.width_px = 0;
  EXPECT_THROW(validate(g), InvalidArgument);
  g = {{179.99, 0.0}, 100.0, 1000, 10};
  EXPECT_THROW(validate(g), InvalidArgument);
}

TEST(Geo, GeorefJsonRoundTrip) {
  const RasterGeoref g{{8.123456789012345, 49.987654321098765}, 0.0931, 333, 217};
  EXPECT_EQ(georef_from_json(georef_to_json(g)), g);
  EXPECT_THROW(georef_from_json("{\"origin_lon\": 1}"), FormatViolation);
  EXPECT_EQ(sidecar_path("a/b/img.png"), std::filesystem::path("a/b/img.georef.json"));
}
