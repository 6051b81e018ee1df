#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "osmseg/error.hpp"
#include "osmseg/geo.hpp"

namespace osmseg {

struct OsmNode {
  std::int64_t id = 0;
  GeoPoint location;

  bool operator==(const OsmNode&) const = default;
};

struct OsmWay {
  std::int64_t id = 0;
  std::vector<std::int64_t> node_refs;
  std::map<std::string, std::string> tags;

  bool operator==(const OsmWay&) const = default;
};

struct OsmDocument {
  std::vector<OsmNode> nodes;  // sorted by id
  std::vector<OsmWay> ways;    // sorted by id
  Diagnostics diagnostics;
};

// Parses the OSM 0.6 XML subset (osm > node, way > nd/tag). Unsupported
// elements are skipped with one diagnostic each. Throws MalformedDocument on
// XML syntax errors, reporting line and column.
OsmDocument parse_osm(std::string_view document);

// Inverse of parse_osm for the supported subset; coordinates are written
// with enough digits to round-trip exactly.
std::string write_osm(const std::vector<OsmNode>& nodes, const std::vector<OsmWay>& ways);

struct BuildingPolygon {
  std::vector<GeoPoint> ring;  // closed: front() == back()
  std::int64_t source_id = 0;

  bool operator==(const BuildingPolygon&) const = default;
};

enum class RoadCategory : std::uint8_t {
  motorway,
  trunk,
  primary,
  secondary,
  tertiary,
  residential,
  service,
  other,
};

inline constexpr int kRoadCategoryCount = 8;

std::string_view to_string(RoadCategory c);
RoadCategory road_category_from_name(std::string_view name);  // throws InvalidArgument
// Maps a highway tag value; anything outside the category list is `other`.
RoadCategory road_category_from_highway(std::string_view highway_value);

struct RoadCenterline {
  std::vector<GeoPoint> points;
  RoadCategory category = RoadCategory::other;
  std::int64_t source_id = 0;

  bool operator==(const RoadCenterline&) const = default;
};

// Ways carrying a `building` key and closed by their node refs. Open,
// unresolvable or zero-area ways are rejected with a diagnostic.
std::vector<BuildingPolygon> extract_buildings(const std::vector<OsmNode>& nodes,
                                               const std::vector<OsmWay>& ways,
                                               Diagnostics& diagnostics);

// Ways carrying a `highway` key. Consecutive duplicate points are dropped;
// ways left with fewer than two points are rejected.
std::vector<RoadCenterline> extract_roads(const std::vector<OsmNode>& nodes,
                                          const std::vector<OsmWay>& ways,
                                          Diagnostics& diagnostics);

// One line per diagnostic: "<code> id=<entity> <message>".
void write_diagnostics(std::ostream& sink, const Diagnostics& diagnostics);

}  // namespace osmseg
