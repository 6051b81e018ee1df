#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "osmseg/error.hpp"
#include "osmseg/osm_ingest.hpp"
#include "osmseg/rng.hpp"
#include "osmseg/synth.hpp"

using namespace osmseg;

namespace {

constexpr const char* kSmall = R"(<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6" generator="test">
  <bounds minlat="49.0" minlon="8.4" maxlat="49.01" maxlon="8.41"/>
  <node id="1" lat="49.0000" lon="8.4000"/>
  <node id="2" lat="49.0000" lon="8.4010"/>
  <node id="3" lat="49.0010" lon="8.4010"/>
  <node id="4" lat="49.0010" lon="8.4000"/>
  <node id="5" lat="49.0020" lon="8.4000"/>
  <node id="6" lat="49.0020" lon="8.4050"/>
  <way id="10">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="1"/>
    <tag k="building" v="house"/>
  </way>
  <way id="11">
    <nd ref="5"/><nd ref="6"/>
    <tag k="highway" v="residential"/>
    <tag k="name" v="A &amp; B"/>
  </way>
  <way id="12">
    <nd ref="5"/><nd ref="6"/><nd ref="6"/>
    <tag k="highway" v="footway"/>
  </way>
  <relation id="99"><member type="way" ref="10" role="outer"/></relation>
</osm>)";

bool has_code(const Diagnostics& d, const std::string& code, std::int64_t id = -1) {
  return std::any_of(d.begin(), d.end(),
                     [&](const Diagnostic& x) { return x.code == code && (id < 0 || x.entity_id == id); });
}

}  // namespace

TEST(Osm, ParsesNodesWaysAndTags) {
  const auto doc = parse_osm(kSmall);
  ASSERT_EQ(doc.nodes.size(), 6u);
  ASSERT_EQ(doc.ways.size(), 3u);
  EXPECT_EQ(doc.nodes[2].id, 3);
  EXPECT_DOUBLE_EQ(doc.nodes[2].location.lat, 49.001);
  EXPECT_EQ(doc.ways[0].node_refs, (std::vector<std::int64_t>{1, 2, 3, 4, 1}));
  EXPECT_EQ(doc.ways[1].tags.at("name"), "A & B");
  EXPECT_TRUE(has_code(doc.diagnostics, "UnsupportedElement"));
}

TEST(Osm, ExtractsBuildingsAndRoads) {
  auto doc = parse_osm(kSmall);
  Diagnostics d;
  const auto b = extract_buildings(doc.nodes, doc.ways, d);
  const auto r = extract_roads(doc.nodes, doc.ways, d);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].source_id, 10);
  EXPECT_EQ(b[0].ring.front(), b[0].ring.back());
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].category, RoadCategory::residential);
  EXPECT_EQ(r[1].category, RoadCategory::other);
  EXPECT_EQ(r[1].points.size(), 2u);
}

TEST(Osm, RejectsBrokenGeometryWithDiagnostics) {
  const std::string xml = R"(<osm>
    <node id="1" lat="0" lon="0"/><node id="2" lat="0" lon="1"/><node id="3" lat="1" lon="1"/>
    <way id="1"><nd ref="1"/><nd ref="2"/><nd ref="3"/><tag k="building" v="yes"/></way>
    <way id="2"><nd ref="1"/><nd ref="2"/><nd ref="1"/><tag k="building" v="yes"/></way>
    <way id="3"><nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="1"/><tag k="building" v="yes"/></way>
    <way id="4"><nd ref="1"/><nd ref="77"/><tag k="highway" v="primary"/></way>
    <way id="5"><nd ref="1"/><nd ref="1"/><tag k="highway" v="primary"/></way>
    <way id="6"><nd ref="1"/><tag k="highway" v="primary"/></way>
    <node id="8" lat="89" lon="0"/>
    <node id="2" lat="5" lon="5"/>
  </osm>)";
  auto doc = parse_osm(xml);
  Diagnostics d = doc.diagnostics;
  const auto b = extract_buildings(doc.nodes, doc.ways, d);
  const auto r = extract_roads(doc.nodes, doc.ways, d);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].source_id, 3);
  EXPECT_TRUE(r.empty());
  EXPECT_TRUE(has_code(d, "OpenBuilding", 1));
  EXPECT_TRUE(has_code(d, "ShortRing", 2));
  EXPECT_TRUE(has_code(d, "DanglingRef", 4));
  EXPECT_TRUE(has_code(d, "ZeroLengthSegment", 5));
  EXPECT_TRUE(has_code(d, "ShortWay", 6));
  EXPECT_TRUE(has_code(d, "InvalidCoordinate", 8));
  EXPECT_TRUE(has_code(d, "DuplicateId", 2));
}

TEST(Osm, MalformedXmlReportsPosition) {
  try {
    parse_osm("<osm>\n  <node id='1' lat='0' lon='0'>\n</osm>");
    FAIL() << "expected MalformedDocument";
  } catch (const MalformedDocument& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
  EXPECT_THROW(parse_osm("<gpx/>"), MalformedDocument);
}

TEST(Osm, WriteParseRoundTrip) {
  Rng rng(5);
  std::vector<OsmNode> nodes;
  for (int i = 1; i <= 200; ++i) {
    nodes.push_back({i, make_geo_point(rng.uniform(-179.0, 179.0), rng.uniform(-80.0, 80.0))});
  }
  std::vector<OsmWay> ways;
  for (int w = 1; w <= 30; ++w) {
    OsmWay way{1000 + w, {}, {}};
    const int n = 2 + static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) way.node_refs.push_back(1 + static_cast<std::int64_t>(rng.below(200)));
    way.tags["highway"] = "service";
    way.tags["note"] = "<\"quoted\" & 'odd'>";
    ways.push_back(way);
  }
  const auto doc = parse_osm(write_osm(nodes, ways));
  EXPECT_EQ(doc.nodes, nodes);
  EXPECT_EQ(doc.ways, ways);
  EXPECT_TRUE(doc.diagnostics.empty());
}

TEST(Osm, SceneExportRoundTripsGeometry) {
  for (const Style s : {Style::A, Style::B, Style::C}) {
    const Scene scene = generate_scene(SceneParams::for_style(s, 21));
    auto doc = parse_osm(export_osm(scene.buildings, scene.roads));
    Diagnostics d;
    EXPECT_EQ(extract_buildings(doc.nodes, doc.ways, d), scene.buildings);
    EXPECT_EQ(extract_roads(doc.nodes, doc.ways, d), scene.roads);
    EXPECT_TRUE(d.empty());
  }
}

TEST(Osm, DiagnosticsFormat) {
  std::ostringstream out;
  write_diagnostics(out, {{"ShortWay", "too short", 42}});
  EXPECT_EQ(out.str(), "ShortWay id=42 too short\n");
}

TEST(Osm, RoadCategories) {
  EXPECT_EQ(road_category_from_highway("motorway"), RoadCategory::motorway);
  EXPECT_EQ(road_category_from_highway("cycleway"), RoadCategory::other);
  EXPECT_EQ(road_category_from_name("service"), RoadCategory::service);
  EXPECT_THROW(road_category_from_name("lane"), InvalidArgument);
}
