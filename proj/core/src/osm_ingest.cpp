#include "osmseg/osm_ingest.hpp"

#include <expat.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace osmseg {

namespace {

template <typename T>
std::optional<T> parse_number(const char* text) {
  if (text == nullptr) return std::nullopt;
  const std::string_view sv(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
  if (ec != std::errc() || ptr != sv.data() + sv.size()) return std::nullopt;
  return value;
}

const char* find_attr(const XML_Char** attrs, std::string_view name) {
  for (int i = 0; attrs[i] != nullptr; i += 2) {
    if (name == attrs[i]) return attrs[i + 1];
  }
  return nullptr;
}

class OsmSaxHandler {
 public:
  void start(const char* name, const XML_Char** attrs) {
    const std::string_view tag(name);
    const int depth = depth_++;
    if (skip_until_ >= 0) return;

    if (depth == 0) {
      if (tag != "osm") {
        root_error_ = "root element is <" + std::string(tag) + ">, expected <osm>";
      }
      return;
    }
    if (depth == 1) {
      if (tag == "node") {
        start_node(attrs);
      } else if (tag == "way") {
        start_way(attrs);
      } else {
        unsupported(tag, depth);
      }
      return;
    }
    if (depth == 2 && in_way_) {
      if (tag == "nd") {
        const auto ref = parse_number<std::int64_t>(find_attr(attrs, "ref"));
        if (ref) {
          way_.node_refs.push_back(*ref);
        } else {
          diag("MissingAttribute", "<nd> without valid ref", way_.id);
          way_broken_ = true;
        }
      } else if (tag == "tag") {
        const char* k = find_attr(attrs, "k");
        const char* v = find_attr(attrs, "v");
        if (k != nullptr && v != nullptr) {
          way_.tags.emplace(k, v);
        } else {
          diag("MissingAttribute", "<tag> without k/v", way_.id);
        }
      } else {
        unsupported(tag, depth);
      }
      return;
    }
    if (depth == 2 && in_node_) {
      // Node tags carry nothing this pipeline uses.
      if (tag != "tag") unsupported(tag, depth);
      return;
    }
    unsupported(tag, depth);
  }

  void end(const char* /*name*/) {
    const int depth = --depth_;
    if (skip_until_ >= 0) {
      if (depth == skip_until_) skip_until_ = -1;
      return;
    }
    if (depth == 1) {
      if (in_way_) finish_way();
      in_node_ = false;
      in_way_ = false;
    }
  }

  OsmDocument take() {
    std::sort(doc_.nodes.begin(), doc_.nodes.end(),
              [](const OsmNode& a, const OsmNode& b) { return a.id < b.id; });
    std::sort(doc_.ways.begin(), doc_.ways.end(),
              [](const OsmWay& a, const OsmWay& b) { return a.id < b.id; });
    return std::move(doc_);
  }

  const std::string& root_error() const { return root_error_; }

 private:
  void start_node(const XML_Char** attrs) {
    in_node_ = true;
    const auto id = parse_number<std::int64_t>(find_attr(attrs, "id"));
    const auto lat = parse_number<double>(find_attr(attrs, "lat"));
    const auto lon = parse_number<double>(find_attr(attrs, "lon"));
    if (!id || !lat || !lon) {
      diag("MissingAttribute", "<node> without valid id/lat/lon; skipped", id.value_or(0));
      return;
    }
    if (!(*lat > -kMaxMercatorLat && *lat < kMaxMercatorLat) || *lon < -180.0 || *lon > 180.0) {
      diag("InvalidCoordinate", "node coordinate outside Web Mercator range; skipped", *id);
      return;
    }
    if (!node_ids_.insert(*id).second) {
      diag("DuplicateId", "duplicate node id; first occurrence kept", *id);
      return;
    }
    doc_.nodes.push_back(OsmNode{*id, make_geo_point(*lon, *lat)});
  }

  void start_way(const XML_Char** attrs) {
    in_way_ = true;
    way_ = OsmWay{};
    way_broken_ = false;
    const auto id = parse_number<std::int64_t>(find_attr(attrs, "id"));
    if (!id) {
      diag("MissingAttribute", "<way> without valid id; skipped", 0);
      way_broken_ = true;
      return;
    }
    way_.id = *id;
  }

  void finish_way() {
    if (way_broken_) return;
    if (way_.node_refs.size() < 2) {
      diag("ShortWay", "way with fewer than 2 node refs; skipped", way_.id);
      return;
    }
    if (!way_ids_.insert(way_.id).second) {
      diag("DuplicateId", "duplicate way id; first occurrence kept", way_.id);
      return;
    }
    doc_.ways.push_back(std::move(way_));
  }

  void unsupported(std::string_view tag, int depth) {
    diag("UnsupportedElement", "unsupported element <" + std::string(tag) + "> skipped", 0);
    skip_until_ = depth;
  }

  void diag(std::string code, std::string message, std::int64_t id) {
    doc_.diagnostics.push_back(Diagnostic{std::move(code), std::move(message), id});
  }

  OsmDocument doc_;
  std::unordered_set<std::int64_t> node_ids_;
  std::unordered_set<std::int64_t> way_ids_;
  OsmWay way_;
  bool way_broken_ = false;
  bool in_node_ = false;
  bool in_way_ = false;
  int depth_ = 0;
  int skip_until_ = -1;
  std::string root_error_;
};

struct ParserDeleter {
  void operator()(XML_Parser p) const { XML_ParserFree(p); }
};

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using NodeIndex = std::unordered_map<std::int64_t, GeoPoint>;

NodeIndex index_nodes(const std::vector<OsmNode>& nodes) {
  NodeIndex index;
  index.reserve(nodes.size());
  for (const auto& n : nodes) index.emplace(n.id, n.location);
  return index;
}

bool resolve(const OsmWay& way, const NodeIndex& index, std::vector<GeoPoint>& out,
             Diagnostics& diagnostics) {
  out.clear();
  out.reserve(way.node_refs.size());
  for (const auto ref : way.node_refs) {
    const auto it = index.find(ref);
    if (it == index.end()) {
      diagnostics.push_back({"DanglingRef",
                             "way references missing node " + std::to_string(ref) + "; rejected",
                             way.id});
      return false;
    }
    out.push_back(it->second);
  }
  return true;
}

double ring_area_deg2(const std::vector<GeoPoint>& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    twice += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
  }
  return 0.5 * twice;
}

template <typename T>
void sort_by_source(std::vector<T>& items) {
  std::sort(items.begin(), items.end(),
            [](const T& a, const T& b) { return a.source_id < b.source_id; });
}

}  // namespace

OsmDocument parse_osm(std::string_view document) {
  std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreate(nullptr));
  if (!parser) throw MalformedDocument("cannot create XML parser");
  OsmSaxHandler handler;
  XML_SetUserData(parser.get(), &handler);
  XML_SetElementHandler(
      parser.get(),
      [](void* ud, const XML_Char* name, const XML_Char** attrs) {
        static_cast<OsmSaxHandler*>(ud)->start(name, attrs);
      },
      [](void* ud, const XML_Char* name) { static_cast<OsmSaxHandler*>(ud)->end(name); });

  if (XML_Parse(parser.get(), document.data(), static_cast<int>(document.size()), 1) ==
      XML_STATUS_ERROR) {
    throw MalformedDocument(std::string(XML_ErrorString(XML_GetErrorCode(parser.get()))) +
                            " at line " +
                            std::to_string(XML_GetCurrentLineNumber(parser.get())) +
                            ", column " +
                            std::to_string(XML_GetCurrentColumnNumber(parser.get())));
  }
  if (!handler.root_error().empty()) throw MalformedDocument(handler.root_error());
  return handler.take();
}

std::string write_osm(const std::vector<OsmNode>& nodes, const std::vector<OsmWay>& ways) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (nodes.empty() && ways.empty()) return out + "<osm version=\"0.6\"/>\n";
  out += "<osm version=\"0.6\" generator=\"osmseg\">\n";
  for (const auto& n : nodes) {
    out += "  <node id=\"" + std::to_string(n.id) + "\" lat=\"" + format_coord(n.location.lat) +
           "\" lon=\"" + format_coord(n.location.lon) + "\"/>\n";
  }
  for (const auto& w : ways) {
    out += "  <way id=\"" + std::to_string(w.id) + "\">\n";
    for (const auto ref : w.node_refs) out += "    <nd ref=\"" + std::to_string(ref) + "\"/>\n";
    for (const auto& [k, v] : w.tags) {
      out += "    <tag k=\"" + xml_escape(k) + "\" v=\"" + xml_escape(v) + "\"/>\n";
    }
    out += "  </way>\n";
  }
  out += "</osm>\n";
  return out;
}

std::string_view to_string(RoadCategory c) {
  switch (c) {
    case RoadCategory::motorway: return "motorway";
    case RoadCategory::trunk: return "trunk";
    case RoadCategory::primary: return "primary";
    case RoadCategory::secondary: return "secondary";
    case RoadCategory::tertiary: return "tertiary";
    case RoadCategory::residential: return "residential";
    case RoadCategory::service: return "service";
    case RoadCategory::other: return "other";
  }
  return "other";
}

RoadCategory road_category_from_name(std::string_view name) {
  for (int i = 0; i < kRoadCategoryCount; ++i) {
    const auto c = static_cast<RoadCategory>(i);
    if (to_string(c) == name) return c;
  }
  throw InvalidArgument("unknown road category '" + std::string(name) + "'");
}

RoadCategory road_category_from_highway(std::string_view highway_value) {
  for (int i = 0; i < kRoadCategoryCount - 1; ++i) {
    const auto c = static_cast<RoadCategory>(i);
    if (to_string(c) == highway_value) return c;
  }
  return RoadCategory::other;
}

std::vector<BuildingPolygon> extract_buildings(const std::vector<OsmNode>& nodes,
                                               const std::vector<OsmWay>& ways,
                                               Diagnostics& diagnostics) {
  const NodeIndex index = index_nodes(nodes);
  std::vector<BuildingPolygon> out;
  std::vector<GeoPoint> ring;
  for (const auto& way : ways) {
    if (!way.tags.contains("building")) continue;
    if (way.node_refs.front() != way.node_refs.back()) {
      diagnostics.push_back({"OpenBuilding", "building way is not closed; rejected", way.id});
      continue;
    }
    if (way.node_refs.size() < 4) {
      diagnostics.push_back({"ShortRing", "building ring has fewer than 4 refs; rejected", way.id});
      continue;
    }
    if (!resolve(way, index, ring, diagnostics)) continue;
    if (ring_area_deg2(ring) == 0.0) {
      diagnostics.push_back({"DegeneratePolygon", "building ring has zero area; rejected", way.id});
      continue;
    }
    out.push_back(BuildingPolygon{ring, way.id});
  }
  sort_by_source(out);
  return out;
}

std::vector<RoadCenterline> extract_roads(const std::vector<OsmNode>& nodes,
                                          const std::vector<OsmWay>& ways,
                                          Diagnostics& diagnostics) {
  const NodeIndex index = index_nodes(nodes);
  std::vector<RoadCenterline> out;
  std::vector<GeoPoint> points;
  for (const auto& way : ways) {
    const auto it = way.tags.find("highway");
    if (it == way.tags.end()) continue;
    if (!resolve(way, index, points, diagnostics)) continue;
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.size() < 2) {
      diagnostics.push_back({"ZeroLengthSegment", "road collapses to a single point; rejected",
                             way.id});
      continue;
    }
    out.push_back(RoadCenterline{points, road_category_from_highway(it->second), way.id});
  }
  sort_by_source(out);
  return out;
}

void write_diagnostics(std::ostream& sink, const Diagnostics& diagnostics) {
  for (const auto& d : diagnostics) {
    sink << d.code << " id=" << d.entity_id << ' ' << d.message << '\n';
  }
}

}  // namespace osmseg
