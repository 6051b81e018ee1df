#include "osmseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/png_io.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

namespace {

std::uint8_t to_byte(double v) {
  if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
    throw FormatViolation("pixel value " + std::to_string(v) + " is not an integer in [0, 255]");
  }
  return static_cast<std::uint8_t>(v);
}

Image8 planar_to_rgb8(std::span<const double> planar, int w, int h) {
  Image8 img{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = to_byte(planar[c * plane + i]);
  }
  return img;
}

std::vector<double> rgb8_to_planar(const Image8& img) {
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) out[c * plane + i] = img.pixels[i * 3 + c];
  }
  return out;
}

}  // namespace

void write_image_raster(const std::filesystem::path& png_path, const ImageRaster& image) {
  write_png(png_path, planar_to_rgb8(image.channels, image.width, image.height));
  write_georef(sidecar_path(png_path), image.georef);
}

ImageRaster read_image_raster(const std::filesystem::path& png_path) {
  const Image8 img = read_png(png_path, 3);
  ImageRaster out;
  out.width = img.width;
  out.height = img.height;
  out.channels = rgb8_to_planar(img);
  out.georef = read_georef(sidecar_path(png_path));
  if (out.georef.width_px != out.width || out.georef.height_px != out.height) {
    throw GeorefMismatch("image " + png_path.string() + " disagrees with its sidecar");
  }
  return out;
}

std::string_view to_string(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag split_tag_from_name(std::string_view name) {
  if (name == "train") return SplitTag::train;
  if (name == "val") return SplitTag::val;
  if (name == "test") return SplitTag::test;
  throw FormatViolation("unknown split tag '" + std::string(name) + "'");
}

std::vector<Patch> tile(const ImageRaster& image, const LabelRaster& labels, int size, int source) {
  if (size < 8) throw InvalidArgument("tile size must be >= 8");
  if (image.georef != labels.georef || image.width != labels.classes.width ||
      image.height != labels.classes.height) {
    throw GeorefMismatch("image and label rasters do not share a georeference");
  }
  std::vector<Patch> out;
  const int nx = image.width / size;
  const int ny = image.height / size;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  const std::size_t s = static_cast<std::size_t>(size);
  for (int ty = 0; ty < ny; ++ty) {
    for (int tx = 0; tx < nx; ++tx) {
      Patch p;
      p.size = size;
      p.origin_x = tx * size;
      p.origin_y = ty * size;
      p.source = source;
      p.image.resize(3 * s * s);
      p.labels.resize(s * s);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          for (int c = 0; c < 3; ++c) {
            p.image[(c * s + y) * s + x] = image.at(c, p.origin_x + x, p.origin_y + y);
          }
          p.labels[y * s + x] = labels.classes.at(p.origin_x + x, p.origin_y + y);
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::size_t DatasetManifest::count(SplitTag t) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [t](const PatchRecord& r) { return r.split == t; }));
}

DatasetManifest split(std::vector<Patch>& patches, const std::array<double, 3>& fractions,
                      std::uint64_t seed) {
  double sum = 0.0;
  for (const double f : fractions) {
    if (!(f >= 0.0)) throw InvalidArgument("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");

  const std::size_t n = patches.size();
  std::array<std::size_t, 3> counts{};
  counts[1] = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  counts[2] = static_cast<std::size_t>(std::llround(fractions[2] * static_cast<double>(n)));
  if (counts[1] + counts[2] > n) throw TooFewPatches("not enough patches for the requested split");
  counts[0] = n - counts[1] - counts[2];
  for (int k = 0; k < 3; ++k) {
    if (fractions[k] > 0.0 && counts[k] == 0) {
      throw TooFewPatches(std::string(to_string(static_cast<SplitTag>(k))) + " split would be empty (" +
                          std::to_string(n) + " patches)");
    }
  }

  // Spatial order: raster scan within each source.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Patch& pa = patches[a];
    const Patch& pb = patches[b];
    return std::tie(pa.source, pa.origin_y, pa.origin_x) < std::tie(pb.source, pb.origin_y, pb.origin_x);
  });

  std::array<SplitTag, 3> block_order{SplitTag::train, SplitTag::val, SplitTag::test};
  Rng rng(seed);
  for (std::size_t i = 2; i > 0; --i) std::swap(block_order[i], block_order[rng.below(i + 1)]);

  std::size_t cursor = 0;
  for (const SplitTag tag : block_order) {
    for (std::size_t k = 0; k < counts[static_cast<std::size_t>(tag)]; ++k) {
      patches[order[cursor++]].split = tag;
    }
  }

  DatasetManifest m;
  m.seed = seed;
  m.fractions = fractions;
  m.tile_size = patches.empty() ? 0 : patches.front().size;
  m.records.reserve(n);
  for (const auto& p : patches) {
    m.records.push_back(PatchRecord{"", "", p.origin_x, p.origin_y, p.source, p.split});
  }
  return m;
}

std::vector<double> center_patch(const Patch& p) {
  std::vector<double> out = p.image;
  const std::size_t plane = static_cast<std::size_t>(p.size) * p.size;
  for (int c = 0; c < 3; ++c) {
    const auto first = out.begin() + static_cast<std::ptrdiff_t>(c * plane);
    const auto last = first + static_cast<std::ptrdiff_t>(plane);
    const double mean = std::accumulate(first, last, 0.0) / static_cast<double>(plane);
    for (auto it = first; it != last; ++it) *it -= mean;
  }
  return out;
}

void store_patch(const std::filesystem::path& stem, const Patch& p) {
  for (const auto c : p.labels) {
    if (c >= kNumClasses) throw FormatViolation("label value " + std::to_string(c) + " not in {0,1,2}");
  }
  const auto base = stem.string();
  write_png(base + ".image.png", planar_to_rgb8(p.image, p.size, p.size));
  write_png(base + ".labels.png", Image8{p.size, p.size, 1, p.labels});
}

Patch load_patch(const std::filesystem::path& image_png, const std::filesystem::path& labels_png) {
  const Image8 img = read_png(image_png, 3);
  Image8 lab = read_png(labels_png, 1);
  if (img.width != img.height || lab.width != img.width || lab.height != img.height) {
    throw FormatViolation("patch image/labels are not matching squares");
  }
  for (const auto c : lab.pixels) {
    if (c >= kNumClasses) throw FormatViolation("label value " + std::to_string(c) + " not in {0,1,2}");
  }
  Patch p;
  p.size = img.width;
  p.image = rgb8_to_planar(img);
  p.labels = std::move(lab.pixels);
  return p;
}

Patch load_patch(const std::filesystem::path& stem) {
  const auto base = stem.string();
  return load_patch(base + ".image.png", base + ".labels.png");
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["tile_size"] = m.tile_size;
  j["fractions"] = m.fractions;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : m.records) {
    j["records"].push_back({{"image", r.image_path},
                            {"labels", r.labels_path},
                            {"origin", {r.origin_x, r.origin_y}},
                            {"source", r.source},
                            {"split", std::string(to_string(r.split))}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tile_size = j.at("tile_size").get<int>();
    m.fractions = j.at("fractions").get<std::array<double, 3>>();
    for (const auto& r : j.at("records")) {
      m.records.push_back(PatchRecord{r.at("image").get<std::string>(),
                                      r.at("labels").get<std::string>(),
                                      r.at("origin").at(0).get<int>(),
                                      r.at("origin").at(1).get<int>(),
                                      r.value("source", 0),
                                      split_tag_from_name(r.at("split").get<std::string>())});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  detail::write_text_file(path, manifest_to_json(m));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  return manifest_from_json(detail::read_text_file(path));
}

void write_dataset(const std::filesystem::path& dir, std::span<const Patch> patches,
                   DatasetManifest& manifest) {
  if (manifest.records.size() != patches.size()) {
    throw InvalidArgument("manifest and patch list differ in length");
  }
  std::filesystem::create_directories(dir / "patches");
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    const std::string stem = "patches/s" + std::to_string(p.source) + "_x" +
                             std::to_string(p.origin_x) + "_y" + std::to_string(p.origin_y);
    store_patch(dir / stem, p);
    manifest.records[i].image_path = stem + ".image.png";
    manifest.records[i].labels_path = stem + ".labels.png";
  }
  write_manifest(dir / "manifest.json", manifest);
}

std::vector<Patch> read_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  std::vector<Patch> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    Patch p = load_patch(dir / r.image_path, dir / r.labels_path);
    p.origin_x = r.origin_x;
    p.origin_y = r.origin_y;
    p.source = r.source;
    p.split = r.split;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace osmseg
