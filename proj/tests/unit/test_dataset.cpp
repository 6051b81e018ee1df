#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "osmseg/dataset.hpp"
#include "osmseg/error.hpp"
#include "osmseg/synth.hpp"

using namespace osmseg;

namespace {

struct Pair {
  ImageRaster image;
  LabelRaster labels;
};

Pair scene_pair(std::uint64_t seed, int extent = 256) {
  SceneParams p = SceneParams::for_style(Style::A, seed);
  p.extent_px = extent;
  Scene s = generate_scene(p);
  return {std::move(s.image), std::move(s.coverage)};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("osmseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Tile, RasterOrderAndContent) {
  const auto s = scene_pair(1, 200);
  const auto patches = tile(s.image, s.labels, 64, 7);
  ASSERT_EQ(patches.size(), 9u);  // 200 / 64 = 3 per axis, margins dropped
  EXPECT_EQ(patches[1].origin_x, 64);
  EXPECT_EQ(patches[1].origin_y, 0);
  EXPECT_EQ(patches[3].origin_x, 0);
  EXPECT_EQ(patches[3].origin_y, 64);
  for (const auto& p : patches) {
    EXPECT_EQ(p.source, 7);
    for (int y = 0; y < 64; y += 9) {
      for (int x = 0; x < 64; x += 7) {
        EXPECT_EQ(p.labels[static_cast<std::size_t>(y) * 64 + x],
                  s.labels.classes.at(p.origin_x + x, p.origin_y + y));
        for (int c = 0; c < 3; ++c) {
          EXPECT_EQ(p.image[(static_cast<std::size_t>(c) * 64 + y) * 64 + x],
                    s.image.at(c, p.origin_x + x, p.origin_y + y));
        }
      }
    }
  }
}

TEST(Tile, GeorefMismatchThrows) {
  auto s = scene_pair(1, 128);
  s.labels.georef.gsd_m = 0.5;
  EXPECT_THROW(tile(s.image, s.labels, 64), GeorefMismatch);
}

TEST(Split, FractionsDeterminismAndCoverage) {
  const auto s = scene_pair(2);
  auto a = tile(s.image, s.labels, 32);
  auto b = a;
  const auto ma = split(a, {0.5, 0.25, 0.25}, 9);
  const auto mb = split(b, {0.5, 0.25, 0.25}, 9);
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(a, b);
  EXPECT_EQ(ma.count(SplitTag::train), 32u);
  EXPECT_EQ(ma.count(SplitTag::val), 16u);
  EXPECT_EQ(ma.count(SplitTag::test), 16u);
  std::set<std::pair<int, int>> origins;
  for (const auto& r : ma.records) origins.insert({r.origin_x, r.origin_y});
  EXPECT_EQ(origins.size(), 64u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].split, ma.records[i].split);
}

TEST(Split, Errors) {
  const auto s = scene_pair(3, 128);
  auto p = tile(s.image, s.labels, 64);
  EXPECT_THROW(split(p, {0.5, 0.5, 0.5}, 0), InvalidArgument);
  EXPECT_THROW(split(p, {0.9, 0.05, 0.05}, 0), TooFewPatches);
  EXPECT_NO_THROW(split(p, {1.0, 0.0, 0.0}, 0));
}

TEST(Dataset, CenterPatchZeroMean) {
  const auto s = scene_pair(4, 64);
  const auto p = tile(s.image, s.labels, 64).front();
  const auto c = center_patch(p);
  for (int ch = 0; ch < 3; ++ch) {
    double sum = 0.0;
    for (int i = 0; i < 64 * 64; ++i) sum += c[static_cast<std::size_t>(ch) * 4096 + i];
    EXPECT_NEAR(sum / 4096.0, 0.0, 1e-9);
  }
}

TEST(Dataset, PatchStoreLoadIsBitwise) {
  const auto dir = temp_dir("patch");
  const auto s = scene_pair(5);
  for (const auto& p : tile(s.image, s.labels, 64)) {
    store_patch(dir / "p", p);
    const Patch q = load_patch(dir / "p");
    EXPECT_EQ(q.size, p.size);
    EXPECT_EQ(q.image, p.image);
    EXPECT_EQ(q.labels, p.labels);
  }
}

TEST(Dataset, ImageRasterRoundTrip) {
  const auto dir = temp_dir("image");
  const auto s = scene_pair(6, 96);
  write_image_raster(dir / "i.png", s.image);
  EXPECT_EQ(read_image_raster(dir / "i.png"), s.image);
  ImageRaster bad = s.image;
  bad.channels[0] = 0.5;
  EXPECT_THROW(write_image_raster(dir / "b.png", bad), FormatViolation);
}

TEST(Dataset, ManifestAndDatasetRoundTrip) {
  const auto dir = temp_dir("dataset");
  const auto s = scene_pair(7);
  auto patches = tile(s.image, s.labels, 64, 3);
  DatasetManifest m = split(patches, {0.75, 0.125, 0.125}, 4);
  write_dataset(dir, patches, m);
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
  const auto back = read_dataset(dir / "manifest.json");
  EXPECT_EQ(back, patches);
}

TEST(Dataset, MissingFilesRaiseIoFailure) {
  const auto dir = temp_dir("missing");
  EXPECT_THROW(load_patch(dir / "nope"), IoFailure);
  EXPECT_THROW(read_manifest(dir / "manifest.json"), IoFailure);
}
