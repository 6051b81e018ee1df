#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "osmseg/error.hpp"
#include "osmseg/recipes.hpp"

using namespace osmseg;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("osmseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Tiny budget so a full recipe runs in a couple of seconds.
DeskSettings tiny() {
  DeskSettings s;
  s.variant = Variant::desk_small;
  s.tile_size = 32;
  s.scene_extent_px = 64;
  s.small_tiles = 2;
  s.large_tiles = 4;
  s.val_tiles = 2;
  s.test_tiles = 4;
  s.eval_tiles_per_scene = 2;
  s.train.eval_interval = 10;
  s.base_iterations = 20;
  s.iterations_per_tile = 0;
  s.max_iterations = 20;
  return s;
}

}  // namespace

TEST(Recipes, NamesAndStageGraph) {
  const auto names = recipe_names();
  const std::set<std::string> have(names.begin(), names.end());
  for (const char* n : {"baseline_clean_small", "baseline_pretrained", "gold_standard", "weak_baseline",
                        "complete_substitution", "augmentation", "partial_substitution", "no_adaptation"}) {
    EXPECT_TRUE(have.contains(n)) << n;
  }
  for (const auto& n : names) {
    const auto r = recipe_by_name(n);
    EXPECT_EQ(r.name, n);
    EXPECT_TRUE(r.pretrain || r.train) << n;
    EXPECT_FALSE(r.test.styles.empty());
  }
  EXPECT_THROW(recipe_by_name("nope"), InvalidArgument);
}

TEST(Recipes, ScenarioBindings) {
  const auto gold = recipe_by_name("gold_standard");
  const auto sub = recipe_by_name("complete_substitution");
  EXPECT_EQ(gold.train->labels, LabelSource::clean);
  EXPECT_EQ(sub.train->labels, LabelSource::perturbed);
  EXPECT_EQ(gold.train->volume, sub.train->volume);
  EXPECT_EQ(sub.test.labels, LabelSource::clean);
  EXPECT_EQ(recipe_by_name("complete_substitution_4x").train->volume, Volume::large_x4);
  const auto partial = recipe_by_name("partial_substitution");
  ASSERT_TRUE(partial.pretrain && partial.train);
  EXPECT_EQ(partial.pretrain->labels, LabelSource::perturbed);
  EXPECT_EQ(partial.train->volume, Volume::small);
  const auto none = recipe_by_name("no_adaptation");
  EXPECT_FALSE(none.train);
  EXPECT_EQ(none.pretrain->styles, partial.pretrain->styles);
  EXPECT_NE(none.test.styles, none.pretrain->styles);
}

TEST(Recipes, DeskSizes) {
  const DeskSettings s;
  EXPECT_EQ(s.tiles_for(Volume::small), 3);
  EXPECT_EQ(s.tiles_for(Volume::large), 21);
  EXPECT_EQ(s.tiles_for(Volume::large_x4), 84);
  EXPECT_LE(s.iterations_for(84), s.max_iterations);
}

TEST(Recipes, PatchesAreDisjointAcrossRoles) {
  const DeskSettings s = tiny();
  const DataBinding b{{Style::A, Style::B}, LabelSource::perturbed, Volume::large};
  const auto train = desk_patches(b, SplitTag::train, 4, 1, s);
  const auto val = desk_patches(b, SplitTag::val, 2, 1, s);
  ASSERT_EQ(train.size(), 4u);
  ASSERT_EQ(val.size(), 2u);
  std::set<int> train_sources;
  for (const auto& p : train) {
    EXPECT_EQ(p.split, SplitTag::train);
    train_sources.insert(p.source);
  }
  for (const auto& p : val) EXPECT_FALSE(train_sources.contains(p.source));
  EXPECT_EQ(desk_patches(b, SplitTag::train, 4, 1, s), train);
  EXPECT_NE(desk_patches(b, SplitTag::train, 4, 2, s), train);
}

TEST(Recipes, PerturbedLabelsDifferFromClean) {
  const DeskSettings s = tiny();
  const auto clean = desk_patches({{Style::A}, LabelSource::clean, Volume::small}, SplitTag::train, 4, 3, s);
  const auto noisy = desk_patches({{Style::A}, LabelSource::perturbed, Volume::small}, SplitTag::train, 4, 3, s);
  ASSERT_EQ(clean.size(), noisy.size());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(clean[i].image, noisy[i].image);
    for (std::size_t k = 0; k < clean[i].labels.size(); ++k) differing += clean[i].labels[k] != noisy[i].labels[k];
  }
  EXPECT_GT(differing, 0u);
}

TEST(Recipes, RerunReproducesMetricsBytewise) {
  const auto out = temp_dir("recipe");
  RunOptions o;
  o.out_dir = out / "a";
  o.seed = 4;
  o.settings = tiny();
  const auto r = recipe_by_name("partial_substitution");
  const RecipeResult first = run_recipe(r, o);
  const std::string metrics = slurp(first.directory / "metrics.json");
  // Second run reuses the cached pre-training stage.
  const RecipeResult again = run_recipe(r, o);
  EXPECT_EQ(slurp(again.directory / "metrics.json"), metrics);
  // A fresh cache recomputes every stage.
  o.out_dir = out / "b";
  const RecipeResult fresh = run_recipe(r, o);
  EXPECT_EQ(slurp(fresh.directory / "metrics.json"), metrics);
  EXPECT_EQ(fresh.confusion, first.confusion);
  for (const char* f : {"recipe.json", "metrics.txt", "history.csv", "pretrain_history.csv", "model.json", "model.bin",
                        "test_image.png", "overlay_labels.png", "overlay_road_probability.png"}) {
    EXPECT_TRUE(std::filesystem::exists(first.directory / f)) << f;
  }
  EXPECT_EQ(slurp(again.directory / "pretrain_history.csv"), slurp(fresh.directory / "pretrain_history.csv"));
}

TEST(Recipes, StoredCheckpointReproducesStoredScores) {
  const auto out = temp_dir("recipe_eval");
  RunOptions o;
  o.out_dir = out;
  o.seed = 2;
  o.settings = tiny();
  const auto recipe = recipe_by_name("baseline_clean_small");
  const RecipeResult res = run_recipe(recipe, o);
  const Network model = load_checkpoint(res.directory / "model");
  const auto test = desk_patches(recipe.test, SplitTag::test, o.settings.test_tiles, o.seed, o.settings);
  const ConfusionMatrix cm = evaluate(model, test);
  EXPECT_EQ(cm, confusion_from_json(slurp(res.directory / "metrics.json")));
}

TEST(Recipes, StageFailureNamesTheStage) {
  RunOptions o;
  o.out_dir = temp_dir("recipe_fail");
  o.settings = tiny();
  o.settings.tile_size = 30;  // not a multiple of the network's size divisor
  try {
    run_recipe(recipe_by_name("baseline_clean_small"), o);
    FAIL() << "expected StageFailure";
  } catch (const StageFailure& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'train'"), std::string::npos) << e.what();
  }
}
