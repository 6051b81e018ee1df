#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "osmseg/dataset.hpp"
#include "osmseg/metrics.hpp"
#include "osmseg/network.hpp"
#include "osmseg/synth.hpp"
#include "osmseg/train.hpp"

namespace osmseg {

enum class LabelSource { clean, perturbed };

std::string_view to_string(LabelSource s);

// Training-set sizes; the tile counts live in DeskSettings.
enum class Volume { small, large, large_x2, large_x4 };

std::string_view to_string(Volume v);

// Which synthetic tiles a stage sees. Tiles are drawn in raster order from
// consecutive scenes, split evenly over the listed styles. The volume is
// ignored for test bindings.
struct DataBinding {
  std::vector<Style> styles;
  LabelSource labels = LabelSource::clean;
  Volume volume = Volume::small;

  bool operator==(const DataBinding&) const = default;
};

struct ExperimentRecipe {
  std::string name;
  std::string scenario;  // experiment tag such as "Ia" or "VI"
  std::string description;
  std::optional<DataBinding> pretrain;
  // Absent: the pre-trained model is evaluated as is.
  std::optional<DataBinding> train;
  DataBinding test;
};

std::vector<std::string> recipe_names();
// Throws InvalidArgument for unknown names.
ExperimentRecipe recipe_by_name(const std::string& name);

// Sizes and budgets shared by all desk-scale recipes.
struct DeskSettings {
  int tile_size = 64;
  int scene_extent_px = 256;
  int small_tiles = 3;
  int large_tiles = 21;
  int val_tiles = 16;
  int test_tiles = 64;
  // Validation and test tiles are spread over several scenes.
  int eval_tiles_per_scene = 8;
  // Label noise: per-scene misregistration drawn uniformly from
  // [-max_shift_px, max_shift_px] on each axis, plus a per-road width error.
  int max_shift_px = 1;
  WidthErrorModel width_error{WidthErrorModel::Kind::uniform, 5.5};
  Variant variant = Variant::desk;
  // max_iterations and seed are set per stage.
  TrainConfig train = [] {
    TrainConfig c;
    c.eval_interval = 50;
    return c;
  }();
  long base_iterations = 1000;
  long iterations_per_tile = 40;
  long max_iterations = 3000;

  int tiles_for(Volume v) const;
  long iterations_for(int tiles) const;
  std::string to_json() const;
};

// Patches of one binding. `role` selects disjoint scene ranges ("train",
// "val", "test"); all patches are tagged with the matching split.
std::vector<Patch> desk_patches(const DataBinding& binding, SplitTag role, int tiles, std::uint64_t seed,
                                const DeskSettings& settings);

// Full scene of `style` used for overlays, with clean labels.
Scene desk_scene(Style style, SplitTag role, int index, std::uint64_t seed, const DeskSettings& settings);

struct RunOptions {
  std::filesystem::path out_dir = "results";
  std::uint64_t seed = 0;
  DeskSettings settings;
  // Cached pre-training stages, keyed by a hash of their definition.
  // Empty: `<out_dir>/stages`.
  std::filesystem::path cache_dir;
  std::function<void(const std::string&)> log;
};

struct RecipeResult {
  std::string name;
  std::uint64_t seed = 0;
  ConfusionMatrix confusion;
  ClassScores scores;
  TrainHistory history;
  std::filesystem::path directory;
};

// Runs the stage DAG (pre-train, train or fine-tune, evaluate, overlay) and
// writes `<out_dir>/<name>/seed-<seed>/` with recipe.json, metrics.json,
// metrics.txt, history CSVs, the model checkpoint and overlays. Failures are
// rethrown as StageFailure naming the stage.
RecipeResult run_recipe(const ExperimentRecipe& recipe, const RunOptions& options);

}  // namespace osmseg
