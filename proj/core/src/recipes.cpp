#include "osmseg/recipes.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/error.hpp"
#include "osmseg/osm_ingest.hpp"
#include "osmseg/png_io.hpp"
#include "osmseg/predict.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

std::string_view to_string(LabelSource s) { return s == LabelSource::clean ? "clean" : "perturbed"; }

std::string_view to_string(Volume v) {
  switch (v) {
    case Volume::small: return "small";
    case Volume::large: return "large";
    case Volume::large_x2: return "large_x2";
    case Volume::large_x4: return "large_x4";
  }
  return "small";
}

namespace {

DataBinding bind(std::vector<Style> styles, LabelSource labels, Volume volume = Volume::small) {
  return DataBinding{std::move(styles), labels, volume};
}

std::vector<ExperimentRecipe> all_recipes() {
  using enum LabelSource;
  const Style A = Style::A, B = Style::B, C = Style::C;
  std::vector<ExperimentRecipe> r;
  r.push_back({"baseline_clean_small", "Ia", "target-domain images with clean labels, small set",
               std::nullopt, bind({B}, clean, Volume::small), bind({B}, clean)});
  r.push_back({"baseline_pretrained", "Ib",
               "pre-train on an unrelated domain with clean labels, fine-tune on the small clean set",
               bind({C}, clean, Volume::large_x4), bind({B}, clean, Volume::small), bind({B}, clean)});
  r.push_back({"gold_standard", "II", "target-domain images with clean labels, large set", std::nullopt,
               bind({B}, clean, Volume::large), bind({B}, clean)});
  r.push_back({"weak_baseline", "IIIa", "source-domain images with map labels, evaluated on map labels",
               std::nullopt, bind({A}, perturbed, Volume::large), bind({A}, perturbed)});
  r.push_back({"weak_baseline_clean_test", "IIIb",
               "source-domain images with map labels, evaluated on clean labels", std::nullopt,
               bind({A}, perturbed, Volume::large), bind({A}, clean)});
  r.push_back({"complete_substitution", "IV", "target-domain images with map labels instead of clean labels",
               std::nullopt, bind({B}, perturbed, Volume::large), bind({B}, clean)});
  r.push_back({"complete_substitution_4x", "IV",
               "complete substitution with four times the training volume", std::nullopt,
               bind({B}, perturbed, Volume::large_x4), bind({B}, clean)});
  r.push_back({"augmentation", "V", "pre-train on source-domain map labels, fine-tune on the large clean set",
               bind({A}, perturbed, Volume::large_x4), bind({B}, clean, Volume::large), bind({B}, clean)});
  r.push_back({"partial_substitution", "VI",
               "pre-train on source-domain map labels, fine-tune on the small clean set",
               bind({A}, perturbed, Volume::large_x4), bind({B}, clean, Volume::small), bind({B}, clean)});
  r.push_back({"no_adaptation", "VI-0", "source-domain model applied to the target domain without fine-tuning",
               bind({A}, perturbed, Volume::large_x4), std::nullopt, bind({B}, clean)});
  r.push_back({"generalization", "gen", "train on two domains with map labels, evaluate on a third",
               std::nullopt, bind({A, B}, perturbed, Volume::large_x2), bind({C}, clean)});
  return r;
}

nlohmann::ordered_json binding_json(const DataBinding& b, const DeskSettings& s, bool test) {
  nlohmann::ordered_json j;
  j["styles"] = nlohmann::ordered_json::array();
  for (const auto st : b.styles) j["styles"].push_back(std::string(to_string(st)));
  j["labels"] = std::string(to_string(b.labels));
  if (test) {
    j["tiles"] = s.test_tiles;
  } else {
    j["volume"] = std::string(to_string(b.volume));
    j["tiles"] = s.tiles_for(b.volume);
  }
  return j;
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename F>
auto run_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure("stage '" + stage + "': " + e.what());
  }
}

int role_offset(SplitTag role) {
  switch (role) {
    case SplitTag::train: return 0;
    case SplitTag::val: return 1000;
    case SplitTag::test: return 2000;
  }
  return 0;
}

std::uint64_t scene_seed(Style style, SplitTag role, int index, std::uint64_t seed) {
  return mix_seed(mix_seed(seed, 1 + static_cast<std::uint64_t>(style)),
                  static_cast<std::uint64_t>(role_offset(role) + index));
}

LabelRaster scene_labels(const Scene& scene, LabelSource source, std::uint64_t sseed, const DeskSettings& s) {
  // Geometry goes through the OSM document format like real map data.
  const OsmDocument doc = parse_osm(export_osm(scene.buildings, scene.roads));
  Diagnostics diag;
  const auto buildings = extract_buildings(doc.nodes, doc.ways, diag);
  const auto roads = extract_roads(doc.nodes, doc.ways, diag);
  const auto widths = RoadWidthTable::defaults();
  if (source == LabelSource::clean) return rasterize_labels(buildings, roads, widths, scene.image.georef);
  Rng rng(mix_seed(sseed, 0x401));
  NoiseParams noise;
  noise.shift_dx = static_cast<double>(rng.between(-s.max_shift_px, s.max_shift_px));
  noise.shift_dy = static_cast<double>(rng.between(-s.max_shift_px, s.max_shift_px));
  noise.width_error = s.width_error;
  noise.seed = mix_seed(sseed, 0x402);
  return perturb_labels(buildings, roads, widths, noise, scene.image.georef);
}

}  // namespace

std::vector<std::string> recipe_names() {
  std::vector<std::string> out;
  for (const auto& r : all_recipes()) out.push_back(r.name);
  return out;
}

ExperimentRecipe recipe_by_name(const std::string& name) {
  for (auto& r : all_recipes()) {
    if (r.name == name) return r;
  }
  throw InvalidArgument("unknown recipe '" + name + "'");
}

int DeskSettings::tiles_for(Volume v) const {
  switch (v) {
    case Volume::small: return small_tiles;
    case Volume::large: return large_tiles;
    case Volume::large_x2: return 2 * large_tiles;
    case Volume::large_x4: return 4 * large_tiles;
  }
  return small_tiles;
}

long DeskSettings::iterations_for(int tiles) const {
  return std::min(max_iterations, base_iterations + iterations_per_tile * tiles);
}

std::string DeskSettings::to_json() const {
  nlohmann::ordered_json j;
  j["tile_size"] = tile_size;
  j["scene_extent_px"] = scene_extent_px;
  j["small_tiles"] = small_tiles;
  j["large_tiles"] = large_tiles;
  j["val_tiles"] = val_tiles;
  j["test_tiles"] = test_tiles;
  j["eval_tiles_per_scene"] = eval_tiles_per_scene;
  j["max_shift_px"] = max_shift_px;
  j["width_error"] = {{"kind", width_error.kind == WidthErrorModel::Kind::none      ? "none"
                               : width_error.kind == WidthErrorModel::Kind::uniform ? "uniform"
                                                                                    : "normal"},
                      {"spread_px", width_error.spread_px}};
  j["variant"] = std::string(to_string(variant));
  j["train"] = nlohmann::ordered_json::parse(train_config_to_json(train));
  j["base_iterations"] = base_iterations;
  j["iterations_per_tile"] = iterations_per_tile;
  j["max_iterations"] = max_iterations;
  return j.dump(2) + "\n";
}

Scene desk_scene(Style style, SplitTag role, int index, std::uint64_t seed, const DeskSettings& settings) {
  SceneParams p = SceneParams::for_style(style, scene_seed(style, role, index, seed));
  p.extent_px = settings.scene_extent_px;
  return generate_scene(p);
}

std::vector<Patch> desk_patches(const DataBinding& binding, SplitTag role, int tiles, std::uint64_t seed,
                                const DeskSettings& settings) {
  if (binding.styles.empty()) throw InvalidArgument("binding lists no styles");
  if (settings.scene_extent_px % settings.tile_size != 0) {
    throw InvalidArgument("scene extent must be a multiple of the tile size");
  }
  std::vector<Patch> out;
  const int n_styles = static_cast<int>(binding.styles.size());
  for (int si = 0; si < n_styles; ++si) {
    const Style style = binding.styles[static_cast<std::size_t>(si)];
    int want = tiles / n_styles + (si < tiles % n_styles ? 1 : 0);
    for (int scene_index = 0; want > 0; ++scene_index) {
      const std::uint64_t sseed = scene_seed(style, role, scene_index, seed);
      const Scene scene = desk_scene(style, role, scene_index, seed, settings);
      const LabelRaster labels = scene_labels(scene, binding.labels, sseed, settings);
      auto patches = tile(scene.image, labels, settings.tile_size,
                          static_cast<int>(style) * 10000 + static_cast<int>(role) * 1000 + scene_index);
      const int per_scene = role == SplitTag::train ? static_cast<int>(patches.size()) : settings.eval_tiles_per_scene;
      int taken = 0;
      for (auto& p : patches) {
        if (want == 0 || taken++ == per_scene) break;
        p.split = role;
        out.push_back(std::move(p));
        --want;
      }
    }
  }
  return out;
}

RecipeResult run_recipe(const ExperimentRecipe& recipe, const RunOptions& options) {
  const DeskSettings& s = options.settings;
  const std::uint64_t seed = options.seed;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(recipe.name + " seed " + std::to_string(seed) + ": " + msg);
  };
  RecipeResult result;
  result.name = recipe.name;
  result.seed = seed;
  result.directory = options.out_dir / recipe.name / ("seed-" + std::to_string(seed));
  const auto cache_dir = options.cache_dir.empty() ? options.out_dir / "stages" : options.cache_dir;
  if (!recipe.pretrain && !recipe.train) throw InvalidArgument("recipe '" + recipe.name + "' has no training stage");

  auto arch = architecture_for(s.variant);
  arch.dropout_rate = s.train.dropout_rate;
  const NetworkSpec spec = make_fcn_spec(arch);

  nlohmann::ordered_json record;
  record["recipe"] = recipe.name;
  record["scenario"] = recipe.scenario;
  record["description"] = recipe.description;
  record["seed"] = seed;
  record["spec_hash"] = spec_hash(spec);
  if (recipe.pretrain) record["pretrain"] = binding_json(*recipe.pretrain, s, false);
  if (recipe.train) record["train"] = binding_json(*recipe.train, s, false);
  record["test"] = binding_json(recipe.test, s, true);
  record["settings"] = nlohmann::ordered_json::parse(s.to_json());
  detail::write_text_file(result.directory / "recipe.json", record.dump(2) + "\n");

  auto train_stage = [&](const DataBinding& binding, const Network* start, const std::string& stage) {
    const int tiles = s.tiles_for(binding.volume);
    auto patches = desk_patches(binding, SplitTag::train, tiles, seed, s);
    auto val = desk_patches(binding, SplitTag::val, s.val_tiles, seed, s);
    patches.insert(patches.end(), std::make_move_iterator(val.begin()), std::make_move_iterator(val.end()));
    TrainConfig cfg = s.train;
    cfg.seed = seed;
    cfg.max_iterations = s.iterations_for(tiles);
    log(stage + ": " + std::to_string(tiles) + " tiles, " + std::to_string(cfg.max_iterations) + " iterations");
    if (start) return fine_tune(*start, spec, patches, cfg);
    Network net = Network::build(spec);
    net.initialize(seed);
    return train_loop(std::move(net), patches, cfg);
  };

  std::optional<Network> pretrained;
  if (recipe.pretrain) {
    pretrained = run_stage("pretrain", [&] {
      nlohmann::ordered_json key;
      key["binding"] = binding_json(*recipe.pretrain, s, false);
      key["settings"] = nlohmann::ordered_json::parse(s.to_json());
      key["spec_hash"] = spec_hash(spec);
      key["seed"] = seed;
      const auto dir = cache_dir / fnv_hex(key.dump());
      if (std::filesystem::exists(dir / "best.json") && std::filesystem::exists(dir / "history.csv")) {
        log("pretrain: cached in " + dir.string());
        detail::write_text_file(result.directory / "pretrain_history.csv",
                                detail::read_text_file(dir / "history.csv"));
        return load_checkpoint(dir / "best");
      }
      TrainResult r = train_stage(*recipe.pretrain, nullptr, "pretrain");
      detail::write_text_file(dir / "stage.json", key.dump(2) + "\n");
      save_checkpoint(dir / "best", r.network);
      detail::write_text_file(dir / "history.csv", history_to_csv(r.history));
      detail::write_text_file(result.directory / "pretrain_history.csv", history_to_csv(r.history));
      return r.network;
    });
  }

  Network model = run_stage("train", [&] {
    if (!recipe.train) return *pretrained;
    TrainResult r = train_stage(*recipe.train, pretrained ? &*pretrained : nullptr,
                                pretrained ? "fine-tune" : "train");
    result.history = r.history;
    detail::write_text_file(result.directory / "history.csv", history_to_csv(r.history));
    return r.network;
  });
  run_stage("checkpoint", [&] { save_checkpoint(result.directory / "model", model); });

  run_stage("evaluate", [&] {
    const auto test = desk_patches(recipe.test, SplitTag::test, s.test_tiles, seed, s);
    result.confusion = evaluate(model, test);
    result.scores = scores(result.confusion);
    detail::write_text_file(result.directory / "metrics.json", scores_to_json(result.scores, result.confusion));
    detail::write_text_file(result.directory / "metrics.txt", scores_table(result.scores));
    log("average F1 " + std::to_string(result.scores.avg_f1));
  });

  run_stage("overlay", [&] {
    const Style style = recipe.test.styles.front();
    const Scene scene = desk_scene(style, SplitTag::test, 0, seed, s);
    PredictOptions po;
    po.tile_size = s.tile_size;
    po.train_gsd_m = scene.image.georef.gsd_m;
    const Prediction pred = predict(model, scene.image, po);
    write_image_raster(result.directory / "test_image.png", scene.image);
    write_png(result.directory / "overlay_labels.png", overlay(scene.image, pred.labels));
    write_png(result.directory / "overlay_road_probability.png",
              overlay(scene.image, pred.probabilities[static_cast<std::size_t>(LabelClass::road)]));
  });
  return result;
}

}  // namespace osmseg
