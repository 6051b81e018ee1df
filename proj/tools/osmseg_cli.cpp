// osmseg: command line front end for the segmentation pipeline.

#include <CLI11.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "osmseg/dataset.hpp"
#include "osmseg/error.hpp"
#include "osmseg/geo.hpp"
#include "osmseg/labelgen.hpp"
#include "osmseg/metrics.hpp"
#include "osmseg/network.hpp"
#include "osmseg/osm_ingest.hpp"
#include "osmseg/png_io.hpp"
#include "osmseg/predict.hpp"
#include "osmseg/recipes.hpp"
#include "osmseg/synth.hpp"
#include "osmseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace osmseg;

namespace {

// Accepts a dataset directory as well as its manifest file.
fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoFailure("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoFailure("cannot write " + p.string());
}

// Every command leaves its arguments and seed next to its output.
void record_run(const fs::path& where, const std::string& command, ordered_json args) {
  ordered_json j;
  j["command"] = command;
  j["arguments"] = std::move(args);
  write_file(where, j.dump(2) + "\n");
}

fs::path run_record_for_file(const fs::path& output) { return fs::path(output.string() + ".run.json"); }

struct Geometry {
  std::vector<BuildingPolygon> buildings;
  std::vector<RoadCenterline> roads;
  Diagnostics diagnostics;
};

Geometry load_geometry(const fs::path& osm) {
  auto doc = parse_osm(read_file(osm));
  Geometry g;
  g.diagnostics = std::move(doc.diagnostics);
  g.buildings = extract_buildings(doc.nodes, doc.ways, g.diagnostics);
  g.roads = extract_roads(doc.nodes, doc.ways, g.diagnostics);
  return g;
}

Image8 probability_png(const Grid<double>& p) {
  Image8 img{p.width, p.height, 1, std::vector<std::uint8_t>(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p.cells[i], 0.0, 1.0)));
  }
  return img;
}

Grid<double> probability_from_png(const fs::path& path) {
  const Image8 img = read_png(path, 1);
  Grid<double> g(img.width, img.height, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) g.cells[i] = img.pixels[i] / 255.0;
  return g;
}

std::array<double, 3> parse_fractions(const std::string& text) {
  std::array<double, 3> f{};
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(text);
  if (!(in >> f[0] >> c1 >> f[1] >> c2 >> f[2]) || c1 != ',' || c2 != ',') {
    throw InvalidArgument("--fractions expects train,val,test such as 0.7,0.15,0.15");
  }
  return f;
}

TrainConfig load_train_config(const std::string& path, std::uint64_t seed, long max_iterations) {
  TrainConfig c = path.empty() ? TrainConfig{} : train_config_from_json(read_file(path));
  c.seed = seed;
  if (max_iterations > 0) c.max_iterations = max_iterations;
  c.validate();
  return c;
}

void print_scores(const ClassScores& s) { std::cout << scores_table(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Building and road segmentation from map-derived labels"};
  app.require_subcommand(1);
  std::string stage = "arguments";

  // ingest
  std::string ingest_osm;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Parse OSM XML and report buildings, roads and diagnostics");
  ingest->add_option("--osm", ingest_osm, "OSM XML file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_out, "Write the retained geometry as normalized OSM XML");

  // rasterize
  std::string rast_osm, rast_georef, rast_config, rast_out;
  std::uint64_t rast_seed = 0;
  auto* rasterize = app.add_subcommand("rasterize", "Burn OSM geometry into a label raster");
  rasterize->add_option("--osm", rast_osm, "OSM XML file")->required()->check(CLI::ExistingFile);
  rasterize->add_option("--georef", rast_georef, "Raster georeference JSON")->required()->check(CLI::ExistingFile);
  rasterize->add_option("--label-config", rast_config, "Road widths and noise JSON")->check(CLI::ExistingFile);
  rasterize->add_option("--seed", rast_seed, "Seed for width noise (overrides the config)");
  rasterize->add_option("--out", rast_out, "Label PNG")->required();

  // tile
  std::string tile_image, tile_labels, tile_out, tile_fractions = "0.7,0.15,0.15";
  int tile_size = 64;
  int tile_source = 0;
  std::uint64_t tile_seed = 0;
  auto* tile_cmd = app.add_subcommand("tile", "Cut an image and its labels into patches with a split manifest");
  tile_cmd->add_option("--image", tile_image, "Image PNG with georef sidecar")->required()->check(CLI::ExistingFile);
  tile_cmd->add_option("--labels", tile_labels, "Label PNG with georef sidecar")->required()->check(CLI::ExistingFile);
  tile_cmd->add_option("--size", tile_size, "Patch side in pixels")->check(CLI::PositiveNumber);
  tile_cmd->add_option("--source", tile_source, "Source index recorded on each patch");
  tile_cmd->add_option("--fractions", tile_fractions, "train,val,test fractions");
  tile_cmd->add_option("--seed", tile_seed, "Split seed");
  tile_cmd->add_option("--out", tile_out, "Dataset directory")->required();

  // synth
  std::string synth_style = "A", synth_out;
  std::uint64_t synth_seed = 0;
  int synth_extent = 256;
  auto* synth = app.add_subcommand("synth", "Render a synthetic scene with its OSM geometry and clean labels");
  synth->add_option("--style", synth_style, "Imaging style")->check(CLI::IsMember({"A", "B", "C"}));
  synth->add_option("--seed", synth_seed, "Scene seed");
  synth->add_option("--extent", synth_extent, "Scene side in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train / finetune
  std::string train_dataset, train_variant = "desk", train_config, train_out, ft_checkpoint;
  std::uint64_t train_seed = 0;
  long train_max_it = 0;
  auto add_train_options = [&](CLI::App* sub) {
    sub->add_option("--dataset", train_dataset, "Dataset directory or its manifest.json")->required()->check(CLI::ExistingPath);
    sub->add_option("--config", train_config, "Training config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", train_seed, "Initialization, shuffle and dropout seed");
    sub->add_option("--max-iterations", train_max_it, "Override the iteration budget");
    sub->add_option("--out", train_out, "Run directory")->required();
  };
  auto* train = app.add_subcommand("train", "Train a network from scratch");
  add_train_options(train);
  train->add_option("--variant", train_variant, "Network variant")
      ->check(CLI::IsMember({"fcn_2skip_original", "fcn_3skip_ours", "desk", "desk_small"}));
  auto* finetune = app.add_subcommand("finetune", "Continue training from a checkpoint with fresh optimizer state");
  add_train_options(finetune);
  finetune->add_option("--checkpoint", ft_checkpoint, "Checkpoint stem (without .json/.bin)")->required();

  // predict
  std::string pred_checkpoint, pred_image, pred_out;
  int pred_tile = 0;
  double pred_gsd = 0.0;
  auto* predict_cmd = app.add_subcommand("predict", "Label an image and export per-class probabilities");
  predict_cmd->add_option("--checkpoint", pred_checkpoint, "Checkpoint stem")->required();
  predict_cmd->add_option("--image", pred_image, "Image PNG with georef sidecar")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--tile-size", pred_tile, "Tile side; 0 predicts the whole image at once");
  predict_cmd->add_option("--train-gsd", pred_gsd, "Training GSD in metres, for the mismatch warning");
  predict_cmd->add_option("--out", pred_out, "Output directory")->required();

  // eval
  std::string eval_pred, eval_truth, eval_checkpoint, eval_dataset, eval_split = "test", eval_out;
  auto* eval = app.add_subcommand("eval", "Score predicted labels, or a checkpoint on a dataset split");
  eval->add_option("--predicted", eval_pred, "Predicted label PNG")->check(CLI::ExistingFile);
  eval->add_option("--truth", eval_truth, "Reference label PNG")->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint stem");
  eval->add_option("--dataset", eval_dataset, "Dataset directory or its manifest.json")->check(CLI::ExistingPath);
  eval->add_option("--split", eval_split, "Split to score")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", eval_out, "Metrics JSON");

  // overlay
  std::string ov_image, ov_labels, ov_prob, ov_out;
  auto* overlay_cmd = app.add_subcommand("overlay", "Colour overlay of labels or a probability map");
  overlay_cmd->add_option("--image", ov_image, "Image PNG")->required()->check(CLI::ExistingFile);
  auto* ov_l = overlay_cmd->add_option("--labels", ov_labels, "Label PNG")->check(CLI::ExistingFile);
  auto* ov_p = overlay_cmd->add_option("--probability", ov_prob, "8-bit probability PNG")->check(CLI::ExistingFile);
  ov_l->excludes(ov_p);
  overlay_cmd->add_option("--out", ov_out, "RGBA PNG")->required();

  // recipe
  auto* recipe = app.add_subcommand("recipe", "Named experiment recipes");
  recipe->require_subcommand(1);
  std::string recipe_name, recipe_out = "results", recipe_cache;
  std::vector<std::uint64_t> recipe_seeds{0};
  auto* recipe_run = recipe->add_subcommand("run", "Run one recipe for one or more seeds");
  recipe_run->add_option("name", recipe_name, "Recipe name")->required();
  recipe_run->add_option("--seed", recipe_seeds, "Seed; repeat for several paired runs");
  recipe_run->add_option("--out", recipe_out, "Results root");
  recipe_run->add_option("--cache-dir", recipe_cache, "Cache for shared pre-training stages");
  auto* recipe_list = recipe->add_subcommand("list", "List recipes");

  // params-count
  std::string pc_variant;
  int pc_classes = 3;
  auto* params = app.add_subcommand("params-count", "Count the parameters of a network variant");
  params->add_option("variant", pc_variant, "Network variant")->required();
  params->add_option("--classes", pc_classes, "Number of classes")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      stage = "ingest";
      const Geometry g = load_geometry(ingest_osm);
      write_diagnostics(std::cerr, g.diagnostics);
      std::cout << "buildings " << g.buildings.size() << "\nroads " << g.roads.size() << "\ndiagnostics "
                << g.diagnostics.size() << "\n";
      if (!ingest_out.empty()) {
        write_file(ingest_out, export_osm(g.buildings, g.roads));
        record_run(run_record_for_file(ingest_out), "ingest", {{"osm", ingest_osm}, {"out", ingest_out}});
      }
    } else if (rasterize->parsed()) {
      stage = "rasterize";
      LabelConfig cfg = rast_config.empty() ? LabelConfig{} : load_label_config(rast_config);
      if (rasterize->count("--seed") > 0) cfg.noise.seed = rast_seed;
      const RasterGeoref geo = read_georef(rast_georef);
      const Geometry g = load_geometry(rast_osm);
      Diagnostics diags = g.diagnostics;
      const LabelRaster lr = perturb_labels(g.buildings, g.roads, cfg.widths, cfg.noise, geo, &diags);
      write_diagnostics(std::cerr, diags);
      write_label_raster(rast_out, lr);
      const auto st = label_stats(lr);
      std::cout << "background " << st.counts[0] << "\nbuilding " << st.counts[1] << "\nroad " << st.counts[2]
                << "\n";
      record_run(run_record_for_file(rast_out), "rasterize",
                 {{"osm", rast_osm},
                  {"georef", rast_georef},
                  {"label_config", ordered_json::parse(label_config_to_json(cfg))},
                  {"seed", cfg.noise.seed},
                  {"out", rast_out}});
    } else if (tile_cmd->parsed()) {
      stage = "tile";
      const auto fractions = parse_fractions(tile_fractions);
      const ImageRaster image = read_image_raster(tile_image);
      const LabelRaster labels = read_label_raster(tile_labels);
      auto patches = tile(image, labels, tile_size, tile_source);
      DatasetManifest m = split(patches, fractions, tile_seed);
      write_dataset(tile_out, patches, m);
      std::cout << "patches " << patches.size() << "\n";
      record_run(fs::path(tile_out) / "run.json", "tile",
                 {{"image", tile_image},
                  {"labels", tile_labels},
                  {"size", tile_size},
                  {"source", tile_source},
                  {"fractions", fractions},
                  {"seed", tile_seed}});
    } else if (synth->parsed()) {
      stage = "synth";
      SceneParams p = SceneParams::for_style(style_from_name(synth_style), synth_seed);
      p.extent_px = synth_extent;
      const Scene scene = generate_scene(p);
      const fs::path out(synth_out);
      fs::create_directories(out);
      write_image_raster(out / "image.png", scene.image);
      write_file(out / "scene.osm", export_osm(scene.buildings, scene.roads));
      LabelRaster clean = rasterize_labels(scene.buildings, scene.roads, p.widths, scene.image.georef);
      write_label_raster(out / "labels.png", clean);
      write_georef(out / "georef.json", scene.image.georef);
      std::cout << "buildings " << scene.buildings.size() << "\nroads " << scene.roads.size() << "\n";
      record_run(out / "run.json", "synth", {{"style", synth_style}, {"seed", synth_seed}, {"extent", synth_extent}});
    } else if (train->parsed() || finetune->parsed()) {
      const bool ft = finetune->parsed();
      stage = ft ? "finetune" : "train";
      const TrainConfig cfg = load_train_config(train_config, train_seed, train_max_it);
      const auto patches = read_dataset(manifest_path(train_dataset));
      const fs::path out(train_out);
      fs::create_directories(out);
      ordered_json args{{"dataset", train_dataset},
                        {"config", ordered_json::parse(train_config_to_json(cfg))},
                        {"seed", cfg.seed}};
      TrainOptions opts;
      opts.checkpoint_dir = out;
      opts.on_eval = [](const HistoryRecord& r) {
        std::fprintf(stderr, "it %ld epoch %.2f loss %.4g val_f1 %.4f lr %.3g\n", r.iteration, r.epoch,
                     r.train_loss, r.val_f1, r.lr);
      };
      TrainResult result = [&] {
        if (ft) {
          const Network base = load_checkpoint(ft_checkpoint);
          args["checkpoint"] = ft_checkpoint;
          record_run(out / "run.json", stage, args);
          return fine_tune(base, base.spec(), patches, cfg, opts);
        }
        FcnArchitecture arch = architecture_for(variant_from_name(train_variant));
        arch.dropout_rate = cfg.dropout_rate;
        Network net = Network::build(make_fcn_spec(arch));
        net.initialize(cfg.seed);
        args["variant"] = train_variant;
        record_run(out / "run.json", stage, args);
        return train_loop(std::move(net), patches, cfg, opts);
      }();
      save_checkpoint(out / "model", result.network);
      std::cout << "best_iteration " << result.history.best_iteration << "\ncheckpoint " << (out / "model").string()
                << "\n";
    } else if (predict_cmd->parsed()) {
      stage = "predict";
      const Network net = load_checkpoint(pred_checkpoint);
      const ImageRaster image = read_image_raster(pred_image);
      PredictOptions po;
      po.tile_size = pred_tile;
      po.train_gsd_m = pred_gsd;
      const Prediction pred = predict(net, image, po);
      write_diagnostics(std::cerr, pred.diagnostics);
      const fs::path out(pred_out);
      fs::create_directories(out);
      write_label_raster(out / "labels.png", pred.labels);
      static constexpr std::array<const char*, 3> kNames{"background", "building", "road"};
      for (int c = 0; c < kNumClasses; ++c) {
        write_png(out / (std::string("probability_") + kNames[static_cast<std::size_t>(c)] + ".png"),
                  probability_png(pred.probabilities[static_cast<std::size_t>(c)]));
      }
      record_run(out / "run.json", "predict",
                 {{"checkpoint", pred_checkpoint}, {"image", pred_image}, {"tile_size", pred_tile},
                  {"train_gsd", pred_gsd}});
    } else if (eval->parsed()) {
      stage = "eval";
      ConfusionMatrix cm;
      ordered_json args;
      if (!eval_pred.empty() && !eval_truth.empty()) {
        cm = accumulate(cm, read_label_raster(eval_pred), read_label_raster(eval_truth), nullptr);
        args = {{"predicted", eval_pred}, {"truth", eval_truth}};
      } else if (!eval_checkpoint.empty() && !eval_dataset.empty()) {
        const Network net = load_checkpoint(eval_checkpoint);
        const SplitTag want = split_tag_from_name(eval_split);
        std::vector<Patch> chosen;
        for (auto& p : read_dataset(manifest_path(eval_dataset))) {
          if (p.split == want) chosen.push_back(std::move(p));
        }
        if (chosen.empty()) throw InvalidArgument("no patches in split " + eval_split);
        cm = evaluate(net, chosen);
        args = {{"checkpoint", eval_checkpoint}, {"dataset", eval_dataset}, {"split", eval_split}};
      } else {
        throw InvalidArgument("eval needs --predicted with --truth, or --checkpoint with --dataset");
      }
      const ClassScores s = scores(cm);
      print_scores(s);
      if (!eval_out.empty()) {
        write_file(eval_out, scores_to_json(s, cm));
        record_run(run_record_for_file(eval_out), "eval", args);
      }
    } else if (overlay_cmd->parsed()) {
      stage = "overlay";
      const ImageRaster image = read_image_raster(ov_image);
      Image8 out;
      if (!ov_labels.empty()) {
        out = overlay(image, read_label_raster(ov_labels));
      } else if (!ov_prob.empty()) {
        out = overlay(image, probability_from_png(ov_prob));
      } else {
        throw InvalidArgument("overlay needs --labels or --probability");
      }
      write_png(ov_out, out);
    } else if (recipe->parsed()) {
      stage = "recipe";
      if (recipe_list->parsed()) {
        for (const auto& n : recipe_names()) {
          const auto r = recipe_by_name(n);
          std::printf("%-28s %-5s %s\n", n.c_str(), r.scenario.c_str(), r.description.c_str());
        }
      } else {
        const ExperimentRecipe r = recipe_by_name(recipe_name);
        for (const auto seed : recipe_seeds) {
          RunOptions o;
          o.out_dir = recipe_out;
          o.seed = seed;
          if (!recipe_cache.empty()) o.cache_dir = recipe_cache;
          o.log = [](const std::string& m) { std::cerr << m << "\n"; };
          const RecipeResult res = run_recipe(r, o);
          std::printf("%s seed %llu average F1 %.4f  %s\n", res.name.c_str(), static_cast<unsigned long long>(seed),
                      res.scores.avg_f1, res.directory.string().c_str());
        }
      }
    } else if (params->parsed()) {
      stage = "params-count";
      const Network net = build_network(variant_from_name(pc_variant), pc_classes);
      std::cout << count_parameters(net) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "osmseg: stage '" << stage << "' failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
