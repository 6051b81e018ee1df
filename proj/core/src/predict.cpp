#include "osmseg/predict.hpp"

#include <algorithm>
#include <cmath>

#include "osmseg/error.hpp"

namespace osmseg {

namespace {

std::vector<int> tile_origins(int extent, int tile) {
  std::vector<int> out;
  for (int o = 0; o < extent; o += tile) out.push_back(std::min(o, extent - tile));
  return out;
}

}  // namespace

Prediction predict(const Network& net, const ImageRaster& image, const PredictOptions& options) {
  const auto& spec = net.spec();
  if (spec.input_channels != 3 || spec.num_classes != kNumClasses) {
    throw SpecMismatch("network maps " + std::to_string(spec.input_channels) + " channels to " +
                       std::to_string(spec.num_classes) + " classes");
  }
  const int w = image.width;
  const int h = image.height;
  const int tw = options.tile_size > 0 ? std::min(options.tile_size, w) : w;
  const int th = options.tile_size > 0 ? std::min(options.tile_size, h) : h;

  Prediction out;
  out.labels.georef = image.georef;
  out.labels.classes = Grid<std::uint8_t>(w, h, 0);
  out.probabilities.assign(kNumClasses, Grid<double>(w, h, 0.0));
  if (options.train_gsd_m > 0.0 && std::abs(image.georef.gsd_m / options.train_gsd_m - 1.0) > 0.01) {
    out.diagnostics.push_back({"GsdMismatch",
                               "image GSD " + std::to_string(image.georef.gsd_m) + " m differs from training GSD " +
                                   std::to_string(options.train_gsd_m) + " m",
                               0});
  }

  for (const int oy : tile_origins(h, th)) {
    for (const int ox : tile_origins(w, tw)) {
      Tensor input({3, th, tw});
      for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int y = 0; y < th; ++y) {
          for (int x = 0; x < tw; ++x) mean += image.at(c, ox + x, oy + y);
        }
        mean /= static_cast<double>(th) * tw;
        for (int y = 0; y < th; ++y) {
          for (int x = 0; x < tw; ++x) input.at(c, y, x) = image.at(c, ox + x, oy + y) - mean;
        }
      }
      const auto r = net_forward(net, input, false, 0, false);
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          int best = 0;
          for (int c = 0; c < kNumClasses; ++c) {
            const double p = r.probs.at(c, y, x);
            out.probabilities[static_cast<std::size_t>(c)].at(ox + x, oy + y) = p;
            if (p > r.probs.at(best, y, x)) best = c;
          }
          out.labels.classes.at(ox + x, oy + y) = static_cast<std::uint8_t>(best);
        }
      }
    }
  }
  return out;
}

Image8 overlay(const ImageRaster& image, const LabelRaster& labels) {
  const auto& g = labels.classes;
  if (g.width != image.width || g.height != image.height) throw ShapeMismatch("overlay labels do not match image");
  Image8 out{g.width, g.height, 4, std::vector<std::uint8_t>(g.size() * 4, 0)};
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint8_t* px = &out.pixels[i * 4];
    switch (g.cells[i]) {
      case static_cast<std::uint8_t>(LabelClass::building):
        px[0] = 255;
        px[3] = 128;
        break;
      case static_cast<std::uint8_t>(LabelClass::road):
        px[2] = 255;
        px[3] = 128;
        break;
      case static_cast<std::uint8_t>(LabelClass::background):
        break;
      default:
        throw LabelOutOfRange("class value " + std::to_string(g.cells[i]));
    }
  }
  return out;
}

Image8 overlay(const ImageRaster& image, const Grid<double>& probability) {
  if (probability.width != image.width || probability.height != image.height) {
    throw ShapeMismatch("overlay probabilities do not match image");
  }
  Image8 out{probability.width, probability.height, 4, std::vector<std::uint8_t>(probability.size() * 4, 0)};
  for (std::size_t i = 0; i < probability.size(); ++i) {
    const double p = std::clamp(probability.cells[i], 0.0, 1.0);
    out.pixels[i * 4 + 0] = static_cast<std::uint8_t>(std::lround(255.0 * p));
    out.pixels[i * 4 + 2] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - p)));
    out.pixels[i * 4 + 3] = 128;
  }
  return out;
}

}  // namespace osmseg
