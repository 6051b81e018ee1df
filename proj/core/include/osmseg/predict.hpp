#pragma once

#include <vector>

#include "osmseg/dataset.hpp"
#include "osmseg/labelgen.hpp"
#include "osmseg/network.hpp"
#include "osmseg/png_io.hpp"

namespace osmseg {

struct PredictOptions {
  // Side of the square tiles the image is cut into; 0 runs the whole image
  // at once. Each tile is mean-centred on its own, like a training patch.
  // Edge tiles are shifted inwards so they stay inside the image.
  int tile_size = 0;
  // GSD the checkpoint was trained at; 0 skips the check.
  double train_gsd_m = 0.0;
};

struct Prediction {
  LabelRaster labels;  // argmax, ties to the lowest class index
  std::vector<Grid<double>> probabilities;  // one raster per class
  Diagnostics diagnostics;                  // e.g. "GsdMismatch"
};

// Dropout off. Throws SpecMismatch when the network does not map RGB to the
// three label classes.
Prediction predict(const Network& net, const ImageRaster& image, const PredictOptions& options = {});

// RGBA overlays. Label mode: building (255,0,0,128), road (0,0,255,128),
// background transparent. Probability mode: red (1) to blue (0) at alpha 128.
// Both throw ShapeMismatch when the raster does not match the image.
Image8 overlay(const ImageRaster& image, const LabelRaster& labels);
Image8 overlay(const ImageRaster& image, const Grid<double>& probability);

}  // namespace osmseg
