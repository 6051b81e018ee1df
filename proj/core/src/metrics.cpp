#include "osmseg/metrics.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "osmseg/error.hpp"

namespace osmseg {

namespace {

constexpr std::array<const char*, kNumClasses> kClassNames{"background", "building", "road"};

double ratio(std::uint64_t num, std::uint64_t den, bool& degenerate) {
  degenerate = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) {
    for (const auto c : row) n += c;
  }
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (int t = 0; t < kNumClasses; ++t) {
    for (int p = 0; p < kNumClasses; ++p) counts[t][p] += other.counts[t][p];
  }
  return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const std::uint8_t> predicted,
                           std::span<const std::uint8_t> truth,
                           std::optional<std::span<const std::uint8_t>> mask) {
  if (predicted.size() != truth.size() || (mask && mask->size() != truth.size())) {
    throw ShapeMismatch("predicted, truth and mask rasters differ in size");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    const auto t = truth[i];
    const auto p = predicted[i];
    if (t >= kNumClasses || p >= kNumClasses) {
      throw LabelOutOfRange("class value " + std::to_string(t >= kNumClasses ? t : p) + " at pixel " +
                            std::to_string(i));
    }
    ++cm.counts[t][p];
  }
  return cm;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelRaster& predicted, const LabelRaster& truth,
                           const Mask* mask) {
  const auto& a = predicted.classes;
  const auto& b = truth.classes;
  if (a.width != b.width || a.height != b.height ||
      (mask && (mask->width != b.width || mask->height != b.height))) {
    throw ShapeMismatch("rasters differ in dimensions");
  }
  if (mask) return accumulate(cm, a.cells, b.cells, std::span<const std::uint8_t>(mask->cells));
  return accumulate(cm, a.cells, b.cells);
}

bool ClassScores::degenerate() const {
  for (int k = 0; k < kNumClasses; ++k) {
    if (precision_degenerate[k] || recall_degenerate[k] || f1_degenerate[k]) return true;
  }
  return false;
}

ClassScores scores(const ConfusionMatrix& cm) {
  ClassScores s;
  std::uint64_t diagonal = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    std::uint64_t col = 0;
    std::uint64_t row = 0;
    for (int j = 0; j < kNumClasses; ++j) {
      col += cm.counts[j][k];
      row += cm.counts[k][j];
    }
    const std::uint64_t tp = cm.counts[k][k];
    diagonal += tp;
    bool flag = false;
    s.precision[k] = ratio(tp, col, flag);
    s.precision_degenerate[k] = flag;
    s.recall[k] = ratio(tp, row, flag);
    s.recall_degenerate[k] = flag;
    const double pr = s.precision[k] + s.recall[k];
    s.f1_degenerate[k] = pr == 0.0;
    s.f1[k] = pr == 0.0 ? 0.0 : 2.0 * s.precision[k] * s.recall[k] / pr;
    s.avg_precision += s.precision[k];
    s.avg_recall += s.recall[k];
    s.avg_f1 += s.f1[k];
  }
  s.avg_precision /= kNumClasses;
  s.avg_recall /= kNumClasses;
  s.avg_f1 /= kNumClasses;
  bool unused = false;
  s.accuracy = ratio(diagonal, cm.total(), unused);
  return s;
}

std::string scores_to_json(const ClassScores& s, const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  j["classes"] = nlohmann::ordered_json::object();
  for (int k = 0; k < kNumClasses; ++k) {
    j["classes"][kClassNames[k]] = {{"precision", s.precision[k]},
                                    {"recall", s.recall[k]},
                                    {"f1", s.f1[k]},
                                    {"degenerate", s.f1_degenerate[k] || s.precision_degenerate[k] ||
                                                       s.recall_degenerate[k]}};
  }
  j["average"] = {{"precision", s.avg_precision}, {"recall", s.avg_recall}, {"f1", s.avg_f1}};
  j["accuracy"] = s.accuracy;
  j["confusion"] = cm.counts;
  return j.dump(2) + "\n";
}

std::string scores_table(const ClassScores& s) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s\n", "class", "precision", "recall", "f1");
  out += line;
  for (int k = 0; k < kNumClasses; ++k) {
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f%s\n", kClassNames[k], s.precision[k],
                  s.recall[k], s.f1[k], s.f1_degenerate[k] ? " *" : "");
    out += line;
  }
  std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f\n", "average", s.avg_precision, s.avg_recall,
                s.avg_f1);
  out += line;
  return out;
}

ConfusionMatrix confusion_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ConfusionMatrix cm;
    cm.counts = j.at("confusion").get<decltype(cm.counts)>();
    return cm;
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("metrics: ") + e.what());
  }
}

}  // namespace osmseg
