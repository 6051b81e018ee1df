#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "osmseg/labelgen.hpp"

namespace osmseg {

// counts[truth][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

// Adds one count per pixel; pixels whose mask value is 0 are skipped.
// Throws ShapeMismatch on length mismatch and LabelOutOfRange on a class
// outside {0,1,2}.
ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const std::uint8_t> predicted,
                           std::span<const std::uint8_t> truth,
                           std::optional<std::span<const std::uint8_t>> mask = std::nullopt);

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelRaster& predicted, const LabelRaster& truth,
                           const Mask* mask = nullptr);

// Per-class scores; a zero denominator gives 0 and sets the matching flag.
struct ClassScores {
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  std::array<bool, kNumClasses> precision_degenerate{};
  std::array<bool, kNumClasses> recall_degenerate{};
  std::array<bool, kNumClasses> f1_degenerate{};
  double avg_precision = 0.0;
  double avg_recall = 0.0;
  double avg_f1 = 0.0;  // unweighted mean over the classes
  double accuracy = 0.0;

  bool degenerate() const;
};

ClassScores scores(const ConfusionMatrix& cm);

std::string scores_to_json(const ClassScores& s, const ConfusionMatrix& cm);
// Aligned plain-text table: one row per class plus the average.
std::string scores_table(const ClassScores& s);

ConfusionMatrix confusion_from_json(const std::string& text);

}  // namespace osmseg
