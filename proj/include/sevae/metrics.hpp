#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "sevae/text.hpp"

namespace sevae {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

using Confusion = std::array<std::array<std::size_t, kNumLabels>, kNumLabels>;

// Accuracy, macro-F1 over all 7 labels (absent labels score 0), per-label
// scores, and a confusion matrix with gold rows and predicted columns.
struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassScores, kNumLabels> per_class{};
  Confusion confusion{};

  std::string spec_hash;
  std::string provenance;
  std::uint64_t seed = 0;
};

// Label codes in [0, 7). Throws UsageError on length mismatch, empty input,
// or an out-of-range code.
EvalReport score_predictions(std::span<const int> gold, std::span<const int> predicted);

std::string report_json(const EvalReport& report, int indent = 2);

}  // namespace sevae
