#include "sevae/metrics.hpp"

#include "json.hpp"
#include "sevae/error.hpp"

namespace sevae {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport score_predictions(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size()) throw UsageError("gold and predicted label counts differ");
  if (gold.empty()) throw UsageError("cannot score an empty prediction set");
  EvalReport r;
  r.count = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i];
    const int p = predicted[i];
    if (g < 0 || g >= static_cast<int>(kNumLabels) || p < 0 || p >= static_cast<int>(kNumLabels)) {
      throw UsageError("label code outside [0, 7) at position " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::size_t row = 0;
    std::size_t col = 0;
    for (std::size_t o = 0; o < kNumLabels; ++o) {
      row += r.confusion[c][o];
      col += r.confusion[o][c];
    }
    const std::size_t tp = r.confusion[c][c];
    correct += tp;
    ClassScores& s = r.per_class[c];
    s.support = row;
    s.precision = ratio(tp, col);
    s.recall = ratio(tp, row);
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    f1_sum += s.f1;
  }
  r.accuracy = ratio(correct, r.count);
  r.macro_f1 = f1_sum / static_cast<double>(kNumLabels);
  return r;
}

std::string report_json(const EvalReport& report, int indent) {
  nlohmann::ordered_json j;
  j["count"] = report.count;
  j["accuracy"] = report.accuracy;
  j["macro_f1"] = report.macro_f1;
  j["f1_averaging"] = "macro over all 7 labels";
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    const ClassScores& s = report.per_class[c];
    per.push_back({{"label", label_name(static_cast<int>(c))},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support}});
  }
  j["confusion"] = report.confusion;
  j["spec_hash"] = report.spec_hash;
  j["provenance"] = report.provenance;
  j["seed"] = report.seed;
  return j.dump(indent);
}

}  // namespace sevae
