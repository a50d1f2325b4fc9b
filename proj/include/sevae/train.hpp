#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sevae/metrics.hpp"
#include "sevae/model.hpp"
#include "sevae/optim.hpp"

namespace sevae {

struct TrainConfig {
  AdamConfig adam;
  // Clauses per optimizer step; gradients are accumulated and averaged.
  std::size_t logical_batch = 32;
  std::size_t max_epochs = 50;
  // Epochs without a validation macro-F1 improvement before stopping.
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  // Vocabulary threshold; 0 picks 1 for small training sets, else 2.
  int min_count = 0;
  // Stop as soon as validation accuracy reaches this value (> 1 disables).
  double stop_at_accuracy = 2.0;

  std::map<std::string, std::string> to_kv() const;
  // Applies recognised keys onto `base`; unknown keys throw UsageError.
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv, TrainConfig base);
  void validate() const;
};

// lr 1e-3 for recurrent baselines, 5e-4 for the variational models.
TrainConfig default_train_config(ModelKind kind);
std::vector<std::string> train_config_keys();

// Training/prediction units. Clause-level models get one clause per unit;
// paragraph-level models get maximal runs of consecutive clause_idx within a
// (doc_id, par_id) group.
struct Unit {
  std::vector<std::size_t> indices;
  std::vector<Example> examples;
};

std::vector<Unit> make_units(std::span<const Clause> corpus, std::span<const std::size_t> indices, const Vocab& vocab,
                             bool paragraph_level);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double loss = 0.0;
  double classification = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double beta = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct TrainedModel {
  std::unique_ptr<Model> model;
  Vocab vocab;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = -1.0;
};

// Builds the vocabulary from split.train, fits the model, and returns the
// parameters of the best validation epoch. Each epoch is appended to `jsonl`
// when given. Throws DataError on an empty training split.
TrainedModel train(const ModelSpec& spec, std::span<const Clause> corpus, const Split& split, const TrainConfig& cfg,
                   std::ostream* jsonl = nullptr);

int argmax_label(const LabelProbs& probs);
// Predicted label code per index, in the order of `indices`.
std::vector<int> predict_labels(const Model& model, const Vocab& vocab, std::span<const Clause> corpus,
                                std::span<const std::size_t> indices);
EvalReport evaluate(const Model& model, const Vocab& vocab, std::span<const Clause> corpus,
                    std::span<const std::size_t> indices);

std::string epoch_json(const EpochRecord& record);

}  // namespace sevae
