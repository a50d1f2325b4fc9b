#pragma once

// Experiment protocols: k-per-label low-resource sweeps and leave-one-genre-
// out evaluation. Independent runs may execute on a worker pool; results come
// back in deterministic (model, k, seed) / (model, genre) order.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sevae/train.hpp"

namespace sevae {

struct ProtocolModel {
  ModelSpec spec;
  TrainConfig train;  // seed is overridden per run
};

struct SweepRun {
  ModelKind model = ModelKind::disc;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  EvalReport report;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
  std::string split_provenance;
  std::string train_config;
};

struct SweepAggregate {
  ModelKind model = ModelKind::disc;
  std::size_t k = 0;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
  double std_macro_f1 = 0.0;
};

inline const std::vector<std::size_t>& default_k_grid() {
  static const std::vector<std::size_t> grid = {4, 8, 16, 32, 64, 100, 400, 600, 1000};
  return grid;
}
inline const std::vector<std::uint64_t>& default_seeds() {
  static const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  return seeds;
}

struct SweepOptions {
  std::vector<ProtocolModel> models;
  std::vector<std::size_t> ks = default_k_grid();
  std::vector<std::uint64_t> seeds = default_seeds();
  std::size_t jobs = 1;
  // Called after each finished run, from the worker that ran it, serialized.
  std::function<void(const SweepRun&)> on_run;
};

// For every (model, k, seed): subsample k training clauses per label with
// `seed` (shared across models), train, and evaluate on base.test.
std::vector<SweepRun> run_low_resource_sweep(std::span<const Clause> corpus, const Split& base,
                                             const SweepOptions& options);

// Mean and sample standard deviation (n - 1; 0 for a single run) per (model, k),
// in first-appearance order.
std::vector<SweepAggregate> aggregate_sweep(std::span<const SweepRun> runs);

void write_sweep_tsv(std::ostream& out, std::span<const SweepRun> runs);
void write_aggregate_tsv(std::ostream& out, std::span<const SweepAggregate> rows);
std::string sweep_run_json(const SweepRun& run);

struct CrossGenreRow {
  ModelKind model = ModelKind::disc;
  std::string genre;
  EvalReport report;
  std::string split_provenance;
};

struct CrossGenreOptions {
  std::vector<ProtocolModel> models;
  // Empty means every genre present in the corpus, in known_genres() order.
  std::vector<std::string> genres;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::function<void(const CrossGenreRow&)> on_row;
};

// Throws DataError when fewer than two genres are present.
std::vector<CrossGenreRow> run_cross_genre(std::span<const Clause> corpus, const CrossGenreOptions& options);

void write_cross_genre_tsv(std::ostream& out, std::span<const CrossGenreRow> rows);

// Runs task(i) for i in [0, n) on up to `jobs` threads. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task);

}  // namespace sevae
