#include "sevae/protocols.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "json.hpp"
#include "sevae/error.hpp"

namespace sevae {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        while (!failed.load()) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            task(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<SweepRun> run_low_resource_sweep(std::span<const Clause> corpus, const Split& base,
                                             const SweepOptions& options) {
  if (options.models.empty() || options.ks.empty() || options.seeds.empty()) {
    throw UsageError("sweep needs at least one model, one k, and one seed");
  }
  // Fail before any training when a k is infeasible.
  for (std::size_t k : options.ks) subsample_per_label(corpus, base, k, options.seeds.front());

  struct Task {
    std::size_t model;
    std::size_t k;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < options.models.size(); ++m) {
    for (std::size_t k : options.ks) {
      for (std::uint64_t seed : options.seeds) tasks.push_back({m, k, seed});
    }
  }
  std::vector<SweepRun> runs(tasks.size());
  std::mutex callback_mu;
  parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const ProtocolModel& pm = options.models[t.model];
    const auto t0 = std::chrono::steady_clock::now();
    const Split split = subsample_per_label(corpus, base, t.k, t.seed);
    TrainConfig cfg = pm.train;
    cfg.seed = t.seed;
    TrainedModel trained = train(pm.spec, corpus, split, cfg);
    SweepRun& run = runs[i];
    run.model = pm.spec.kind;
    run.k = t.k;
    run.seed = t.seed;
    run.report = evaluate(*trained.model, trained.vocab, corpus, split.test);
    run.report.provenance = split.provenance;
    run.report.seed = t.seed;
    run.epochs = trained.log.size();
    run.best_epoch = trained.best_epoch;
    run.split_provenance = split.provenance;
    nlohmann::ordered_json tc(cfg.to_kv());
    run.train_config = tc.dump();
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.on_run) {
      std::lock_guard lock(callback_mu);
      options.on_run(run);
    }
  });
  return runs;
}

std::vector<SweepAggregate> aggregate_sweep(std::span<const SweepRun> runs) {
  std::vector<SweepAggregate> rows;
  std::vector<std::vector<const SweepRun*>> members;
  for (const SweepRun& r : runs) {
    std::size_t j = 0;
    while (j < rows.size() && !(rows[j].model == r.model && rows[j].k == r.k)) ++j;
    if (j == rows.size()) {
      rows.push_back(SweepAggregate{r.model, r.k});
      members.emplace_back();
    }
    members[j].push_back(&r);
  }
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& m = members[j];
    const double n = static_cast<double>(m.size());
    double acc = 0.0, f1 = 0.0;
    for (const SweepRun* r : m) {
      acc += r->report.accuracy;
      f1 += r->report.macro_f1;
    }
    acc /= n;
    f1 /= n;
    double acc_sq = 0.0, f1_sq = 0.0;
    for (const SweepRun* r : m) {
      acc_sq += (r->report.accuracy - acc) * (r->report.accuracy - acc);
      f1_sq += (r->report.macro_f1 - f1) * (r->report.macro_f1 - f1);
    }
    rows[j].runs = m.size();
    rows[j].mean_accuracy = acc;
    rows[j].mean_macro_f1 = f1;
    rows[j].std_accuracy = m.size() > 1 ? std::sqrt(acc_sq / (n - 1.0)) : 0.0;
    rows[j].std_macro_f1 = m.size() > 1 ? std::sqrt(f1_sq / (n - 1.0)) : 0.0;
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_sweep_tsv(std::ostream& out, std::span<const SweepRun> runs) {
  out << "model\tk\tseed\taccuracy\tmacro_f1\n";
  for (const SweepRun& r : runs) {
    out << model_kind_name(r.model) << '\t' << r.k << '\t' << r.seed << '\t' << fmt(r.report.accuracy) << '\t'
        << fmt(r.report.macro_f1) << '\n';
  }
}

void write_aggregate_tsv(std::ostream& out, std::span<const SweepAggregate> rows) {
  out << "model\tk\truns\tmean_accuracy\tstd_accuracy\tmean_macro_f1\tstd_macro_f1\n";
  for (const SweepAggregate& a : rows) {
    out << model_kind_name(a.model) << '\t' << a.k << '\t' << a.runs << '\t' << fmt(a.mean_accuracy) << '\t'
        << fmt(a.std_accuracy) << '\t' << fmt(a.mean_macro_f1) << '\t' << fmt(a.std_macro_f1) << '\n';
  }
}

std::string sweep_run_json(const SweepRun& run) {
  nlohmann::ordered_json j;
  j["model"] = model_kind_name(run.model);
  j["k"] = run.k;
  j["seed"] = run.seed;
  j["spec_hash"] = run.report.spec_hash;
  j["split_provenance"] = run.split_provenance;
  j["train_config"] = nlohmann::ordered_json::parse(run.train_config.empty() ? "{}" : run.train_config);
  j["epochs"] = run.epochs;
  j["best_epoch"] = run.best_epoch;
  j["seconds"] = run.seconds;
  j["report"] = nlohmann::ordered_json::parse(report_json(run.report, -1));
  return j.dump(2);
}

std::vector<CrossGenreRow> run_cross_genre(std::span<const Clause> corpus, const CrossGenreOptions& options) {
  if (options.models.empty()) throw UsageError("cross-genre evaluation needs at least one model");
  std::set<std::string> present;
  for (const Clause& c : corpus) present.insert(c.genre);
  if (present.size() < 2) throw DataError("cross-genre evaluation needs at least two genres in the corpus");

  std::vector<std::string> genres = options.genres;
  if (genres.empty()) {
    for (const std::string& g : known_genres()) {
      if (present.erase(g) > 0) genres.push_back(g);
    }
    genres.insert(genres.end(), present.begin(), present.end());
  } else {
    for (const std::string& g : genres) {
      if (!present.contains(g)) throw DataError("genre '" + g + "' does not occur in the corpus");
    }
  }

  struct Task {
    std::size_t model;
    std::size_t genre;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < options.models.size(); ++m) {
    for (std::size_t g = 0; g < genres.size(); ++g) tasks.push_back({m, g});
  }
  std::vector<CrossGenreRow> rows(tasks.size());
  std::mutex callback_mu;
  parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
    const ProtocolModel& pm = options.models[tasks[i].model];
    const std::string& genre = genres[tasks[i].genre];
    const Split split = cross_genre_split(corpus, genre, options.seed);
    TrainConfig cfg = pm.train;
    cfg.seed = options.seed;
    TrainedModel trained = train(pm.spec, corpus, split, cfg);
    CrossGenreRow& row = rows[i];
    row.model = pm.spec.kind;
    row.genre = genre;
    row.report = evaluate(*trained.model, trained.vocab, corpus, split.test);
    row.report.provenance = split.provenance;
    row.report.seed = options.seed;
    row.split_provenance = split.provenance;
    if (options.on_row) {
      std::lock_guard lock(callback_mu);
      options.on_row(row);
    }
  });
  return rows;
}

void write_cross_genre_tsv(std::ostream& out, std::span<const CrossGenreRow> rows) {
  out << "model\tgenre\taccuracy\tmacro_f1\n";
  for (const CrossGenreRow& r : rows) {
    out << model_kind_name(r.model) << '\t' << r.genre << '\t' << fmt(r.report.accuracy) << '\t'
        << fmt(r.report.macro_f1) << '\n';
  }
}

}  // namespace sevae
