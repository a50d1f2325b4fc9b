#include <atomic>
#include <cmath>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sevae/checkpoint.hpp"
#include "sevae/config.hpp"
#include "sevae/error.hpp"
#include "sevae/protocols.hpp"
#include "sevae/synth.hpp"

using namespace sevae;

namespace {

ModelSpec tiny(ModelKind kind) {
  ModelSpec s = ModelSpec::defaults_for(kind);
  s.embed_dim = 8;
  s.hidden_dim = 8;
  s.label_dim = 4;
  s.latent_classes = 3;
  s.latent_class_dim = 4;
  s.ctx_word_hidden = 6;
  s.ctx_clause_hidden = 4;
  s.enc_dim = 8;
  s.enc_layers = 1;
  s.enc_heads = 2;
  s.enc_ffn = 8;
  s.latent_dim = 4;
  s.dec_dim = 8;
  s.dec_layers = 1;
  s.dec_heads = 2;
  s.dec_ffn = 8;
  return s;
}

Dataset small_synth(std::size_t train = 16) {
  return generate_synthetic(SynthConfig{.train_per_label = train, .validation_per_label = 3, .test_per_label = 4});
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / ("sevae_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::vector({1.0, -2.0});
  Tensor g(Shape{2});
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(ps, gs, st, AdamConfig{});
  CHECK(p.values() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("adam: first step moves by lr") {
  Tensor p = Tensor::scalar(0.0);
  Tensor g = Tensor::scalar(1.0);
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  AdamState st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(ps, gs, st, cfg);
  CHECK(p.item() == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("adam: converges on a 1-D quadratic") {
  Tensor p = Tensor::scalar(0.0);
  Tensor g = Tensor::scalar(0.0);
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  AdamState st;
  AdamConfig cfg;
  cfg.lr = 0.05;
  for (int i = 0; i < 500; ++i) {
    g[0] = 2.0 * (p.item() - 3.0);
    adam_step(ps, gs, st, cfg);
  }
  CHECK(std::abs(p.item() - 3.0) < 1e-3);
}

TEST_CASE("adam: clipping, weight decay, and shape checks") {
  Tensor p = Tensor::vector({0.0, 0.0});
  Tensor g = Tensor::vector({6.0, 8.0});
  Tensor* ps[] = {&p};
  const Tensor* gs[] = {&g};
  AdamState st;
  AdamConfig cfg;
  cfg.grad_clip = 5.0;
  CHECK(adam_step(ps, gs, st, cfg) == doctest::Approx(10.0));
  CHECK(st.m[0][0] == doctest::Approx(0.1 * 3.0));
  CHECK(st.m[0][1] == doctest::Approx(0.1 * 4.0));

  Tensor q = Tensor::scalar(2.0);
  Tensor zero_g = Tensor::scalar(0.0);
  Tensor* qs[] = {&q};
  const Tensor* zs[] = {&zero_g};
  AdamState st2;
  AdamConfig wd;
  wd.weight_decay = 0.5;
  adam_step(qs, zs, st2, wd);
  CHECK(st2.m[0][0] == doctest::Approx(0.1 * 1.0));
  CHECK(q.item() < 2.0);

  Tensor bad = Tensor::vector({1.0, 2.0, 3.0});
  const Tensor* bs[] = {&bad};
  AdamState st3;
  CHECK_THROWS_AS(adam_step(ps, bs, st3, cfg), UsageError);
}

TEST_CASE("metrics: perfect and all-STATE predictions") {
  std::vector<int> gold;
  for (int y = 0; y < 7; ++y)
    for (int i = 0; i < 5; ++i) gold.push_back(y);
  const EvalReport perfect = score_predictions(gold, gold);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) CHECK(perfect.confusion[i][j] == (i == j ? 5u : 0u));
  const std::vector<int> state(gold.size(), 0);
  const EvalReport r = score_predictions(gold, state);
  CHECK(r.accuracy == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 28.0).epsilon(1e-15));
  CHECK(r.per_class[0].f1 == doctest::Approx(0.25));
  CHECK_THROWS_AS(score_predictions(gold, std::vector<int>{0}), UsageError);
  CHECK_THROWS_AS(score_predictions(std::vector<int>{7}, std::vector<int>{0}), UsageError);
}

TEST_CASE("metrics: identities and JSON") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> lab(0, 6);
  std::vector<int> gold(200), pred(200);
  for (auto& g : gold) g = lab(rng);
  for (auto& p : pred) p = lab(rng);
  const EvalReport r = score_predictions(gold, pred);
  std::size_t total = 0, trace = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < 7; ++j) row += r.confusion[i][j];
    CHECK(row == r.per_class[i].support);
    total += row;
    trace += r.confusion[i][i];
  }
  CHECK(total == 200);
  CHECK(r.accuracy == static_cast<double>(trace) / 200.0);
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["per_class"].size() == 7);
  CHECK(j["confusion"][0].size() == 7);
  CHECK(j["f1_averaging"] == "macro over all 7 labels");
}

TEST_CASE("units group paragraphs into contiguous runs") {
  std::vector<Clause> cs;
  auto add = [&](std::string doc, int par, int idx) {
    Clause c;
    c.text = "x";
    c.tokens = {"x"};
    c.doc_id = std::move(doc);
    c.par_id = par;
    c.clause_idx = idx;
    cs.push_back(c);
  };
  add("a", 0, 2);
  add("a", 0, 0);
  add("a", 0, 1);
  add("a", 0, 4);
  add("a", 1, 5);
  add("b", 0, 0);
  Vocab v = Vocab::build(cs, 1);
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5};
  const auto units = make_units(cs, all, v, true);
  REQUIRE(units.size() == 4);
  CHECK(units[0].indices == std::vector<std::size_t>{1, 2, 0});
  CHECK(units[1].indices == std::vector<std::size_t>{3});
  CHECK(units[2].indices == std::vector<std::size_t>{4});
  CHECK(units[3].indices == std::vector<std::size_t>{5});
  CHECK(make_units(cs, all, v, false).size() == 6);
}

TEST_CASE("training is deterministic, logs every epoch, and keeps the best epoch") {
  const Dataset ds = small_synth();
  TrainConfig cfg = default_train_config(ModelKind::vae_bow);
  cfg.max_epochs = 4;
  cfg.logical_batch = 8;
  std::ostringstream log1, log2;
  TrainedModel a = train(tiny(ModelKind::vae_bow), ds.clauses, ds.split, cfg, &log1);
  TrainedModel b = train(tiny(ModelKind::vae_bow), ds.clauses, ds.split, cfg, &log2);
  const EvalReport ra = evaluate(*a.model, a.vocab, ds.clauses, ds.split.test);
  const EvalReport rb = evaluate(*b.model, b.vocab, ds.clauses, ds.split.test);
  CHECK(ra.accuracy == rb.accuracy);
  CHECK(ra.macro_f1 == rb.macro_f1);
  CHECK(ra.confusion == rb.confusion);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
  std::istringstream lines(log1.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("reconstruction"));
    CHECK(j["kl"].is_number());
    CHECK(j["classification"].is_number());
    ++n;
  }
  CHECK(n == a.log.size());
  double best = -1.0;
  for (const auto& e : a.log) best = std::max(best, e.val_macro_f1);
  CHECK(a.best_val_macro_f1 == best);
  const EvalReport val = evaluate(*a.model, a.vocab, ds.clauses, ds.split.validation);
  CHECK(val.macro_f1 == best);
}

TEST_CASE("training rejects an empty split and bad configs") {
  const Dataset ds = small_synth();
  Split empty = ds.split;
  empty.train.clear();
  CHECK_THROWS_AS(train(tiny(ModelKind::disc), ds.clauses, empty, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.patience = 0;
  CHECK_THROWS_AS(train(tiny(ModelKind::disc), ds.clauses, ds.split, bad), UsageError);
}

TEST_CASE("training config key-value round trip") {
  TrainConfig c;
  c.adam.lr = 0.0123;
  c.patience = 9;
  c.seed = 77;
  const TrainConfig back = TrainConfig::from_kv(c.to_kv(), TrainConfig{});
  CHECK(back.adam.lr == 0.0123);
  CHECK(back.patience == 9);
  CHECK(back.seed == 77);
  CHECK_THROWS_AS(TrainConfig::from_kv({{"learning_rate", "1"}}, TrainConfig{}), UsageError);
  CHECK(default_train_config(ModelKind::gen).adam.lr == 1e-3);
  CHECK(default_train_config(ModelKind::vae_xfmr).adam.lr == 5e-4);
}

TEST_CASE("model spec key-value round trip and hash") {
  ModelSpec s = tiny(ModelKind::lat);
  s.vocab_size = 40;
  const ModelSpec back = ModelSpec::from_kv(s.to_kv());
  CHECK(back.hash() == s.hash());
  CHECK(back.kind == ModelKind::lat);
  ModelSpec other = s;
  other.latent_classes = 4;
  CHECK(other.hash() != s.hash());
  CHECK_THROWS_AS(ModelSpec::from_kv({{"nonsense", "1"}}), UsageError);
  CHECK_THROWS_AS(ModelSpec::from_kv({{"latent_dim", "x"}}), UsageError);
  for (ModelKind k : all_model_kinds()) CHECK(parse_model_kind(model_kind_name(k)) == k);
}

TEST_CASE("checkpoints round-trip bit-exactly and report distinct errors") {
  const Dataset ds = small_synth();
  const auto dir = temp_dir();
  for (ModelKind kind : all_model_kinds()) {
    CAPTURE(model_kind_name(kind));
    TrainConfig cfg = default_train_config(kind);
    cfg.max_epochs = 1;
    TrainedModel t = train(tiny(kind), ds.clauses, ds.split, cfg);
    const auto path = dir / (std::string(model_kind_name(kind)) + ".ckpt");
    save_checkpoint(*t.model, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded->spec().hash() == t.model->spec().hash());
    const auto before = t.model->params().all();
    const auto after = loaded->params().all();
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i]->value() == after[i]->value());
    const EvalReport ra = evaluate(*t.model, t.vocab, ds.clauses, ds.split.test);
    const EvalReport rb = evaluate(*loaded, t.vocab, ds.clauses, ds.split.test);
    CHECK(ra.confusion == rb.confusion);
    CHECK(ra.macro_f1 == rb.macro_f1);
    const int ids[] = {5, 6};
    const std::vector<Example> ex = {{{ids[0], ids[1]}, 0}};
    CHECK(t.model->predict(ex) == loaded->predict(ex));
  }

  TrainConfig cfg = default_train_config(ModelKind::disc);
  cfg.max_epochs = 1;
  TrainedModel t = train(tiny(ModelKind::disc), ds.clauses, ds.split, cfg);
  std::ostringstream buf;
  write_checkpoint(buf, *t.model);
  const std::string bytes = buf.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_WITH_AS(read_checkpoint_into(truncated, *t.model), "truncated checkpoint", CheckpointError);

  ModelSpec other_spec = t.model->spec();
  other_spec.hidden_dim = 9;
  auto other = make_model(other_spec, 1, label_prior(ds.clauses));
  std::istringstream mismatch(bytes);
  CHECK_THROWS_WITH_AS(read_checkpoint_into(mismatch, *other), "spec hash mismatch", CheckpointError);

  std::string wrong_version = bytes;
  wrong_version[8] = 2;
  std::istringstream ver(wrong_version);
  CHECK_THROWS_WITH_AS(read_checkpoint_into(ver, *t.model), doctest::Contains("version 2"), CheckpointError);

  // Corrupt the first dimension of the first array.
  std::string bad_shape = bytes;
  const std::size_t spec_len = static_cast<unsigned char>(bytes[20]) | (static_cast<unsigned char>(bytes[21]) << 8);
  const std::size_t first = 24 + spec_len + 4;
  const std::size_t name_len = static_cast<unsigned char>(bytes[first]);
  bad_shape[first + 4 + name_len + 4] += 1;
  std::istringstream shp(bad_shape);
  CHECK_THROWS_WITH_AS(read_checkpoint_into(shp, *t.model), doctest::Contains("shape mismatch"), CheckpointError);

  std::istringstream magic("NOTACKPT");
  CHECK_THROWS_AS(read_checkpoint_into(magic, *t.model), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep bookkeeping and aggregation arithmetic") {
  const Dataset ds = generate_synthetic(SynthConfig{.train_per_label = 64, .validation_per_label = 2, .test_per_label = 2});
  SweepOptions o;
  for (ModelKind k : {ModelKind::disc, ModelKind::vae_bow}) {
    TrainConfig cfg = default_train_config(k);
    cfg.max_epochs = 1;
    o.models.push_back({tiny(k), cfg});
  }
  o.ks = {4, 64};
  o.jobs = 2;
  std::size_t callbacks = 0;
  o.on_run = [&](const SweepRun&) { ++callbacks; };
  const auto runs = run_low_resource_sweep(ds.clauses, ds.split, o);
  CHECK(runs.size() == 20);
  CHECK(callbacks == 20);
  const auto agg = aggregate_sweep(runs);
  REQUIRE(agg.size() == 4);
  for (const auto& a : agg) {
    double sum = 0.0;
    std::vector<double> accs;
    for (const auto& r : runs) {
      if (r.model == a.model && r.k == a.k) accs.push_back(r.report.accuracy);
    }
    REQUIRE(accs.size() == 5);
    for (double x : accs) sum += x;
    CHECK(std::abs(a.mean_accuracy - sum / 5.0) <= 1e-12);
  }
  std::ostringstream tsv;
  write_sweep_tsv(tsv, runs);
  CHECK(tsv.str().rfind("model\tk\tseed\taccuracy\tmacro_f1\n", 0) == 0);
  const auto side = nlohmann::json::parse(sweep_run_json(runs.front()));
  CHECK(side["split_provenance"].get<std::string>().find("k=4") != std::string::npos);

  // Serial and parallel execution agree.
  o.jobs = 1;
  o.ks = {4};
  o.models.resize(1);
  const auto serial = run_low_resource_sweep(ds.clauses, ds.split, o);
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i].report.accuracy == runs[i].report.accuracy);

  o.ks = {65};
  CHECK_THROWS_AS(run_low_resource_sweep(ds.clauses, ds.split, o), DataError);
}

TEST_CASE("aggregate mean and sample standard deviation") {
  std::vector<SweepRun> runs(3);
  const double accs[] = {0.5, 0.7, 0.9};
  for (std::size_t i = 0; i < 3; ++i) {
    runs[i].model = ModelKind::gen;
    runs[i].k = 4;
    runs[i].report.accuracy = accs[i];
  }
  const auto agg = aggregate_sweep(runs);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].mean_accuracy == doctest::Approx(0.7));
  CHECK(agg[0].std_accuracy == doctest::Approx(0.2));
}

TEST_CASE("cross-genre protocol") {
  Dataset ds = small_synth(10);
  for (std::size_t i = 0; i < ds.clauses.size(); ++i) ds.clauses[i].genre = i % 2 ? "news" : "blog";
  CrossGenreOptions o;
  TrainConfig cfg = default_train_config(ModelKind::disc);
  cfg.max_epochs = 1;
  o.models.push_back({tiny(ModelKind::disc), cfg});
  const auto rows = run_cross_genre(ds.clauses, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].genre == "blog");
  CHECK(rows[1].genre == "news");
  CHECK(rows[0].split_provenance.find("blog") != std::string::npos);
  std::ostringstream tsv;
  write_cross_genre_tsv(tsv, rows);
  CHECK(tsv.str().rfind("model\tgenre\taccuracy\tmacro_f1\n", 0) == 0);
  for (auto& c : ds.clauses) c.genre = "news";
  CHECK_THROWS_AS(run_cross_genre(ds.clauses, o), DataError);
}

TEST_CASE("flat config files") {
  std::istringstream in("# comment\nmodel = gen\n\n  lr=0.01  \nmodel = lat\n");
  const KeyValues kv = read_config(in);
  CHECK(kv.at("model") == "lat");
  CHECK(kv.at("lr") == "0.01");
  std::istringstream bad("novalue\n");
  CHECK_THROWS_WITH_AS(read_config(bad, "c.cfg"), doctest::Contains("c.cfg:1"), UsageError);
  KeyValues merged = merge_config(kv, {{"lr", "0.5"}});
  CHECK(merged.at("lr") == "0.5");
  KeyValues rest = merged;
  const KeyValues taken = take_keys(rest, {"lr", "absent"});
  CHECK(taken.size() == 1);
  CHECK(rest.size() == 1);
}

TEST_CASE("parallel_for propagates the first failure") {
  std::atomic<int> ran{0};
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [&](std::size_t i) {
                                 ++ran;
                                 if (i == 4) throw DataError("boom");
                               }),
                  DataError);
  std::vector<int> out(50);
  parallel_for(50, 4, [&](std::size_t i) { out[i] = static_cast<int>(i); });
  for (int i = 0; i < 50; ++i) CHECK(out[static_cast<std::size_t>(i)] == i);
}
