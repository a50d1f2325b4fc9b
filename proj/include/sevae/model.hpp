#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevae/encoders.hpp"
#include "sevae/layers.hpp"
#include "sevae/text.hpp"

namespace sevae {

// disc, gen, lat, ctx are the comparison systems; the vae-* kinds are the
// latent-variable classifier with a bag-of-words, LSTM, or latent-injected
// transformer decoder.
enum class ModelKind { disc, gen, lat, ctx, vae_bow, vae_lstm, vae_xfmr };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
const std::vector<ModelKind>& all_model_kinds();
bool is_vae(ModelKind kind);

enum class BetaSchedule { fixed, linear };

// Declarative description of one architecture. Serializes to a flat
// key = value map; the hash of that map identifies checkpoints.
struct ModelSpec {
  ModelKind kind = ModelKind::vae_xfmr;
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;
  double dropout = 0.0;

  // Recurrent baselines.
  std::size_t embed_dim = 100;
  std::size_t hidden_dim = 100;
  std::size_t label_dim = 100;
  std::size_t latent_classes = 30;
  std::size_t latent_class_dim = 100;
  bool feed_label_input = false;

  // Hierarchical context model.
  std::size_t ctx_word_hidden = 300;
  std::size_t ctx_clause_hidden = 100;
  std::size_t ctx_max_len = 1024;

  // Variational models.
  EncoderKind encoder = EncoderKind::transformer_cls;
  std::size_t enc_dim = 128;
  std::size_t enc_layers = 2;
  std::size_t enc_heads = 4;
  std::size_t enc_ffn = 256;
  std::size_t latent_dim = 30;
  std::size_t dec_dim = 128;
  std::size_t dec_layers = 2;
  std::size_t dec_heads = 4;
  std::size_t dec_ffn = 256;
  bool tie_embeddings = false;
  double beta = 0.5;
  BetaSchedule beta_schedule = BetaSchedule::fixed;
  std::size_t beta_warmup = 1000;
  double cls_weight = 1.0;
  double logvar_min = -8.0;
  double logvar_max = 8.0;

  std::map<std::string, std::string> to_kv() const;
  // Starts from `base` and applies every recognised key; unknown keys throw.
  static ModelSpec from_kv(const std::map<std::string, std::string>& kv, ModelSpec base);
  static ModelSpec from_kv(const std::map<std::string, std::string>& kv) { return from_kv(kv, ModelSpec{}); }
  static ModelSpec defaults_for(ModelKind kind);
  void validate() const;
  std::uint64_t hash() const;
};

std::string hash_hex(std::uint64_t h);

struct Example {
  std::vector<int> ids;
  int label = -1;
};

// Scalar training objective plus its logged components (NaN when a
// component does not exist for the model).
struct LossParts {
  Var total;
  double classification = std::numeric_limits<double>::quiet_NaN();
  double reconstruction = std::numeric_limits<double>::quiet_NaN();
  double kl = std::numeric_limits<double>::quiet_NaN();
};

class Model {
 public:
  virtual ~Model() = default;

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Whether training/prediction units are whole paragraphs.
  virtual bool paragraph_level() const { return false; }
  // Summed objective over the clauses of one unit.
  virtual LossParts loss(Tape& tape, std::span<const Example> unit, Rng& rng) = 0;
  // Label distribution per clause of the unit. Deterministic.
  virtual std::vector<LabelProbs> predict(std::span<const Example> unit) const = 0;

  // Optimizer step counter, used by step-dependent objectives.
  void set_step(std::size_t step) { step_ = step; }
  std::size_t step() const { return step_; }

 protected:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  ModelSpec spec_;
  ParamStore params_;
  std::size_t step_ = 0;
};

// `prior` feeds the generative baselines' p(y); other kinds ignore it.
std::unique_ptr<Model> make_model(const ModelSpec& spec, std::uint64_t seed, const LabelProbs& prior);

}  // namespace sevae
