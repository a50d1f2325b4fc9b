#pragma once

// Finite-difference check of every training objective on small models.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sevae/gradcheck.hpp"
#include "sevae/model.hpp"

namespace sevae {

struct GradSuiteRow {
  std::string objective;
  std::uint64_t seed = 0;
  std::size_t params = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

// Tiny dimensions that keep a full central-difference sweep cheap.
ModelSpec gradcheck_spec(ModelKind kind);

// One row per (objective, seed): the three ELBO decoders, the class LM, the
// latent marginal with C = 3, the discriminative and the context-aware loss.
std::vector<GradSuiteRow> run_gradient_suite(std::span<const std::uint64_t> seeds,
                                             const GradCheckOptions& options = {});

}  // namespace sevae
