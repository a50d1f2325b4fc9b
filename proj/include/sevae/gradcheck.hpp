#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sevae/autograd.hpp"

namespace sevae {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 checks every entry; otherwise a seeded random subset of each parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

// Builds the scalar objective on the given tape. Must be a deterministic
// function of the parameter values: any noise has to be drawn up front.
using ObjectiveFn = std::function<Var(Tape&)>;

// Compares tape gradients against central differences. The per-entry error is
// |analytic - numeric| / max(1, |numeric|). Throws NumericalError when two
// evaluations at identical parameters disagree.
GradCheckReport grad_check(const ObjectiveFn& objective, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace sevae
