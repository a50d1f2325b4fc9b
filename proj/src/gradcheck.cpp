#include "sevae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sevae/error.hpp"

namespace sevae {
namespace {

double evaluate(const ObjectiveFn& objective) {
  Tape tape(Tape::Mode::inference);
  return objective(tape).item();
}

}  // namespace

GradCheckReport grad_check(const ObjectiveFn& objective, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  double base = 0.0;
  {
    Tape tape(Tape::Mode::train);
    Var loss = objective(tape);
    base = loss.item();
    tape.backward(loss);
  }
  if (evaluate(objective) != base) throw NumericalError("non-deterministic under gradcheck");

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  for (Parameter* p : params) {
    GradCheckEntry entry{p->name(), 0.0, 0};
    const Tensor analytic = p->grad();
    std::vector<std::size_t> idx(p->value().size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries_per_param && idx.size() > options.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_param);
    }
    for (std::size_t i : idx) {
      double& w = p->value()[i];
      const double saved = w;
      w = saved + options.step;
      const double up = evaluate(objective);
      w = saved - options.step;
      const double down = evaluate(objective);
      w = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace sevae
