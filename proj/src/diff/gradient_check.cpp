#include "explore/diff/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "explore/num/rng.hpp"

namespace explore::diff {

GradCheckReport gradient_check(const std::function<Var(Tape&)>& fn, const ParameterSet& params,
                               const GradCheckOptions& opts) {
  params.zero_grad();
  {
    Tape tape;
    Var out = fn(tape);
    tape.backward(out);
  }
  const std::vector<double> analytic = params.flatten_grads();
  std::vector<double> values = params.flatten_values();
  params.zero_grad();

  std::vector<std::size_t> coords(values.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (opts.max_coords != 0 && opts.max_coords < coords.size()) {
    num::Rng rng(opts.seed);
    for (std::size_t i = 0; i < opts.max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(opts.max_coords);
  }

  auto eval = [&](std::span<const double> v) {
    params.assign_values(v);
    Tape tape;
    return fn(tape).scalar();
  };

  GradCheckReport rep;
  for (std::size_t c : coords) {
    const double orig = values[c];
    values[c] = orig + opts.h;
    const double fp = eval(values);
    values[c] = orig - opts.h;
    const double fm = eval(values);
    values[c] = orig;
    const double numeric = (fp - fm) / (2.0 * opts.h);
    const double a = analytic[c];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
    if (rel > rep.max_rel_error || rep.checked == 0) {
      rep.max_rel_error = rel;
      rep.worst_coord = c;
      rep.worst_analytic = a;
      rep.worst_numeric = numeric;
    }
    ++rep.checked;
  }
  params.assign_values(values);
  rep.pass = rep.max_rel_error <= opts.tol;
  return rep;
}

}  // namespace explore::diff
