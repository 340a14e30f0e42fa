#pragma once

// Iterated integrals computed in global time: every piece is re-expressed as a
// polynomial in t, and the nested integrals carry their values across breakpoints.

#include "carnot/chen_flow.hpp"

namespace oracle {

inline carnot::Rational iterated_integral(const carnot::PolyControl<carnot::Rational>& u, const std::vector<int>& word) {
  using carnot::Polynomial;
  using carnot::Rational;
  const auto bps = u.breakpoints();
  // F_j(t) = integral over t0 < ... of the first j letters, piecewise in global t
  std::vector<Rational> carry(word.size() + 1, Rational(0));
  carry[0] = 1;
  for (std::size_t k = 0; k < u.pieces().size(); ++k) {
    const Rational a = bps[k], b = bps[k + 1];
    std::vector<Polynomial<Rational>> F{Polynomial<Rational>::constant(Rational(1))};
    for (std::size_t j = 0; j < word.size(); ++j) {
      const auto g = u.pieces()[k].poly[word[j] - 1].shifted(-a);  // global-time polynomial
      const auto prim = (F[j] * g).integral();
      F.push_back(prim - Polynomial<Rational>::constant(prim(a)) + Polynomial<Rational>::constant(carry[j + 1]));
    }
    for (std::size_t j = 1; j <= word.size(); ++j) carry[j] = F[j](b);
  }
  return carry[word.size()];
}

}  // namespace oracle
