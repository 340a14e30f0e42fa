#include "carnot/singularity.hpp"

namespace carnot {

Vec<Rational> primitive_integer_vector(const Vec<Rational>& v) {
  mpz_class l = 1, g = 0;
  for (const auto& x : v)
    if (sgn(x) != 0) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), x.get_den_mpz_t());
  Vec<Rational> out;
  for (const auto& x : v) {
    Rational y = x * l;
    y.canonicalize();
    out.push_back(y);
    if (sgn(y) != 0) mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), y.get_num_mpz_t());
  }
  if (g == 0) return out;
  int first = 0;
  for (const auto& x : out)
    if (sgn(x) != 0) {
      first = sgn(x);
      break;
    }
  Rational scale(first > 0 ? mpz_class(1) : mpz_class(-1), g);
  scale.canonicalize();
  for (auto& x : out) x *= scale;
  return out;
}

json SingularityReport::to_json() const {
  json j;
  if (!control_id.empty()) j["control_id"] = control_id;
  j["dim"] = dim;
  j["rank"] = rank;
  j["codim"] = codim;
  j["singular"] = singular();
  j["annihilator"] = annihilator;
  j["goh"] = goh;
  j["residual"] = residual ? json(*residual) : json(nullptr);
  if (residual_exact_zero) j["residual_exact_zero"] = *residual_exact_zero;
  j["mode"] = mode;
  j["tol"] = tol;
  return j;
}

}  // namespace carnot
