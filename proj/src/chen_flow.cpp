#include "carnot/chen_flow.hpp"

namespace carnot {

namespace {

Rational read_q(const json& v) {
  if (v.is_string()) return parse_rational(v.get<std::string>());
  if (v.is_number_integer()) return Rational(v.get<long>());
  throw validation_error("control data must be \"p/q\" strings or integers");
}

}  // namespace

PolyControl<Rational> control_from_json(const json& j) {
  if (!j.is_object() || !j.contains("pieces") || !j.at("pieces").is_array() || j.at("pieces").empty())
    throw validation_error("control file needs a nonempty 'pieces' array");
  std::vector<ControlPiece<Rational>> pieces;
  int rank = -1;
  for (const auto& p : j.at("pieces")) {
    ControlPiece<Rational> piece{read_q(p.at("duration")), {}};
    for (const auto& comp : p.at("poly")) {
      std::vector<Rational> c;
      for (const auto& x : comp) c.push_back(read_q(x));
      piece.poly.emplace_back(std::move(c));
    }
    if (rank < 0) rank = static_cast<int>(piece.poly.size());
    pieces.push_back(std::move(piece));
  }
  return PolyControl<Rational>(rank, std::move(pieces));
}

json control_to_json(const PolyControl<Rational>& u) {
  json pieces = json::array();
  for (const auto& p : u.pieces()) {
    json poly = json::array();
    for (const auto& q : p.poly) {
      json c = json::array();
      for (const auto& x : q.coeffs()) c.push_back(format_rational(x));
      if (c.empty()) c.push_back("0");
      poly.push_back(c);
    }
    pieces.push_back({{"duration", format_rational(p.duration)}, {"poly", poly}});
  }
  return {{"pieces", pieces}};
}

json group_to_json(const GroupElement<Rational>& g) { return coords_to_json(*g.algebra(), g.coords()); }

}  // namespace carnot
