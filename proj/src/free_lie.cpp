#include "carnot/free_lie.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "carnot/error.hpp"

namespace carnot {

// ---------------------------------------------------------------- words

BracketWord BracketWord::leaf(int letter) {
  if (letter < 1 || letter > 9) throw validation_error("generator index " + std::to_string(letter) + " outside 1..9");
  BracketWord w;
  w.letter_ = letter;
  w.degree_ = 1;
  return w;
}

BracketWord BracketWord::node(BracketWord left, BracketWord right) {
  BracketWord w;
  w.degree_ = left.degree_ + right.degree_;
  w.left_ = std::make_shared<const BracketWord>(std::move(left));
  w.right_ = std::make_shared<const BracketWord>(std::move(right));
  return w;
}

namespace {

struct Parser {
  std::string_view s;
  std::size_t pos = 0;
  int max_letter;

  [[noreturn]] void fail(const std::string& why) const {
    throw validation_error("bad bracket word '" + std::string(s) + "': " + why);
  }

  BracketWord word() {
    std::vector<BracketWord> items;
    while (pos < s.size() && s[pos] != ')') items.push_back(item());
    if (items.empty()) fail("empty word at position " + std::to_string(pos));
    BracketWord acc = items.back();
    for (std::size_t k = items.size() - 1; k-- > 0;) acc = BracketWord::node(items[k], acc);
    return acc;
  }

  BracketWord item() {
    const char c = s[pos];
    if (c == '(') {
      ++pos;
      BracketWord w = word();
      if (pos >= s.size() || s[pos] != ')') fail("unbalanced parentheses");
      ++pos;
      return w;
    }
    if (c >= '1' && c <= '9') {
      const int letter = c - '0';
      if (max_letter > 0 && letter > max_letter)
        fail("generator index " + std::to_string(letter) + " out of range 1.." + std::to_string(max_letter));
      ++pos;
      return BracketWord::leaf(letter);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

BracketWord BracketWord::parse(std::string_view text, int max_letter) {
  Parser p{text, 0, max_letter};
  if (text.empty()) p.fail("empty word");
  BracketWord w = p.word();
  if (p.pos != text.size()) p.fail("unbalanced parentheses");
  return w;
}

int BracketWord::max_letter() const {
  if (is_leaf()) return letter_;
  return std::max(left_->max_letter(), right_->max_letter());
}

namespace {

std::string render_word(const BracketWord& w);

std::string render_item(const BracketWord& w) {
  if (w.is_leaf()) return std::string(1, char('0' + w.letter()));
  return "(" + render_word(w) + ")";
}

// Walk the right spine. Once a composite item appears, a composite tail is
// grouped as one item too, giving "(12)(112)" rather than "(12)112".
std::string render_word(const BracketWord& w) {
  if (w.is_leaf()) return render_item(w);
  const bool group_tail = !w.left().is_leaf() && !w.right().is_leaf();
  return render_item(w.left()) + (group_tail ? render_item(w.right()) : render_word(w.right()));
}

}  // namespace

std::string BracketWord::text() const { return render_word(*this); }

bool operator==(const BracketWord& a, const BracketWord& b) {
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.letter_ == b.letter_;
  return *a.left_ == *b.left_ && *a.right_ == *b.right_;
}

// ---------------------------------------------------------------- free basis selection

std::size_t witt_dimension(int rank, int k) {
  auto mobius = [](int n) {
    int m = 1;
    for (int p = 2; p * p <= n; ++p) {
      if (n % p) continue;
      n /= p;
      if (n % p == 0) return 0;
      m = -m;
    }
    return n > 1 ? -m : m;
  };
  long long sum = 0;
  for (int d = 1; d <= k; ++d) {
    if (k % d) continue;
    long long pw = 1;
    for (int e = 0; e < k / d; ++e) pw *= rank;
    sum += mobius(d) * pw;
  }
  return static_cast<std::size_t>(sum / k);
}

namespace {

using SparseTensor = std::map<std::uint64_t, Rational>;

// Tensor expansion of the right-nested bracket of `letters` (1-based).
SparseTensor right_nested_tensor(const std::vector<int>& letters, int rank) {
  SparseTensor p{{static_cast<std::uint64_t>(letters.back() - 1), Rational(1)}};
  std::uint64_t width = rank;  // rank^len(p)
  for (std::size_t i = letters.size() - 1; i-- > 0;) {
    const std::uint64_t a = letters[i] - 1;
    SparseTensor q;
    for (const auto& [idx, c] : p) {
      q[a * width + idx] += c;
      q[idx * rank + a] -= c;
    }
    for (auto it = q.begin(); it != q.end();) it = sgn(it->second) == 0 ? q.erase(it) : std::next(it);
    p = std::move(q);
    width *= rank;
  }
  return p;
}

struct LayerSelection {
  std::vector<std::vector<int>> words;  // sorted by text
  std::vector<SparseTensor> tensors;
};

// Right-nested words x1..xk with x(k-1) < xk, visited in lexicographic order of the
// reversed word; a word is kept when its tensor is independent of those kept before.
LayerSelection select_layer(int rank, int k) {
  std::vector<std::vector<int>> cands;
  std::vector<int> w(k, 1);
  while (true) {
    if (k == 1 || w[k - 2] < w[k - 1]) cands.push_back(w);
    int pos = k - 1;
    while (pos >= 0 && w[pos] == rank) w[pos--] = 1;
    if (pos < 0) break;
    ++w[pos];
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(), b.rend());
  });

  std::map<std::uint64_t, SparseTensor> echelon;  // leading index -> row with leading coefficient 1
  LayerSelection sel;
  for (const auto& c : cands) {
    SparseTensor t = right_nested_tensor(c, rank);
    SparseTensor red = t;
    while (!red.empty()) {
      const auto lead = red.begin()->first;
      auto row = echelon.find(lead);
      if (row == echelon.end()) break;
      const Rational f = red.begin()->second;
      for (const auto& [idx, v] : row->second) {
        auto& slot = red[idx];
        slot -= f * v;
        if (sgn(slot) == 0) red.erase(idx);
      }
    }
    if (red.empty()) continue;
    const Rational inv = 1 / red.begin()->second;
    for (auto& [idx, v] : red) v *= inv;
    echelon.emplace(red.begin()->first, std::move(red));
    sel.words.push_back(c);
    sel.tensors.push_back(std::move(t));
  }
  std::vector<std::size_t> order(sel.words.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sel.words[a] < sel.words[b]; });
  LayerSelection sorted;
  for (auto i : order) {
    sorted.words.push_back(sel.words[i]);
    sorted.tensors.push_back(std::move(sel.tensors[i]));
  }
  return sorted;
}

std::string letters_text(const std::vector<int>& w) {
  std::string s;
  for (int x : w) s.push_back(char('0' + x));
  return s;
}

}  // namespace

std::vector<std::size_t> free_layer_dimensions(int rank, int step) {
  if (rank < 1 || step < 1) throw validation_error("rank and step must be positive");
  std::vector<std::size_t> dims;
  for (int k = 1; k <= step; ++k) dims.push_back(select_layer(rank, k).words.size());
  return dims;
}

std::vector<std::string> free_layer_words(int rank, int k) {
  std::vector<std::string> out;
  for (const auto& w : select_layer(rank, k).words) out.push_back(letters_text(w));
  return out;
}

// ---------------------------------------------------------------- algebra

std::optional<std::size_t> GradedAlgebra::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

Vec<Rational> GradedAlgebra::unit(std::size_t idx) const {
  Vec<Rational> v(dim(), Rational(0));
  v[idx] = 1;
  return v;
}

Vec<Rational> GradedAlgebra::evaluate(const BracketWord& w) const {
  if (w.is_leaf()) {
    if (w.letter() > rank_)
      throw validation_error("generator index " + std::to_string(w.letter()) + " out of range 1.." + std::to_string(rank_));
    return unit(static_cast<std::size_t>(w.letter() - 1));
  }
  if (w.degree() > step_) {
    if (w.max_letter() > rank_) throw validation_error("generator index out of range in '" + w.text() + "'");
    return Vec<Rational>(dim(), Rational(0));
  }
  return bracket(evaluate(w.left()), evaluate(w.right()));
}

Vec<Rational> GradedAlgebra::evaluate(std::string_view text) const {
  return evaluate(BracketWord::parse(text, rank_));
}

AlgebraPtr GradedAlgebra::free(int rank, int step, AlgebraOptions opts) {
  if (rank < 1 || step < 1) throw validation_error("rank and step must be positive");
  if (rank > 9) throw capacity_error("rank above 9 is not representable in the word notation");
  std::size_t total = 0;
  for (int k = 1; k <= step; ++k) total += witt_dimension(rank, k);
  if (total > opts.max_dim)
    throw capacity_error("free(" + std::to_string(rank) + "," + std::to_string(step) + ") has dimension " +
                         std::to_string(total) + ", above the configured maximum " + std::to_string(opts.max_dim));

  std::shared_ptr<GradedAlgebra> g(new GradedAlgebra());
  g->rank_ = rank;
  g->step_ = step;
  g->is_free_ = true;
  std::vector<std::size_t> width{1};
  for (int k = 1; k <= step; ++k) width.push_back(width.back() * rank);

  for (int k = 1; k <= step; ++k) {
    auto sel = select_layer(rank, k);
    g->offsets_.push_back(g->labels_.size());
    g->layer_dims_.push_back(sel.words.size());
    const std::size_t nk = sel.words.size();
    Matrix<Rational> block(nk, width[k]);
    for (std::size_t i = 0; i < nk; ++i) {
      const auto text = letters_text(sel.words[i]);
      g->labels_.push_back(text);
      g->words_.push_back(BracketWord::parse(text, rank));
      g->layer_of_.push_back(k);
      Vec<Rational> dense(width[k], Rational(0));
      for (const auto& [idx, c] : sel.tensors[i]) dense[idx] = c;
      for (std::size_t j = 0; j < width[k]; ++j) block(i, j) = dense[j];
      g->tensor_basis_.push_back(std::move(dense));
    }
    // tensor columns on which the basis block is invertible
    const auto piv = rref(block).pivots;
    Matrix<Rational> sq(nk, nk);
    for (std::size_t i = 0; i < nk; ++i)
      for (std::size_t p = 0; p < nk; ++p) sq(i, p) = block(i, piv[p]);
    auto inv = inverse(sq);
    if (!inv) throw Error(ErrorKind::Inconsistent, "singular pivot block in free basis construction");
    g->pivots_.push_back(piv);
    g->pivot_inv_d_.push_back(inv->cast<double>());
    g->pivot_inv_q_.push_back(std::move(*inv));
  }

  const std::size_t n = g->labels_.size();
  g->table_.assign(n * n, {});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const int ka = g->layer_of_[a], kb = g->layer_of_[b];
      if (ka + kb > step) continue;
      const auto& ta = g->tensor_basis_[a];
      const auto& tb = g->tensor_basis_[b];
      Vec<Rational> comm(width[ka + kb], Rational(0));
      for (std::size_t i = 0; i < ta.size(); ++i) {
        if (sgn(ta[i]) == 0) continue;
        for (std::size_t j = 0; j < tb.size(); ++j) {
          if (sgn(tb[j]) == 0) continue;
          const Rational p = ta[i] * tb[j];
          comm[i * width[kb] + j] += p;
          comm[j * width[ka] + i] -= p;
        }
      }
      auto coords = g->tensor_to_layer<Rational>(ka + kb, comm);
      if (!coords) throw Error(ErrorKind::Inconsistent, "commutator outside the Lie span during free construction");
      const std::size_t off = g->offsets_[ka + kb - 1];
      for (std::size_t c = 0; c < coords->size(); ++c) {
        if (sgn((*coords)[c]) == 0) continue;
        g->table_[a * n + b].emplace_back(off + c, (*coords)[c]);
        g->table_[b * n + a].emplace_back(off + c, -(*coords)[c]);
      }
    }
  g->finish(opts);
  return g;
}

void GradedAlgebra::finish(const AlgebraOptions& opts) {
  const std::size_t n = dim();
  ad_q_.clear();
  ad_d_.clear();
  for (std::size_t a = 0; a < n; ++a) {
    Matrix<Rational> m(n, n);
    for (std::size_t b = 0; b < n; ++b)
      for (const auto& [c, k] : structure(a, b)) m(c, b) = k;
    ad_d_.push_back(m.cast<double>());
    ad_q_.push_back(std::move(m));
  }
  if (is_own_cover() && has_tensor_embedding()) {
    proj_ = Matrix<Rational>::identity(n);
    sect_ = proj_;
    return;
  }
  cover_ = GradedAlgebra::free(rank_, step_, opts);
  const auto& cv = *cover_;
  proj_ = Matrix<Rational>(n, cv.dim());
  for (std::size_t j = 0; j < cv.dim(); ++j) {
    const auto e = evaluate(cv.word(j));
    for (std::size_t i = 0; i < n; ++i) proj_(i, j) = e[i];
  }
  sect_ = Matrix<Rational>(cv.dim(), n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto e = cv.evaluate(words_[j]);
    for (std::size_t i = 0; i < cv.dim(); ++i) sect_(i, j) = e[i];
  }
}

// ---------------------------------------------------------------- JSON

namespace {

Rational json_rational(const json& v, const std::string& where) {
  if (v.is_string()) return parse_rational(v.get<std::string>());
  if (v.is_number_integer()) return Rational(v.get<long>());
  throw validation_error(where + ": expected a \"p/q\" string");
}

}  // namespace

json GradedAlgebra::to_json() const {
  json j;
  j["rank"] = rank_;
  j["step"] = step_;
  json layers = json::array();
  for (int k = 1; k <= step_; ++k) {
    json l = json::array();
    for (std::size_t i = 0; i < layer_dims_[k - 1]; ++i) l.push_back(labels_[offsets_[k - 1] + i]);
    layers.push_back(l);
  }
  j["layers"] = layers;
  json st = json::array();
  for (std::size_t a = 0; a < dim(); ++a)
    for (std::size_t b = a + 1; b < dim(); ++b) {
      const auto& s = structure(a, b);
      if (s.empty()) continue;
      json out = json::object();
      for (const auto& [c, k] : s) out[labels_[c]] = format_rational(k);
      st.push_back({{"i", labels_[a]}, {"j", labels_[b]}, {"out", out}});
    }
  j["structure"] = st;
  return j;
}

AlgebraPtr GradedAlgebra::from_json(const json& desc, AlgebraOptions opts) {
  if (!desc.is_object()) throw validation_error("algebra description must be a JSON object");
  for (const char* key : {"rank", "step", "layers"})
    if (!desc.contains(key)) throw validation_error(std::string("algebra description lacks field '") + key + "'");
  std::shared_ptr<GradedAlgebra> g(new GradedAlgebra());
  g->rank_ = desc.at("rank").get<int>();
  g->step_ = desc.at("step").get<int>();
  if (g->rank_ < 1 || g->rank_ > 9 || g->step_ < 1) throw validation_error("rank must lie in 1..9 and step be positive");
  const auto& layers = desc.at("layers");
  if (!layers.is_array() || static_cast<int>(layers.size()) != g->step_)
    throw validation_error("layers must be an array with one entry per layer");
  for (int k = 1; k <= g->step_; ++k) {
    const auto& l = layers[k - 1];
    if (!l.is_array() || l.empty()) throw validation_error("layer " + std::to_string(k) + " must be a nonempty array");
    g->offsets_.push_back(g->labels_.size());
    g->layer_dims_.push_back(l.size());
    for (const auto& s : l) {
      const auto text = s.get<std::string>();
      auto w = BracketWord::parse(text, g->rank_);
      if (w.degree() != k)
        throw validation_error("basis word '" + text + "' has degree " + std::to_string(w.degree()) + " but sits in layer " +
                               std::to_string(k));
      if (g->index_of(text)) throw validation_error("duplicate basis word '" + text + "'");
      g->labels_.push_back(text);
      g->words_.push_back(std::move(w));
      g->layer_of_.push_back(k);
    }
  }
  if (g->layer_dims_[0] != static_cast<std::size_t>(g->rank_))
    throw validation_error("first layer must list exactly the generators 1.." + std::to_string(g->rank_));
  for (int i = 0; i < g->rank_; ++i)
    if (g->labels_[i] != std::string(1, char('1' + i)))
      throw validation_error("first layer must be the generators in order 1.." + std::to_string(g->rank_));
  if (g->dim() > opts.max_dim) throw capacity_error("algebra dimension exceeds the configured maximum");

  const std::size_t n = g->dim();
  auto lookup = [&](const json& v) -> std::size_t {
    if (v.is_number_integer()) {
      const long i = v.get<long>();
      if (i < 1 || static_cast<std::size_t>(i) > n) throw validation_error("basis index " + std::to_string(i) + " out of range");
      return static_cast<std::size_t>(i - 1);
    }
    const auto s = v.get<std::string>();
    auto idx = g->index_of(s);
    if (!idx) throw validation_error("'" + s + "' is not a basis word");
    return *idx;
  };
  std::vector<std::optional<Vec<Rational>>> given(n * n);
  if (desc.contains("structure")) {
    for (const auto& e : desc.at("structure")) {
      const std::size_t a = lookup(e.at("i")), b = lookup(e.at("j"));
      Vec<Rational> out(n, Rational(0));
      for (const auto& [w, val] : e.at("out").items()) {
        auto c = g->index_of(w);
        if (!c) throw validation_error("'" + w + "' in structure output is not a basis word");
        out[*c] += json_rational(val, "structure entry");
      }
      const std::string pair = "[" + g->labels_[a] + "," + g->labels_[b] + "]";
      for (std::size_t c = 0; c < n; ++c)
        if (sgn(out[c]) != 0 && g->layer_of_[c] != g->layer_of_[a] + g->layer_of_[b])
          throw validation_error("grading violated: " + pair + " has a component on " + g->labels_[c]);
      if (given[a * n + b] && *given[a * n + b] != out)
        throw validation_error("conflicting entries for " + pair);
      given[a * n + b] = out;
    }
  }
  g->table_.assign(n * n, {});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      Vec<Rational> v(n, Rational(0));
      const auto& ab = given[a * n + b];
      const auto& ba = given[b * n + a];
      const std::string pair = "[" + g->labels_[a] + "," + g->labels_[b] + "]";
      if (a == b && ab && !is_zero_vec(*ab)) throw validation_error("antisymmetry violated: " + pair + " is nonzero");
      if (ab && ba) {
        for (std::size_t c = 0; c < n; ++c)
          if ((*ab)[c] != -(*ba)[c]) throw validation_error("antisymmetry violated on " + pair);
        v = *ab;
      } else if (ab) {
        v = *ab;
      } else if (ba) {
        for (std::size_t c = 0; c < n; ++c) v[c] = -(*ba)[c];
      }
      for (std::size_t c = 0; c < n; ++c)
        if (sgn(v[c]) != 0) g->table_[a * n + b].emplace_back(c, v[c]);
    }
  g->validate_quotient();
  std::vector<std::size_t> witt;
  for (int k = 1; k <= g->step_; ++k) witt.push_back(witt_dimension(g->rank_, k));
  g->is_free_ = g->layer_dims_ == witt;
  g->finish(opts);
  return g;
}

void GradedAlgebra::validate_quotient() const {
  const std::size_t n = dim();
  auto name = [&](std::size_t i) { return "X_" + labels_[i]; };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) {
        const auto ea = unit(a), eb = unit(b), ec = unit(c);
        auto s = bracket(ea, bracket(eb, ec));
        const auto t = bracket(eb, bracket(ec, ea));
        const auto u = bracket(ec, bracket(ea, eb));
        for (std::size_t k = 0; k < n; ++k) s[k] += t[k] + u[k];
        if (!is_zero_vec(s))
          throw validation_error("Jacobi identity violated on (" + name(a) + ", " + name(b) + ", " + name(c) + ")");
      }
  // generation: layer k is spanned by [g1, layer k-1]
  for (int k = 2; k <= step_; ++k) {
    std::vector<Vec<Rational>> gens;
    for (int i = 0; i < rank_; ++i)
      for (std::size_t j = offsets_[k - 2]; j < offsets_[k - 2] + layer_dims_[k - 2]; ++j)
        gens.push_back(bracket(unit(i), unit(j)));
    if (gens.empty() || carnot::rank(Matrix<Rational>::from_rows(gens, n)) != layer_dims_[k - 1])
      throw validation_error("layer " + std::to_string(k) + " is not generated by brackets with the first layer");
  }
  for (std::size_t i = static_cast<std::size_t>(rank_); i < n; ++i)
    if (evaluate(words_[i]) != unit(i))
      throw validation_error("basis word '" + labels_[i] + "' does not evaluate to its own basis vector");
}

json coords_to_json(const GradedAlgebra& alg, const Vec<Rational>& coords) {
  json j = json::object();
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (sgn(coords[i]) != 0) j[alg.label(i)] = format_rational(coords[i]);
  return j;
}

json coords_to_json(const GradedAlgebra& alg, const Vec<double>& coords) {
  json j = json::object();
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (coords[i] != 0.0) j[alg.label(i)] = coords[i];
  return j;
}

DualCovector<Rational> covector_from_json(AlgebraPtr alg, const json& j) {
  if (!j.is_object()) throw validation_error("covector file must be a JSON object {word: \"p/q\"}");
  std::vector<Vec<Rational>> rows;
  Vec<Rational> rhs;
  for (const auto& [w, v] : j.items()) {
    rows.push_back(alg->evaluate(w));
    rhs.push_back(json_rational(v, "covector entry '" + w + "'"));
  }
  if (rows.empty()) return DualCovector<Rational>::zero(alg);
  auto sol = solve(Matrix<Rational>::from_rows(rows, alg->dim()), rhs);
  if (!sol) throw validation_error("covector entries are inconsistent with the bracket relations");
  return DualCovector<Rational>(alg, std::move(*sol));
}

LieVector<Rational> vector_from_json(AlgebraPtr alg, const json& j) {
  if (!j.is_object()) throw validation_error("element file must be a JSON object {word: \"p/q\"}");
  auto v = LieVector<Rational>::zero(alg);
  for (const auto& [w, val] : j.items()) {
    const auto e = alg->evaluate(w);
    const Rational c = json_rational(val, "element entry '" + w + "'");
    for (std::size_t i = 0; i < e.size(); ++i) v.coords()[i] += c * e[i];
  }
  return v;
}

}  // namespace carnot
