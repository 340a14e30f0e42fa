// carnot: command-line front end for the library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "carnot/quadratic_r2s5.hpp"
#include "carnot/strata.hpp"

using namespace carnot;

namespace {

struct Global {
  std::string mode = "exact";
  double tol = 1e-9;
  unsigned seed = 0;
  std::string out;

  bool exact() const { return mode == "exact"; }
};

Global g;

// Exit codes.
constexpr int kOk = 0, kValidation = 2, kMismatch = 3, kBlowUp = 4;

void emit(const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw validation_error("cannot open output file " + g.out);
  f << text;
}

void emit_json(const json& j) { emit(j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw validation_error("cannot read " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw validation_error(path + ": " + e.what());
  }
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Algebra selection shared by several subcommands.
struct AlgebraSource {
  std::vector<int> free_rs;
  std::string file;
  std::string case_name;

  void add(CLI::App* sub, bool with_case) {
    sub->add_option("--free", free_rs, "free algebra: rank step")->expected(2);
    sub->add_option("--file", file, "algebra JSON {rank, step, layers, structure}");
    if (with_case) sub->add_option("--case", case_name, "r2s3, r2s4 or r3s3 (free algebra of that type)");
  }

  AlgebraPtr load() const {
    const int given = !free_rs.empty() + !file.empty() + !case_name.empty();
    if (given != 1) throw validation_error("give exactly one algebra source: --free r s, --file or --case");
    if (!free_rs.empty()) return GradedAlgebra::free(free_rs[0], free_rs[1]);
    if (!file.empty()) return GradedAlgebra::from_json(read_json(file));
    const auto tag = CaseTag::parse(case_name);
    return GradedAlgebra::free(tag.rank(), tag.step());
  }
};

void require_mode() {
  if (g.mode != "exact" && g.mode != "float") throw validation_error("--mode must be exact or float");
}

// ---- algebra ----

int cmd_algebra_info(const AlgebraSource& src, bool as_json) {
  const auto alg = src.load();
  const auto dims = alg->layer_dims();
  if (as_json) {
    json j;
    j["rank"] = alg->rank();
    j["step"] = alg->step();
    j["dim"] = alg->dim();
    j["free"] = alg->is_free();
    j["layer_dims"] = dims;
    j["basis"] = json::array();
    for (int k = 1; k <= alg->step(); ++k) {
      json layer = json::array();
      for (std::size_t i = 0; i < alg->dim(); ++i)
        if (alg->layer_of(i) == k) layer.push_back(alg->label(i));
      j["basis"].push_back(layer);
    }
    j["algebra"] = alg->to_json();
    emit_json(j);
    return kOk;
  }
  std::ostringstream os;
  os << (alg->is_free() ? "free" : "quotient") << " algebra, rank " << alg->rank() << ", step " << alg->step()
     << ", dimension " << alg->dim() << "\n";
  os << "layer dims: [";
  for (std::size_t k = 0; k < dims.size(); ++k) os << (k ? "," : "") << dims[k];
  os << "]\n";
  for (int k = 1; k <= alg->step(); ++k) {
    os << "g" << k << ":";
    for (std::size_t i = 0; i < alg->dim(); ++i)
      if (alg->layer_of(i) == k) os << " " << alg->label(i);
    os << "\n";
  }
  emit(os.str());
  return kOk;
}

// ---- classify ----

template <class T>
json classify_one(const DualCovector<T>& lambda, const CaseTag& tag) {
  const auto sys = system_of(lambda, tag);
  const auto label = classify(sys, g.tol);
  json j = label.to_json();
  j["M"] = matrix_to_json(sys.M);
  j["v"] = vec_to_json(sys.v);
  auto add_normal = [&](const auto& ns) {
    j.update(ns.to_json());
    j["equilibria"] = equilibria(ns).to_json();
  };
  if constexpr (std::is_same_v<T, Rational>) {
    // irrational normal forms are reported in floating point and marked "exact": false
    if (exactly_normalizable(sys, label))
      add_normal(normalize(sys, label, g.tol));
    else
      add_normal(normalize_numeric(sys, label, g.tol));
  } else {
    add_normal(normalize(sys, label, g.tol));
  }
  return j;
}

DualCovector<Rational> random_covector(AlgebraPtr alg, const CaseTag& tag, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> num(-3, 3), den(1, 3);
  auto l = DualCovector<Rational>::zero(alg);
  const int lowest = tag.rank() == 2 ? 3 : 2;
  for (std::size_t i = 0; i < alg->dim(); ++i)
    if (alg->layer_of(i) >= lowest) {
      Rational x(num(rng), den(rng));
      x.canonicalize();
      l.coords()[i] = x;
    }
  return l;
}

int cmd_classify(const AlgebraSource& src, const std::string& covector, int random) {
  require_mode();
  const auto alg = src.load();
  const auto tag = CaseTag::of(*alg);
  std::vector<DualCovector<Rational>> ls;
  if (!covector.empty()) ls.push_back(covector_from_json(alg, read_json(covector)));
  if (random > 0) {
    std::mt19937_64 rng(g.seed);
    for (int k = 0; k < random; ++k) ls.push_back(random_covector(alg, tag, rng));
  }
  if (ls.empty()) throw validation_error("give --covector or --random N");
  json out = json::array();
  for (const auto& l : ls) {
    json j = g.exact() ? classify_one(l, tag) : classify_one(covector_cast<double>(l), tag);
    j["covector"] = coords_to_json(*alg, l.coords());
    out.push_back(std::move(j));
  }
  if (random > 0 || covector.empty())
    emit_json(out);
  else
    emit_json(out.front());
  return kOk;
}

// ---- trace ----

// Splits each piece into n equal parts so the CSV has interior rows.
template <class T>
PolyControl<T> subdivide(const PolyControl<T>& u, int n) {
  if (n <= 1) return u;
  std::vector<ControlPiece<T>> out;
  for (const auto& p : u.pieces()) {
    const T d = p.duration / T(n);
    for (int k = 0; k < n; ++k) {
      ControlPiece<T> q{d, {}};
      for (const auto& c : p.poly) q.poly.push_back(c.shifted(d * T(k)));
      out.push_back(std::move(q));
    }
  }
  return PolyControl<T>(u.rank(), std::move(out));
}

template <class T>
int run_trace(AlgebraPtr alg, const CaseTag& tag, const DualCovector<T>& lambda, const json& plan_j, int samples,
              const std::string& summary) {
  const auto sys = system_of(lambda, tag);
  const auto label = classify(sys, g.tol);
  NormalizedSystem<T> ns = normalize(sys, label, g.tol);
  const auto plan = plan_from_json<T>(plan_j, ns.dim());
  auto path = concatenate(ns, plan);
  if (!path.sampled) {
    path.z_control = subdivide(path.z_control, samples);
    path.control = subdivide(path.control, samples);
  }
  const auto lifted = lift(path, alg);
  const auto prim = path.primitive();

  std::ostringstream os;
  os << "s,t";
  for (int i = 1; i <= ns.dim(); ++i) os << ",z" << i;
  for (std::size_t i = 0; i < alg->dim(); ++i) os << ",g" << alg->label(i);
  os << "\n";
  const auto& pieces = prim.pieces();
  for (std::size_t k = 0; k < lifted.times.size(); ++k) {
    const double s = to_double(lifted.times[k]);
    os << fmt(s) << "," << fmt(s * path.length);
    for (int i = 0; i < ns.dim(); ++i) {
      // value at the start of piece k, or the end of the last piece
      const double z = k < pieces.size() ? to_double(pieces[k].poly[i](T(0)))
                                         : to_double(pieces.back().poly[i](pieces.back().duration));
      os << "," << fmt(z);
    }
    for (const auto& c : lifted.points[k].coords()) os << "," << fmt(to_double(c));
    os << "\n";
  }
  emit(os.str());

  if (!summary.empty()) {
    json j;
    j["stratum"] = label.to_json();
    j["normal_form"] = ns.to_json();
    j["sampled"] = path.sampled;
    j["length"] = path.length;
    j["tail_bound"] = path.tail_bound;
    j["switch_points"] = json::array();
    for (const auto& p : path.switch_points) j["switch_points"].push_back(vec_to_json(p));
    j["endpoint"] = coords_to_json(*alg, lifted.points.back().coords());
    std::ofstream f(summary);
    if (!f) throw validation_error("cannot open " + summary);
    f << j.dump(2) << "\n";
  }
  return kOk;
}

int cmd_trace(const AlgebraSource& src, const std::string& covector, const std::string& plan_file,
              const std::string& flow, int samples, const std::string& summary) {
  require_mode();
  const auto alg = src.load();
  const auto tag = CaseTag::of(*alg);
  if (covector.empty()) throw validation_error("trace needs --covector");
  const auto lambda = covector_from_json(alg, read_json(covector));
  json plan;
  if (!plan_file.empty() == !flow.empty()) throw validation_error("give exactly one of --plan or --flow");
  if (!plan_file.empty())
    plan = read_json(plan_file);
  else
    plan = {{"legs", json::array({{{"flow", flow}}})}};
  if (samples < 1) throw validation_error("--samples must be positive");
  if (g.exact()) return run_trace(alg, tag, lambda, plan, samples, summary);
  return run_trace(alg, tag, covector_cast<double>(lambda), plan, samples, summary);
}

// ---- verify ----

int cmd_verify_control(const AlgebraSource& src, const std::string& control, const std::string& covector, int grid) {
  require_mode();
  const auto alg = src.load();
  const auto u = control_from_json(read_json(control));
  std::optional<DualCovector<Rational>> l;
  if (!covector.empty()) l = covector_from_json(alg, read_json(covector));
  SingularityReport r;
  if (g.exact()) {
    r = singularity_report(u, alg, l, grid, g.tol, control);
  } else {
    std::optional<DualCovector<double>> ld;
    if (l) ld = covector_cast<double>(*l);
    r = singularity_report(u.cast<double>(), alg, ld, grid, g.tol, control);
  }
  emit_json(r.to_json());
  return kOk;
}

// Strata the catalog curves are stated to belong to.
const std::map<std::string, int> kCatalogStratum = {{"ex3-lipschitz", 8}, {"ex3-spiral", 8}, {"gole-karidi", 3}};

int cmd_verify_catalog(const std::string& which, int grid) {
  json out = json::array();
  bool all_pass = true, found = false;
  for (const auto& e : catalog_examples()) {
    if (which != "all" && which != e.id) continue;
    found = true;
    const auto r = singularity_report(e.control, e.alg, std::optional<DualCovector<Rational>>(e.lambda), grid, g.tol, e.id);
    json checks;
    checks["rank_bound"] = r.rank <= e.max_image_rank;
    checks["annihilates"] = r.residual_exact_zero.value_or(false);
    checks["goh"] = r.goh;
    if (auto it = kCatalogStratum.find(e.id); it != kCatalogStratum.end()) checks["stratum"] = e.stratum.major == it->second;
    bool pass = true;
    for (const auto& [k, v] : checks.items()) pass = pass && v.get<bool>();
    all_pass = all_pass && pass;
    out.push_back({{"id", e.id},
                   {"description", e.description},
                   {"stratum", e.stratum.to_json()},
                   {"max_image_rank", e.max_image_rank},
                   {"report", r.to_json()},
                   {"checks", checks},
                   {"pass", pass}});
  }
  if (!found) throw validation_error("unknown catalog entry '" + which + "'");
  emit_json(out);
  return all_pass ? kOk : kMismatch;
}

// ---- report ----

int cmd_report_codim(const std::string& which, bool as_json) {
  const auto t = codim_report(CaseTag::parse(which));
  if (as_json)
    emit_json(t.to_json());
  else
    emit(t.text());
  return t.matches() ? kOk : kMismatch;
}

// ---- r2s5 ----

struct R2s5Args {
  std::string params;
  double t1 = 1, dt = 1.0 / 64, bound = 1e8;
  std::vector<double> z0{0, 0, 0};
  int levels = 3, grid = 257;
  std::string covector;
};

QuadraticParams load_params(const R2s5Args& a) {
  if (a.params.empty()) throw validation_error("r2s5 needs --params");
  return QuadraticParams::from_json(read_json(a.params));
}

HeisenbergState state_of(const std::vector<double>& v) {
  if (v.size() != 3) throw validation_error("a state is three numbers: z1 z2 theta");
  return {v[0], v[1], v[2]};
}

int cmd_r2s5(const std::string& action, const R2s5Args& a) {
  const auto p = load_params(a);
  if (action == "integrate") {
    IntegrateOptions o;
    o.bound = a.bound;
    const auto tr = integrate(p, state_of(a.z0), a.t1, a.dt, o);
    std::ostringstream os;
    tr.write_csv(os);
    emit(os.str());
    if (tr.blew_up) {
      std::cerr << "blow-up: state left the ball of radius " << a.bound << " at t = " << tr.t.back() << "\n";
      return kBlowUp;
    }
    return kOk;
  }
  if (action == "certify") {
    CertifyOptions o;
    o.levels = a.levels;
    o.grid = a.grid;
    if (!a.covector.empty()) o.lambda = covector_from_json(p.lambda.algebra(), read_json(a.covector));
    const auto rep = certify(p, a.t1, a.dt, o);
    emit_json(rep.to_json());
    return rep.blew_up ? kBlowUp : kOk;
  }
  if (action == "order") {
    const auto e = richardson_order(p, state_of(a.z0), a.t1, a.dt);
    emit_json({{"dt", a.dt}, {"order", e.order}, {"ratio", e.ratio}});
    return kOk;
  }
  if (action == "equilibrium") {
    emit_json(find_equilibrium(p, state_of(a.z0)).to_json());
    return kOk;
  }
  throw validation_error("unknown r2s5 action '" + action + "'");
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation:
    case ErrorKind::Capacity: return kValidation;
    case ErrorKind::Mismatch: return kMismatch;
    case ErrorKind::BlowUp: return kBlowUp;
    case ErrorKind::Inconsistent: return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singular curves in Carnot groups: algebras, strata, certificates"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.add_option("--mode", g.mode, "exact or float")->capture_default_str();
  app.add_option("--tol", g.tol, "float tolerance")->capture_default_str();
  app.add_option("--seed", g.seed, "seed for sampled sweeps")->capture_default_str();
  app.add_option("--out", g.out, "output file (default stdout)");

  std::function<int()> run;

  auto* algebra = app.add_subcommand("algebra", "Lie algebra summaries");
  auto* info = algebra->add_subcommand("info", "rank, step, layer dims and basis");
  algebra->require_subcommand(1);
  AlgebraSource info_src;
  bool info_json = false;
  info_src.add(info, false);
  info->add_flag("--json", info_json, "JSON export");
  info->callback([&] { run = [&] { return cmd_algebra_info(info_src, info_json); }; });

  auto* cls = app.add_subcommand("classify", "stratum, normal form and equilibria of a covector");
  AlgebraSource cls_src;
  std::string cls_cov;
  int cls_random = 0;
  cls_src.add(cls, true);
  cls->add_option("--covector", cls_cov, "covector JSON {word: \"p/q\"}");
  cls->add_option("--random", cls_random, "classify N covectors drawn with --seed");
  cls->callback([&] { run = [&] { return cmd_classify(cls_src, cls_cov, cls_random); }; });

  auto* trace = app.add_subcommand("trace", "concatenated singular primitive and its lift (CSV)");
  AlgebraSource tr_src;
  std::string tr_cov, tr_plan, tr_flow, tr_summary;
  int tr_samples = 8;
  tr_src.add(trace, true);
  trace->add_option("--covector", tr_cov, "covector JSON");
  trace->add_option("--plan", tr_plan, "concatenation plan JSON");
  trace->add_option("--flow", tr_flow, "single flow leg of this duration from the origin");
  trace->add_option("--samples", tr_samples, "rows per polynomial piece")->capture_default_str();
  trace->add_option("--summary", tr_summary, "write a JSON summary of the lift here");
  trace->callback([&] { run = [&] { return cmd_trace(tr_src, tr_cov, tr_plan, tr_flow, tr_samples, tr_summary); }; });

  auto* verify = app.add_subcommand("verify", "singularity report for a control or catalog fixture");
  AlgebraSource ver_src;
  std::string ver_control, ver_cov, ver_catalog;
  int ver_grid = 101;
  ver_src.add(verify, true);
  verify->add_option("--control", ver_control, "control JSON");
  verify->add_option("--covector", ver_cov, "candidate covector JSON");
  verify->add_option("--catalog", ver_catalog, "catalog id or all");
  verify->add_option("--grid", ver_grid, "residual grid in float mode")->capture_default_str();
  verify->callback([&] {
    run = [&] {
      if (!ver_catalog.empty()) return cmd_verify_catalog(ver_catalog, ver_grid);
      if (ver_control.empty()) throw validation_error("verify needs --control or --catalog");
      return cmd_verify_control(ver_src, ver_control, ver_cov, ver_grid);
    };
  });

  auto* report = app.add_subcommand("report", "bookkeeping tables");
  auto* codim = report->add_subcommand("codim", "codimension table: r2s3, r2s4, r3s3 or r3s3-free");
  report->require_subcommand(1);
  std::string codim_case;
  bool codim_json = false;
  codim->add_option("case", codim_case, "r2s3, r2s4, r3s3 or r3s3-free")->required();
  codim->add_flag("--json", codim_json, "JSON table");
  codim->callback([&] { run = [&] { return cmd_report_codim(codim_case, codim_json); }; });

  auto* r2s5 = app.add_subcommand("r2s5", "rank-2 step-5 quadratic system");
  std::string r2s5_action;
  R2s5Args ra;
  r2s5->add_option("action", r2s5_action, "integrate, certify, order or equilibrium")->required();
  r2s5->add_option("--params", ra.params, "covector JSON on free(2,5)");
  r2s5->add_option("--t1", ra.t1, "final time")->capture_default_str();
  r2s5->add_option("--dt", ra.dt, "step")->capture_default_str();
  r2s5->add_option("--z0", ra.z0, "initial z1 z2 theta (integrate, order) or start (equilibrium)")->expected(3);
  r2s5->add_option("--bound", ra.bound, "blow-up bound on the state")->capture_default_str();
  r2s5->add_option("--levels", ra.levels, "certify refinement levels")->capture_default_str();
  r2s5->add_option("--grid", ra.grid, "certify residual grid")->capture_default_str();
  r2s5->add_option("--covector", ra.covector, "certify against this covector instead");
  r2s5->callback([&] { run = [&] { return cmd_r2s5(r2s5_action, ra); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidation;
  }
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
