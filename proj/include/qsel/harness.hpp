#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qsel/io.hpp"

// End-to-end experiment pipeline:
//   generate  ->  precompute fields  ->  measure  ->  identify
// The precompute stage sees only the ProblemSpec, which carries no information about
// the unknown operator; the OracleSpec exists solely to synthesize measurements, and
// optionally to score the final estimate.

namespace qsel {

struct ProblemSpec {
  int dim = 0;
  HermitianOperator H;
  StateVector psi0;
  StateVector psi1;
  TimeGrid grid;
  std::uint64_t basis_seed = 0;
  int L = 0;
  double noise_sigma = 0.0;
  double probe_drive = 0.0;  // archive-time field rescale, sqrt(T)*|eps|_2 (0 = raw)
  MonotonicSettings mono;
  MultistartSettings lsq;

  std::vector<HermitianOperator> basis() const {
    return random_hermitian_basis(dim, L, basis_seed);
  }
  ProblemContext context() const { return ProblemContext(H, psi0, psi1, grid, mono.beta); }
};

struct OracleSpec {
  HermitianOperator mu_star;
  std::uint64_t noise_seed = 0;
};

// Three uncoupled levels at energies 0.01, 0.02, 0.04, driven from the ground level
// toward the top one over a long horizon; the benchmark configuration.
inline std::pair<ProblemSpec, OracleSpec> make_benchmark_problem() {
  ProblemSpec p;
  p.dim = 3;
  Matrix h = Matrix::Zero(3, 3);
  h(0, 0) = 1e-2;
  h(1, 1) = 2e-2;
  h(2, 2) = 4e-2;
  p.H = HermitianOperator(h);
  p.psi0 = StateVector::basis(3, 0);
  p.psi1 = StateVector::basis(3, 2);
  p.grid = TimeGrid(4000.0 * M_PI, 40000);
  p.basis_seed = 424242;
  p.L = 9;
  p.noise_sigma = 0.0;
  p.probe_drive = 1.8;
  p.mono = MonotonicSettings{};
  p.mono.max_field_norm = 1.0;
  p.lsq = MultistartSettings{};
  p.lsq.seed = 1;

  Matrix m(3, 3);
  m << Complex(2.4154), Complex(1.9335), Complex(1.5822),
       Complex(1.9335), Complex(1.4366), Complex(1.5991),
       Complex(1.5822), Complex(1.5991), Complex(1.9843);
  OracleSpec o;
  o.mu_star = HermitianOperator(m);
  o.noise_seed = 99;
  return {std::move(p), std::move(o)};
}

// Random family with the same structure: geometric level spacings, transfer from the
// bottom level to the top one, and an unknown operator drawn inside the basis span.
inline std::pair<ProblemSpec, OracleSpec> make_random_problem(int dim, int l, double horizon,
                                                              int steps, std::uint64_t seed,
                                                              double noise_sigma = 0.0) {
  if (dim < 2) throw std::invalid_argument("problem: need at least two levels");
  ProblemSpec p;
  p.dim = dim;
  Matrix h = Matrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) h(k, k) = 1e-2 * std::pow(2.0, k);
  p.H = HermitianOperator(h);
  p.psi0 = StateVector::basis(dim, 0);
  p.psi1 = StateVector::basis(dim, dim - 1);
  p.grid = TimeGrid(horizon, steps);
  p.basis_seed = seed_mix(seed, 1);
  p.L = l;
  p.noise_sigma = noise_sigma;
  p.probe_drive = 1.8;
  p.mono = MonotonicSettings{};
  p.mono.max_field_norm = 1.0;
  p.lsq = MultistartSettings{};
  p.lsq.seed = seed_mix(seed, 2);

  // The overlaps pin the operator only up to diagonal phases on the levels psi0 and
  // psi1 do not touch, so the hidden operator is drawn as the canonical representative
  // of its phase family (the one the identification step reports), provided that
  // representative still lies in the span.
  Rng coeff(seed_mix(seed, 4));
  const auto basis = p.basis();
  RealVector c(l);
  for (int i = 0; i < l; ++i) c[i] = coeff.next_gaussian();
  HermitianOperator drawn = combine(basis, c);
  HermitianOperator canon = canonical_gauge(p.H, p.psi0, p.psi1, drawn);
  HermitianOperator back = combine(basis, project_coefficients(basis, canon));
  OracleSpec o;
  o.mu_star = (back.matrix() - canon.matrix()).cwiseAbs().maxCoeff() < 1e-10 ? back : drawn;
  o.noise_seed = seed_mix(seed, 3);
  return {std::move(p), std::move(o)};
}

inline SelectiveFieldSet run_precompute(const ProblemSpec& p) {
  return greedy_fields(p.context(), p.basis(), p.mono, p.lsq, 1e-2, p.probe_drive);
}

// Overlaps of the oracle operator under each precomputed field, with optional
// additive complex Gaussian noise of scale sigma.
inline std::vector<Complex> run_measure(const ProblemSpec& p, const OracleSpec& o,
                                        const std::vector<ControlField>& fields, double sigma,
                                        std::uint64_t noise_seed) {
  if (o.mu_star.dim() != p.dim) throw std::invalid_argument("measure: oracle dimension mismatch");
  ProblemContext ctx = p.context();
  Rng rng(noise_seed);
  std::vector<Complex> out;
  out.reserve(fields.size());
  for (const auto& f : fields) {
    Complex v = measure_phi(ctx, o.mu_star, f);
    if (sigma > 0.0) v += sigma * Complex(rng.next_gaussian(), rng.next_gaussian());
    out.push_back(v);
  }
  return out;
}

inline IdentificationResult run_identify(const ProblemSpec& p, const SelectiveFieldSet& set,
                                         const std::vector<Complex>& measurements,
                                         const HermitianOperator* truth = nullptr) {
  IdentificationResult r = identify(p.context(), set, measurements, p.lsq);
  if (truth != nullptr) r.relative_error = relative_error(*truth, r.mu_hat);
  return r;
}

namespace io {

inline json problem_to_json(const ProblemSpec& p) {
  return json{{"format", "qsel-problem"},
              {"version", 1},
              {"dim", p.dim},
              {"hamiltonian", matrix_to_json(p.H.matrix())},
              {"psi0", cvector_to_json(p.psi0.amplitudes)},
              {"psi1", cvector_to_json(p.psi1.amplitudes)},
              {"grid", json{{"T", p.grid.T}, {"M", p.grid.M}}},
              {"basis_seed", p.basis_seed},
              {"L", p.L},
              {"noise_sigma", p.noise_sigma},
              {"probe_drive", p.probe_drive},
              {"monotonic", monotonic_to_json(p.mono)},
              {"multistart", multistart_to_json(p.lsq)}};
}

inline ProblemSpec problem_from_json(const json& j) {
  require_format(j, "qsel-problem");
  ProblemSpec p;
  p.dim = j.at("dim").get<int>();
  p.H = HermitianOperator(matrix_from_json(j.at("hamiltonian")));
  p.psi0 = StateVector(cvector_from_json(j.at("psi0")));
  p.psi1 = StateVector(cvector_from_json(j.at("psi1")));
  p.grid = TimeGrid(j.at("grid").at("T").get<double>(), j.at("grid").at("M").get<int>());
  p.basis_seed = j.at("basis_seed").get<std::uint64_t>();
  p.L = j.at("L").get<int>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  p.probe_drive = j.at("probe_drive").get<double>();
  p.mono = monotonic_from_json(j.at("monotonic"));
  p.lsq = multistart_from_json(j.at("multistart"));
  if (p.H.dim() != p.dim) throw std::invalid_argument("problem: hamiltonian dimension mismatch");
  if (p.L < 1 || p.L > p.dim * p.dim) throw std::invalid_argument("problem: invalid basis size");
  return p;
}

inline json oracle_to_json(const OracleSpec& o) {
  return json{{"format", "qsel-oracle"},
              {"version", 1},
              {"mu_star", matrix_to_json(o.mu_star.matrix())},
              {"noise_seed", o.noise_seed}};
}

inline OracleSpec oracle_from_json(const json& j) {
  require_format(j, "qsel-oracle");
  OracleSpec o;
  o.mu_star = HermitianOperator(matrix_from_json(j.at("mu_star")));
  o.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  return o;
}

inline json archive_to_json(const SelectiveFieldSet& set, const ProblemSpec& p) {
  json fields = json::array(), fit_coeff = json::array(), traces = json::array();
  json l2 = json::array(), final_j = json::array();
  for (const auto& f : set.fields) {
    fields.push_back(rvector_to_json(f.samples));
    l2.push_back(l2_norm(f));
  }
  for (const auto& a : set.fit_coefficients) fit_coeff.push_back(rvector_to_json(a));
  for (const auto& t : set.traces) {
    traces.push_back(trace_to_json(t));
    final_j.push_back(t.objective_history.back());
  }
  return json{{"format", "qsel-archive"},
              {"version", 1},
              {"grid", json{{"T", p.grid.T}, {"M", p.grid.M}}},
              {"dim", p.dim},
              {"L", p.L},
              {"basis_seed", p.basis_seed},
              {"fields", std::move(fields)},
              {"fit_coefficients", std::move(fit_coeff)},
              {"fit_costs", set.fit_costs},
              {"traces", std::move(traces)},
              {"warnings", set.warnings},
              {"field_l2_norms", std::move(l2)},
              {"final_objectives", std::move(final_j)},
              {"provenance", json{{"generator", "qsel 1.0.0"},
                                  {"monotonic", monotonic_to_json(set.mono)},
                                  {"multistart", multistart_to_json(set.lsq)},
                                  {"init_amplitude", set.init_amplitude},
                                  {"probe_drive", set.probe_drive}}}};
}

// Rebuilds the full field set, including the basis, from an archive written against
// the same problem file. The basis is regenerated from its seed rather than stored.
inline SelectiveFieldSet archive_from_json(const json& j, const ProblemSpec& p) {
  require_format(j, "qsel-archive");
  if (j.at("dim").get<int>() != p.dim || j.at("L").get<int>() != p.L ||
      j.at("basis_seed").get<std::uint64_t>() != p.basis_seed)
    throw std::invalid_argument("archive: does not match the given problem");
  TimeGrid grid(j.at("grid").at("T").get<double>(), j.at("grid").at("M").get<int>());
  if (!(grid == p.grid)) throw std::invalid_argument("archive: grid does not match the problem");

  SelectiveFieldSet set;
  set.basis = p.basis();
  for (const auto& f : j.at("fields"))
    set.fields.emplace_back(grid, rvector_from_json(f));
  if (set.fields.size() != static_cast<size_t>(p.L))
    throw std::invalid_argument("archive: field count must equal L");
  for (const auto& a : j.at("fit_coefficients")) set.fit_coefficients.push_back(rvector_from_json(a));
  set.fit_costs = j.at("fit_costs").get<std::vector<double>>();
  for (const auto& t : j.at("traces")) set.traces.push_back(trace_from_json(t));
  set.warnings = j.at("warnings").get<std::vector<std::string>>();
  set.mono = monotonic_from_json(j.at("provenance").at("monotonic"));
  set.lsq = multistart_from_json(j.at("provenance").at("multistart"));
  set.init_amplitude = j.at("provenance").at("init_amplitude").get<double>();
  set.probe_drive = j.at("provenance").at("probe_drive").get<double>();
  return set;
}

inline json measurements_to_json(const std::vector<Complex>& ms, double sigma,
                                 std::uint64_t noise_seed) {
  json records = json::array();
  for (size_t k = 0; k < ms.size(); ++k)
    records.push_back(json{{"field_id", k}, {"re", ms[k].real()}, {"im", ms[k].imag()}});
  return json{{"format", "qsel-measurements"},
              {"version", 1},
              {"noise_sigma", sigma},
              {"noise_seed", noise_seed},
              {"records", std::move(records)}};
}

inline std::vector<Complex> measurements_from_json(const json& j) {
  require_format(j, "qsel-measurements");
  const auto& records = j.at("records");
  std::vector<Complex> ms(records.size());
  std::vector<bool> seen(records.size(), false);
  for (const auto& r : records) {
    const size_t id = r.at("field_id").get<size_t>();
    if (id >= ms.size() || seen[id]) throw std::invalid_argument("measurements: bad field ids");
    seen[id] = true;
    ms[id] = Complex(r.at("re").get<double>(), r.at("im").get<double>());
  }
  return ms;
}

inline json report_to_json(const IdentificationResult& r) {
  json out{{"format", "qsel-report"},
           {"version", 1},
           {"alpha", rvector_to_json(r.alpha.values)},
           {"mu_hat", matrix_to_json(r.mu_hat.matrix())},
           {"residual", r.residual},
           {"trace", trace_to_json(r.trace)}};
  if (r.relative_error) out["relative_error"] = *r.relative_error;
  return out;
}

inline IdentificationResult report_from_json(const json& j) {
  require_format(j, "qsel-report");
  IdentificationResult r;
  r.alpha = DipoleCoefficients(rvector_from_json(j.at("alpha")));
  r.mu_hat = HermitianOperator(matrix_from_json(j.at("mu_hat")));
  r.residual = j.at("residual").get<double>();
  r.trace = trace_from_json(j.at("trace"));
  if (j.contains("relative_error")) r.relative_error = j.at("relative_error").get<double>();
  return r;
}

// One CSV per field (columns t,epsilon) plus a summary table; the summary recomputes
// each field norm from the samples it just wrote, as a consistency check against the
// archive values.
inline void export_fields_csv(const SelectiveFieldSet& set, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const double dt = set.fields.empty() ? 0.0 : set.fields[0].grid.dt();
  std::string summary_path = (fs::path(dir) / "summary.csv").string();
  std::ofstream summary(summary_path, std::ios::trunc);
  if (!summary) throw std::invalid_argument("cannot write '" + summary_path + "'");
  summary << "k,l2_norm,final_objective\n";
  char buf[64];
  for (size_t k = 0; k < set.fields.size(); ++k) {
    std::snprintf(buf, sizeof buf, "field_%02zu.csv", k + 1);
    std::string path = (fs::path(dir) / buf).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write '" + path + "'");
    out << "t,epsilon\n";
    for (int j = 0; j < set.fields[k].grid.M; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", j * dt, set.fields[k].samples[j]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", k + 1, l2_norm(set.fields[k]),
                  set.traces[k].objective_history.back());
    summary << buf << '\n';
  }
}

}  // namespace io

}  // namespace qsel
