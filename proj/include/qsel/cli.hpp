#pragma once

#include <chrono>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qsel/harness.hpp"

// Command line driver. Exit codes: 0 success, 1 usage or file problems, 2 numerical
// failures (a guard inside the algorithms fired).

namespace qsel {

namespace cli_detail {

// config file values fill in wherever the flag was not given explicitly
template <typename T>
void merge_config(const json& cfg, const char* key, CLI::Option* opt, T& target) {
  if (opt->count() == 0 && cfg.contains(key)) target = cfg.at(key).get<T>();
}

inline void apply_mono_overrides(MonotonicSettings& s, CLI::Option* beta, double beta_v,
                                 CLI::Option* theta, double theta_v, CLI::Option* tol, double tol_v,
                                 CLI::Option* iters, int iters_v, CLI::Option* norm, double norm_v,
                                 CLI::Option* rule, const std::string& rule_v) {
  if (beta->count()) s.beta = beta_v;
  if (theta->count()) s.theta = theta_v;
  if (tol->count()) s.tol = tol_v;
  if (iters->count()) s.max_iters = iters_v;
  if (norm->count()) s.max_field_norm = norm_v;
  if (rule->count()) s.update_rule = io::rule_from_name(rule_v);
}

inline void apply_lsq_overrides(MultistartSettings& s, CLI::Option* restarts, int restarts_v,
                                CLI::Option* scale, double scale_v, CLI::Option* evals, int evals_v,
                                CLI::Option* seed, std::uint64_t seed_v) {
  if (restarts->count()) s.restarts = restarts_v;
  if (scale->count()) s.init_scale = scale_v;
  if (evals->count()) s.max_evals = evals_v;
  if (seed->count()) s.seed = seed_v;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"greedy selective-field precomputation and dipole identification"};
  app.require_subcommand(1);

  // generate-problem
  auto* gen = app.add_subcommand("generate-problem", "write a problem file and its oracle");
  bool gen_benchmark = false;
  int gen_dim = 3, gen_l = 9, gen_steps = 4000, gen_max_iters = 200, gen_restarts = 10,
      gen_max_evals = 2000;
  double gen_t = 400.0 * M_PI, gen_beta = 1e-2, gen_theta = 1.0, gen_tol = 1e-4,
         gen_sigma = 0.0, gen_scale = 1.0, gen_field_norm = 1.0, gen_probe_drive = 1.8;
  std::uint64_t gen_seed = 1;
  std::string gen_rule = "newton", gen_config, gen_out_problem = "problem.json",
              gen_out_oracle = "oracle.json";
  gen->add_flag("--benchmark", gen_benchmark,
                "use the fixed three-level benchmark configuration");
  auto* o_dim = gen->add_option("--dim", gen_dim, "number of levels");
  auto* o_l = gen->add_option("--L", gen_l, "basis size (at most dim^2)");
  auto* o_t = gen->add_option("--T", gen_t, "time horizon");
  auto* o_steps = gen->add_option("--steps", gen_steps, "number of time steps");
  auto* o_beta = gen->add_option("--beta", gen_beta, "field penalty weight");
  auto* o_theta = gen->add_option("--theta", gen_theta, "implicit update parameter");
  auto* o_tol = gen->add_option("--tol", gen_tol, "field-change stopping tolerance");
  auto* o_iters = gen->add_option("--max-iters", gen_max_iters, "sweep iteration cap");
  auto* o_field_norm = gen->add_option("--max-field-norm", gen_field_norm,
                                       "field L2 norm budget during optimization, 0 disables");
  auto* o_probe_drive = gen->add_option(
      "--probe-drive", gen_probe_drive,
      "integrated drive sqrt(T)*|eps| the archived fields are rescaled to, 0 keeps raw");
  auto* o_rule = gen->add_option("--rule", gen_rule, "field update rule: newton or theta");
  auto* o_sigma = gen->add_option("--noise-sigma", gen_sigma, "measurement noise scale");
  auto* o_restarts = gen->add_option("--restarts", gen_restarts, "least-squares restarts");
  auto* o_scale = gen->add_option("--init-scale", gen_scale, "least-squares start scale");
  auto* o_evals = gen->add_option("--max-evals", gen_max_evals, "evaluation budget per restart");
  auto* o_seed = gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--config", gen_config, "JSON file with default values for these flags");
  gen->add_option("--out-problem", gen_out_problem, "problem output path");
  gen->add_option("--out-oracle", gen_out_oracle, "oracle output path");

  // precompute
  auto* pre = app.add_subcommand("precompute", "greedily optimize one field per basis element");
  std::string pre_problem, pre_out = "archive.json", pre_rule = "newton";
  double pre_beta = 0, pre_theta = 0, pre_tol = 0, pre_scale = 0, pre_amplitude = 1e-2,
         pre_field_norm = 0, pre_probe_drive = 0;
  int pre_iters = 0, pre_restarts = 0, pre_evals = 0;
  std::uint64_t pre_seed = 0;
  pre->add_option("problem", pre_problem, "problem file")->required();
  pre->add_option("--out", pre_out, "archive output path");
  auto* p_beta = pre->add_option("--beta", pre_beta, "override field penalty weight");
  auto* p_theta = pre->add_option("--theta", pre_theta, "override implicit update parameter");
  auto* p_tol = pre->add_option("--tol", pre_tol, "override stopping tolerance");
  auto* p_iters = pre->add_option("--max-iters", pre_iters, "override sweep iteration cap");
  auto* p_field_norm =
      pre->add_option("--max-field-norm", pre_field_norm, "override field L2 norm budget");
  auto* p_rule = pre->add_option("--rule", pre_rule, "override update rule");
  auto* p_restarts = pre->add_option("--restarts", pre_restarts, "override restarts");
  auto* p_scale = pre->add_option("--init-scale", pre_scale, "override start scale");
  auto* p_evals = pre->add_option("--max-evals", pre_evals, "override evaluation budget");
  auto* p_seed = pre->add_option("--seed", pre_seed, "override least-squares seed");
  auto* p_probe_drive =
      pre->add_option("--probe-drive", pre_probe_drive, "override archived-field drive rescale");
  pre->add_option("--init-amplitude", pre_amplitude, "noise amplitude of initial fields");

  // measure
  auto* mea = app.add_subcommand("measure", "synthesize overlap measurements from the oracle");
  std::string mea_problem, mea_archive, mea_oracle, mea_out = "measurements.json";
  double mea_sigma = 0.0;
  std::uint64_t mea_seed = 0;
  mea->add_option("problem", mea_problem, "problem file")->required();
  mea->add_option("archive", mea_archive, "archive file")->required();
  mea->add_option("--oracle", mea_oracle, "oracle file with the hidden operator")->required();
  auto* m_sigma = mea->add_option("--sigma", mea_sigma, "override noise scale");
  auto* m_seed = mea->add_option("--seed", mea_seed, "override noise seed");
  mea->add_option("--out", mea_out, "measurements output path");

  // identify
  auto* ide = app.add_subcommand("identify", "solve the least-squares identification");
  std::string ide_problem, ide_archive, ide_measurements, ide_truth, ide_out = "report.json";
  ide->add_option("problem", ide_problem, "problem file")->required();
  ide->add_option("archive", ide_archive, "archive file")->required();
  ide->add_option("measurements", ide_measurements, "measurements file")->required();
  ide->add_option("--truth", ide_truth, "oracle file, to score the estimate");
  ide->add_option("--out", ide_out, "report output path");

  // export-fields
  auto* exp = app.add_subcommand("export-fields", "write per-field CSV files and a summary");
  std::string exp_archive, exp_out = "fields";
  exp->add_option("archive", exp_archive, "archive file")->required();
  exp->add_option("--out", exp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(gen)) {
      json cfg = json::object();
      if (!gen_config.empty()) cfg = io::load_json(gen_config);
      cli_detail::merge_config(cfg, "benchmark", gen->get_option("--benchmark"), gen_benchmark);
      cli_detail::merge_config(cfg, "dim", o_dim, gen_dim);
      cli_detail::merge_config(cfg, "L", o_l, gen_l);
      cli_detail::merge_config(cfg, "T", o_t, gen_t);
      cli_detail::merge_config(cfg, "steps", o_steps, gen_steps);
      cli_detail::merge_config(cfg, "beta", o_beta, gen_beta);
      cli_detail::merge_config(cfg, "theta", o_theta, gen_theta);
      cli_detail::merge_config(cfg, "tol", o_tol, gen_tol);
      cli_detail::merge_config(cfg, "max_iters", o_iters, gen_max_iters);
      cli_detail::merge_config(cfg, "max_field_norm", o_field_norm, gen_field_norm);
      cli_detail::merge_config(cfg, "probe_drive", o_probe_drive, gen_probe_drive);
      cli_detail::merge_config(cfg, "rule", o_rule, gen_rule);
      cli_detail::merge_config(cfg, "noise_sigma", o_sigma, gen_sigma);
      cli_detail::merge_config(cfg, "restarts", o_restarts, gen_restarts);
      cli_detail::merge_config(cfg, "init_scale", o_scale, gen_scale);
      cli_detail::merge_config(cfg, "max_evals", o_evals, gen_max_evals);
      cli_detail::merge_config(cfg, "seed", o_seed, gen_seed);

      ProblemSpec p;
      OracleSpec o;
      if (gen_benchmark) {
        std::tie(p, o) = make_benchmark_problem();
        if (o_t->count() || cfg.contains("T"))
          p.grid = TimeGrid(gen_t, o_steps->count() || cfg.contains("steps") ? gen_steps : p.grid.M);
        else if (o_steps->count() || cfg.contains("steps"))
          p.grid = TimeGrid(p.grid.T, gen_steps);
      } else {
        std::tie(p, o) = make_random_problem(gen_dim, gen_l, gen_t, gen_steps, gen_seed, gen_sigma);
      }
      auto has = [&](CLI::Option* o, const char* key) {
        return o->count() > 0 || cfg.contains(key);
      };
      if (has(o_sigma, "noise_sigma")) p.noise_sigma = gen_sigma;
      if (has(o_beta, "beta")) p.mono.beta = gen_beta;
      if (has(o_theta, "theta")) p.mono.theta = gen_theta;
      if (has(o_tol, "tol")) p.mono.tol = gen_tol;
      if (has(o_iters, "max_iters")) p.mono.max_iters = gen_max_iters;
      if (has(o_field_norm, "max_field_norm")) p.mono.max_field_norm = gen_field_norm;
      if (has(o_probe_drive, "probe_drive")) p.probe_drive = gen_probe_drive;
      if (has(o_rule, "rule")) p.mono.update_rule = io::rule_from_name(gen_rule);
      if (has(o_restarts, "restarts")) p.lsq.restarts = gen_restarts;
      if (has(o_scale, "init_scale")) p.lsq.init_scale = gen_scale;
      if (has(o_evals, "max_evals")) p.lsq.max_evals = gen_max_evals;
      if (has(o_seed, "seed")) p.lsq.seed = gen_seed;

      io::write_json_atomic(gen_out_problem, io::problem_to_json(p));
      io::write_json_atomic(gen_out_oracle, io::oracle_to_json(o));
      std::cout << "wrote " << gen_out_problem << " and " << gen_out_oracle << "\n";
    } else if (app.got_subcommand(pre)) {
      ProblemSpec p = io::problem_from_json(io::load_json(pre_problem));
      cli_detail::apply_mono_overrides(p.mono, p_beta, pre_beta, p_theta, pre_theta, p_tol, pre_tol,
                                       p_iters, pre_iters, p_field_norm, pre_field_norm, p_rule,
                                       pre_rule);
      cli_detail::apply_lsq_overrides(p.lsq, p_restarts, pre_restarts, p_scale, pre_scale, p_evals,
                                      pre_evals, p_seed, pre_seed);
      if (p_probe_drive->count()) p.probe_drive = pre_probe_drive;

      const auto start = std::chrono::steady_clock::now();
      SelectiveFieldSet set =
          greedy_fields(p.context(), p.basis(), p.mono, p.lsq, pre_amplitude, p.probe_drive);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

      io::write_json_atomic(pre_out, io::archive_to_json(set, p));
      std::cout << "wrote " << pre_out << " (" << set.fields.size() << " fields, "
                << elapsed.count() << " s)\n";
      for (size_t k = 0; k < set.fields.size(); ++k)
        std::cout << "  field " << k + 1 << ": |eps| " << l2_norm(set.fields[k]) << ", final J "
                  << set.traces[k].objective_history.back() << ", iters "
                  << set.traces[k].iterations << "\n";
      for (const auto& w : set.warnings) std::cout << "  warning: " << w << "\n";
    } else if (app.got_subcommand(mea)) {
      ProblemSpec p = io::problem_from_json(io::load_json(mea_problem));
      SelectiveFieldSet set = io::archive_from_json(io::load_json(mea_archive), p);
      OracleSpec o = io::oracle_from_json(io::load_json(mea_oracle));
      const double sigma = m_sigma->count() ? mea_sigma : p.noise_sigma;
      const std::uint64_t seed = m_seed->count() ? mea_seed : o.noise_seed;
      auto ms = run_measure(p, o, set.fields, sigma, seed);
      io::write_json_atomic(mea_out, io::measurements_to_json(ms, sigma, seed));
      std::cout << "wrote " << mea_out << " (" << ms.size() << " records, sigma " << sigma << ")\n";
    } else if (app.got_subcommand(ide)) {
      ProblemSpec p = io::problem_from_json(io::load_json(ide_problem));
      SelectiveFieldSet set = io::archive_from_json(io::load_json(ide_archive), p);
      auto ms = io::measurements_from_json(io::load_json(ide_measurements));
      OracleSpec truth;
      const bool scored = !ide_truth.empty();
      if (scored) truth = io::oracle_from_json(io::load_json(ide_truth));

      const auto start = std::chrono::steady_clock::now();
      IdentificationResult r = run_identify(p, set, ms, scored ? &truth.mu_star : nullptr);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

      io::write_json_atomic(ide_out, io::report_to_json(r));
      std::cout << "wrote " << ide_out << "\n";
      std::cout << "  residual " << r.residual << ", iterations " << r.trace.iterations << ", "
                << elapsed.count() << " s\n";
      if (r.relative_error) std::cout << "  relative error " << *r.relative_error << "\n";
    } else if (app.got_subcommand(exp)) {
      // CSV export needs no basis, so read the archive fields directly
      json j = io::load_json(exp_archive);
      io::require_format(j, "qsel-archive");
      TimeGrid grid(j.at("grid").at("T").get<double>(), j.at("grid").at("M").get<int>());
      SelectiveFieldSet set;
      for (const auto& f : j.at("fields")) set.fields.emplace_back(grid, io::rvector_from_json(f));
      for (const auto& t : j.at("traces")) set.traces.push_back(io::trace_from_json(t));
      if (set.traces.size() != set.fields.size())
        throw std::invalid_argument("archive: traces must align with fields");
      io::export_fields_csv(set, exp_out);
      std::cout << "wrote " << set.fields.size() << " field files under " << exp_out << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace qsel
