#include "pobilin/experiment.hpp"
#include "pobilin/stability.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

using namespace pobilin;

namespace {

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) std::cout << text;
  else write_text_file(out, text);
}

struct RunFlags {
  std::string config, out, algorithm;
  std::string env_kind = "observable";
  int S = 2, O = 2, A = 2, H = 3, env_memory = 0, rank_d = 2;
  double sigma = 0.5;
  std::uint64_t env_seed = 13;
  std::string model;
  int memory = 1, size = 64, K = 1, T = 0;
  std::uint64_t class_seed = 5, seed = 1;
  long m = 20000;
  std::string radius = "calibrate";
  double R = 0.0, slack = 1.25;
};

void add_run_flags(CLI::App* c, RunFlags& f) {
  c->add_option("--config", f.config, "experiment config or manifest JSON");
  c->add_option("--out", f.out, "output directory (overrides the config)");
  c->add_option("--model", f.model, "model JSON file instead of a generator");
  c->add_option("--env", f.env_kind, "generator: observable | decodable");
  c->add_option("--states", f.S);
  c->add_option("--obs", f.O);
  c->add_option("--actions", f.A);
  c->add_option("--horizon", f.H);
  c->add_option("--sigma", f.sigma, "observability target");
  c->add_option("--env-memory", f.env_memory, "decodable window");
  c->add_option("--rank", f.rank_d, "decodable transition rank");
  c->add_option("--env-seed", f.env_seed);
  c->add_option("--memory", f.memory, "policy memory M");
  c->add_option("--class-size", f.size);
  c->add_option("--class-seed", f.class_seed);
  c->add_option("-K", f.K, "future length of the links");
  c->add_option("-T", f.T, "iterations (0 = budget)");
  c->add_option("-m", f.m, "samples per step and iteration");
  c->add_option("--radius", f.radius, "calibrate | theory | fixed");
  c->add_option("-R", f.R, "fixed radius");
  c->add_option("--slack", f.slack);
  c->add_option("--seed", f.seed);
}

ExperimentConfig config_from_flags(const RunFlags& f, const std::string& algorithm) {
  if (!f.config.empty()) {
    ExperimentConfig c = parse_config(read_json_file(f.config));
    if (!algorithm.empty()) c.algorithm = algorithm;
    if (!f.out.empty()) c.output_dir = f.out;
    return parse_config(c.to_json());
  }
  Json j;
  if (!f.model.empty()) {
    j["env"] = {{"type", "file"}, {"path", f.model}};
  } else {
    j["env"] = {{"type", "generator"}, {"generator", f.env_kind}, {"n_states", f.S}, {"n_obs", f.O},
                {"n_actions", f.A}, {"horizon", f.H}, {"seed", f.env_seed}};
    if (f.env_kind == "observable") j["env"]["sigma_target"] = f.sigma;
    else {
      j["env"]["memory"] = f.env_memory;
      j["env"]["rank_d"] = f.rank_d;
    }
  }
  j["algorithm"] = algorithm.empty() ? "provable" : algorithm;
  j["policy_class"] = {{"memory", f.memory}, {"size", f.size}, {"seed", f.class_seed}};
  j["link_class"] = {{"K", f.K}};
  j["learner"] = {{"T", f.T}, {"m", f.m}, {"radius", f.radius}, {"R", f.R}, {"slack", f.slack}};
  j["seed"] = f.seed;
  j["output_dir"] = f.out.empty() ? std::string("pobilin-out") : f.out;
  return parse_config(j);
}

int run_main(int argc, char** argv) {
  CLI::App app{"pobilin: partially observable bilinear actor-critic toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a tabular POMDP");
  std::string gen_kind = "observable", gen_out, gen_dec_out;
  int gS = 3, gO = 4, gA = 2, gH = 4, gM = 0, grank = 2;
  double gsigma = 0.5;
  std::uint64_t gseed = 13;
  gen->add_option("--kind", gen_kind, "observable | decodable");
  gen->add_option("--states", gS);
  gen->add_option("--obs", gO);
  gen->add_option("--actions", gA);
  gen->add_option("--horizon", gH);
  gen->add_option("--sigma", gsigma);
  gen->add_option("--memory", gM);
  gen->add_option("--rank", grank);
  gen->add_option("--seed", gseed);
  gen->add_option("--out", gen_out, "model JSON path (stdout if omitted)");
  gen->add_option("--decoder-out", gen_dec_out, "decoder JSON path (decodable only)");

  auto* plan = app.add_subcommand("plan", "oracle values for a model");
  std::string plan_model;
  int plan_memory = 1;
  plan->add_option("--model", plan_model, "model JSON")->required();
  plan->add_option("--memory", plan_memory);

  RunFlags rf, rdf;
  auto* run = app.add_subcommand("run", "PROVABLE (or oracle-only via --algorithm)");
  add_run_flags(run, rf);
  run->add_option("--algorithm", rf.algorithm, "provable | oracle-only");
  auto* rund = app.add_subcommand("run-dis", "PROVABLE-DIS on a decodable instance");
  add_run_flags(rund, rdf);
  rdf.env_kind = "decodable";

  auto* design = app.add_subcommand("design", "G-optimal design of candidate vectors");
  std::string des_in, des_out;
  int des_n = 0, des_d = 2;
  std::uint64_t des_seed = 7;
  double des_tol = 1e-3;
  design->add_option("--candidates", des_in, "JSON list of vectors");
  design->add_option("--random", des_n, "number of random Gaussian candidates");
  design->add_option("--dim", des_d);
  design->add_option("--seed", des_seed);
  design->add_option("--tol", des_tol);
  design->add_option("--out", des_out);

  auto* con = app.add_subcommand("contract", "belief contraction experiment");
  std::string con_model, con_prior = "uniform", con_out;
  int con_start = 2, con_t = 3, con_n = 2000;
  std::uint64_t con_seed = 1;
  con->add_option("--model", con_model, "model JSON")->required();
  con->add_option("--start", con_start);
  con->add_option("--t-max", con_t);
  con->add_option("--rollouts", con_n);
  con->add_option("--seed", con_seed);
  con->add_option("--out", con_out, "CSV path (stdout if omitted)");

  auto* psr = app.add_subcommand("psr", "PSR embedding of a model, or validation of a PSR file");
  std::string psr_model, psr_check, psr_out;
  int psr_depth = 3;
  psr->add_option("--model", psr_model, "model JSON to embed");
  psr->add_option("--check", psr_check, "hand-authored PSR JSON to validate");
  psr->add_option("--depth", psr_depth);
  psr->add_option("--out", psr_out);

  auto* rep = app.add_subcommand("report", "markdown report from metrics CSV files");
  std::vector<std::string> rep_in;
  std::string rep_out;
  rep->add_option("metrics", rep_in, "metrics.csv files");
  rep->add_option("--out", rep_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help and version exit 0; any flag error is a configuration error
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*gen) {
    Json j;
    if (gen_kind == "observable") {
      TabularPomdp m = gen_observable_pomdp(gS, gO, gA, gH, gsigma, gseed);
      j = model_to_json(m);
      std::cerr << "digest " << model_digest(m) << "\n";
    } else if (gen_kind == "decodable") {
      DecodableInstance inst = gen_mstep_decodable(gS, gO, gA, gH, gM, grank, gseed);
      j = model_to_json(inst.model);
      if (!gen_dec_out.empty()) write_text_file(gen_dec_out, decoder_to_json(inst.decoder).dump() + "\n");
      std::cerr << "digest " << model_digest(inst.model) << "\n";
    } else {
      throw ConfigError("gen: kind must be observable or decodable");
    }
    emit(j.dump(2) + "\n", gen_out);
  } else if (*plan) {
    TabularPomdp m = model_from_json(read_json_file(plan_model));
    ObservabilityReport ob = observability(m.obs_matrix());
    Json j;
    j["J_global"] = global_optimal_value(m);
    for (int M = 0; M <= plan_memory; ++M) {
      try {
        j["J_memory"][std::to_string(M)] = best_memory_policy(m, M).value;
      } catch (const ResourceError&) {
        j["J_memory"][std::to_string(M)] = nullptr;
      }
    }
    j["sigma1"] = ob.rank == m.n_states ? 1.0 / ob.l1_pinv : 0.0;
    j["sigma_min"] = ob.sigma_min;
    std::cout << j.dump(2) << "\n";
  } else if (*run || *rund) {
    ExperimentConfig c = *run ? config_from_flags(rf, rf.algorithm) : config_from_flags(rdf, "provable-dis");
    ExperimentResult r = run_experiment(c);
    if (r.run) std::cout << r.run->summary_json() << "\n";
    else std::cout << r.oracle.dump(2) << "\n";
  } else if (*design) {
    std::vector<Vec> cand;
    if (!des_in.empty()) {
      Json j = read_json_file(des_in);
      if (!j.is_array()) throw ConfigError("design: candidates must be a JSON list of vectors");
      for (const Json& v : j) cand.push_back(vec_from_json(v, "candidate"));
    } else if (des_n > 0) {
      Rng rng = Rng::substream(des_seed, 0xde5);
      for (int i = 0; i < des_n; ++i) {
        Vec v(des_d);
        for (int k = 0; k < des_d; ++k) v[k] = rng.normal();
        cand.push_back(v);
      }
    } else {
      throw ConfigError("design: give --candidates or --random");
    }
    DesignOptions opt;
    opt.tol = des_tol;
    emit(design_to_json(g_optimal_design(cand, opt)).dump(2) + "\n", des_out);
  } else if (*con) {
    TabularPomdp m = model_from_json(read_json_file(con_model));
    ContractionOptions opt;
    opt.start_h = con_start;
    opt.t_max = con_t;
    opt.n_rollouts = con_n;
    opt.seed = con_seed;
    ContractionResult res = contraction_experiment(m, uniform_policy(MemorySpace(m, 0)), opt);
    std::string csv = "t,l1_mean,l1_se,potential_mean,potential_se,diff_mean,diff_se,infinite\n";
    char buf[256];
    for (const auto& r : res.rows) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n", r.t, r.l1_mean, r.l1_se,
                    r.pot_mean, r.pot_se, r.diff_mean, r.diff_se, r.infinite);
      csv += buf;
    }
    emit(csv, con_out);
    std::cerr << "sigma1 " << res.sigma1_l1 << " monotone " << (res.monotone ? "yes" : "no") << "\n";
  } else if (*psr) {
    if (!psr_check.empty()) {
      LinearPsr p = psr_from_json(read_json_file(psr_check), psr_depth);
      std::cout << "valid PSR of dimension " << p.dim << "\n";
    } else if (!psr_model.empty()) {
      LinearPsr p = pomdp_to_psr(model_from_json(read_json_file(psr_model)));
      emit(psr_to_json(p).dump(2) + "\n", psr_out);
    } else {
      throw ConfigError("psr: give --model or --check");
    }
  } else if (*rep) {
    std::vector<std::string> texts;
    for (const auto& p : rep_in) texts.push_back(read_text_file(p));
    emit(report(texts, rep_in), rep_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleConstraint& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const ResourceError& e) {
    std::cerr << "resource cap: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
