#include "pobilin/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace pobilin {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string short_num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void only_keys(const Json& j, const char* where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(std::string(where) + ": unknown field '" + it.key() + "'");
}

template <class T>
void take(const Json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if (std::is_unsigned_v<T> && v.get<long long>() < 0) throw ConfigError("");
    } else {
      if (!v.is_number()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Json ExperimentConfig::to_json() const {
  nlohmann::ordered_json e;
  e["type"] = env.type;
  if (env.type == "generator") {
    e["generator"] = env.generator;
    e["n_states"] = env.n_states;
    e["n_obs"] = env.n_obs;
    e["n_actions"] = env.n_actions;
    e["horizon"] = env.horizon;
    if (env.generator == "observable") e["sigma_target"] = env.sigma_target;
    else {
      e["memory"] = env.memory;
      e["rank_d"] = env.rank_d;
    }
    e["seed"] = env.seed;
  } else {
    if (!env.path.empty()) e["path"] = env.path;
    e["model"] = env.model;
  }
  nlohmann::ordered_json j;
  j["env"] = e;
  j["algorithm"] = algorithm;
  j["policy_class"] = {{"memory", memory}, {"size", class_size}, {"seed", class_seed}};
  j["link_class"] = {{"K", K}, {"grid_resolution", grid_resolution}, {"grid_bound", grid_bound}};
  nlohmann::ordered_json l;
  l["T"] = T;
  l["m"] = m;
  l["m0"] = m0;
  l["radius"] = radius;
  l["R"] = R;
  l["slack"] = slack;
  l["calibration_rollins"] = calibration_rollins;
  l["delta"] = delta;
  l["rank"] = rank_override;
  l["lambda"] = lambda;
  j["learner"] = l;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return Json::parse(j.dump());
}

ExperimentConfig parse_config(const Json& in) {
  const Json& j = in.contains("config") && in.at("config").is_object() ? in.at("config") : in;
  only_keys(j, "config", {"env", "algorithm", "policy_class", "link_class", "learner", "seed", "output_dir"});
  ExperimentConfig c;
  if (!j.contains("env")) throw ConfigError("config: missing 'env'");
  const Json& e = j.at("env");
  only_keys(e, "env", {"type", "generator", "n_states", "n_obs", "n_actions", "horizon", "sigma_target", "memory",
                       "rank_d", "seed", "path", "model"});
  take(e, "type", c.env.type, "env");
  if (c.env.type == "generator") {
    take(e, "generator", c.env.generator, "env");
    if (c.env.generator != "observable" && c.env.generator != "decodable")
      throw ConfigError("env: generator must be 'observable' or 'decodable'");
    take(e, "n_states", c.env.n_states, "env");
    take(e, "n_obs", c.env.n_obs, "env");
    take(e, "n_actions", c.env.n_actions, "env");
    take(e, "horizon", c.env.horizon, "env");
    take(e, "sigma_target", c.env.sigma_target, "env");
    take(e, "memory", c.env.memory, "env");
    take(e, "rank_d", c.env.rank_d, "env");
    take(e, "seed", c.env.seed, "env");
  } else if (c.env.type == "file") {
    take(e, "path", c.env.path, "env");
    if (e.contains("model")) c.env.model = e.at("model");
    else if (c.env.path.empty()) throw ConfigError("env: file type needs 'path'");
    else c.env.model = read_json_file(c.env.path);
  } else if (c.env.type == "inline") {
    if (!e.contains("model")) throw ConfigError("env: inline type needs 'model'");
    c.env.model = e.at("model");
  } else {
    throw ConfigError("env: type must be 'generator', 'file' or 'inline'");
  }
  take(j, "algorithm", c.algorithm, "config");
  if (c.algorithm != "provable" && c.algorithm != "provable-dis" && c.algorithm != "oracle-only")
    throw ConfigError("config: algorithm must be 'provable', 'provable-dis' or 'oracle-only'");
  if (j.contains("policy_class")) {
    const Json& p = j.at("policy_class");
    only_keys(p, "policy_class", {"memory", "size", "seed"});
    take(p, "memory", c.memory, "policy_class");
    take(p, "size", c.class_size, "policy_class");
    take(p, "seed", c.class_seed, "policy_class");
  }
  if (j.contains("link_class")) {
    const Json& l = j.at("link_class");
    only_keys(l, "link_class", {"K", "grid_resolution", "grid_bound"});
    take(l, "K", c.K, "link_class");
    take(l, "grid_resolution", c.grid_resolution, "link_class");
    take(l, "grid_bound", c.grid_bound, "link_class");
  }
  if (j.contains("learner")) {
    const Json& l = j.at("learner");
    only_keys(l, "learner", {"T", "m", "m0", "radius", "R", "slack", "calibration_rollins", "delta", "rank", "lambda"});
    take(l, "T", c.T, "learner");
    take(l, "m", c.m, "learner");
    take(l, "m0", c.m0, "learner");
    take(l, "radius", c.radius, "learner");
    take(l, "R", c.R, "learner");
    take(l, "slack", c.slack, "learner");
    take(l, "calibration_rollins", c.calibration_rollins, "learner");
    take(l, "delta", c.delta, "learner");
    take(l, "rank", c.rank_override, "learner");
    take(l, "lambda", c.lambda, "learner");
  }
  take(j, "seed", c.seed, "config");
  take(j, "output_dir", c.output_dir, "config");

  if (c.memory < 0 || c.class_size < 1 || c.K < 1) throw ConfigError("config: memory >= 0, class size >= 1 and K >= 1 required");
  if (c.T < 0 || c.m < 1 || c.m0 < 0) throw ConfigError("learner: T >= 0, m >= 1 and m0 >= 0 required");
  if (c.radius != "calibrate" && c.radius != "theory" && c.radius != "fixed")
    throw ConfigError("learner: radius must be 'calibrate', 'theory' or 'fixed'");
  if (c.radius == "fixed" && !(c.R >= 0.0)) throw ConfigError("learner: fixed radius needs R >= 0");
  if (!(c.slack > 0.0) || c.calibration_rollins < 1 || !(c.delta > 0.0 && c.delta < 1.0) || !(c.lambda > 0.0))
    throw ConfigError("learner: slack > 0, calibration_rollins >= 1, delta in (0,1), lambda > 0 required");
  if (c.algorithm == "provable-dis" && !(c.env.type == "generator" && c.env.generator == "decodable"))
    throw ConfigError("provable-dis builds its discriminators through the decoder; use the decodable generator");
  if (c.algorithm == "provable-dis" && c.K != 1) throw ConfigError("provable-dis uses one-step links (K = 1)");
  return c;
}

TabularPomdp resolve_model(const EnvSpec& env, std::optional<Decoder>* decoder) {
  if (env.type != "generator") return model_from_json(env.model);
  if (env.generator == "observable")
    return gen_observable_pomdp(env.n_states, env.n_obs, env.n_actions, env.horizon, env.sigma_target, env.seed);
  DecodableInstance inst =
      gen_mstep_decodable(env.n_states, env.n_obs, env.n_actions, env.horizon, env.memory, env.rank_d, env.seed);
  if (decoder) *decoder = inst.decoder;
  return inst.model;
}

BudgetInputs budget_inputs(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links) {
  BudgetInputs b;
  const MemorySpace& sp = cls.at(0).space;
  for (int h = 1; h <= m.horizon; ++h) b.d = std::max<long>(b.d, sp.z_size(h) * m.n_states);
  for (const auto& pi : cls)
    for (const Mat& x : occupancy(m, pi)) b.B_X = std::max(b.B_X, x.norm());
  for (size_t i = 0; i < cls.size(); ++i) {
    int star = links.policy_link.empty() ? -1 : links.policy_link[i];
    if (star < 0) continue;
    for (const LinkFunction& g : links.links)
      for (int h = 1; h <= m.horizon; ++h)
        b.B_W = std::max(b.B_W, bilinear_W(m, cls[i], g, h, links.links[star]).norm());
  }
  return b;
}

std::string metrics_csv(const RunResult& r, int H, long m, long m0) {
  std::ostringstream os;
  os << "t";
  for (int h = 1; h <= H; ++h) os << ",sigma_max_h" << h;
  os << ",J,suboptimality,feasible,elapsed_samples\n";
  for (const TraceRow& row : r.trace) {
    os << row.t;
    for (int h = 0; h < H; ++h) os << ',' << num(row.sigma_max[h]);
    os << ',' << num(row.J) << ',' << num(r.J_star - row.J) << ',' << (row.star_feasible ? 1 : 0) << ','
       << (m0 + static_cast<long>(row.t - 1) * H * m) << '\n';
  }
  return os.str();
}

namespace {

std::string run_report(const ExperimentConfig& cfg, const RunResult& r, const Json& resolved, int H) {
  std::ostringstream os;
  os << "# Run report\n\n";
  os << "algorithm: " << cfg.algorithm << "  \n";
  os << "T = " << r.trace.size() << ", m = " << cfg.m << ", R = " << short_num(r.R) << " (" << cfg.radius << ")\n\n";
  os << "## Outcome\n\n";
  os << "| quantity | value |\n|---|---|\n";
  os << "| J(pi*) | " << short_num(r.J_star) << " |\n";
  os << "| J(pi-hat) | " << short_num(r.J_hat) << " |\n";
  os << "| suboptimality | " << short_num(r.J_star - r.J_hat) << " |\n";
  os << "| tolerance 0.1 H | " << short_num(0.1 * H) << " |\n";
  os << "| selected iteration | " << r.selected_t << " |\n";
  os << "| best iterate J | " << short_num(r.J_best_iterate) << " |\n\n";
  os << "## Diagnostics\n\n";
  os << "| check | value | holds |\n|---|---|---|\n";
  os << "| elliptical potential lhs <= rhs | " << short_num(r.elliptical.lhs) << " <= " << short_num(r.elliptical.rhs)
     << " | " << (r.elliptical.holds() ? "yes" : "no") << " |\n";
  os << "| optimism J_obj + 2 eps_ini >= J(pi*) | eps_ini = " << short_num(r.eps_ini) << " | "
     << (r.optimism_holds ? "yes" : "no") << " |\n";
  os << "| (pi*, g*) feasible at every t | max |sigma| = " << short_num(r.star_sigma_max) << " | "
     << (r.star_always_feasible ? "yes" : "no") << " |\n";
  if (resolved.contains("B_X"))
    os << "| budget inputs | d = " << resolved["d"].get<int>() << ", B_X = " << short_num(resolved["B_X"].get<double>())
       << ", B_W = " << short_num(resolved["B_W"].get<double>()) << " | |\n";
  os << "\n## Suboptimality trajectory\n\n| t | J | suboptimality | feasible |\n|---|---|---|---|\n";
  const size_t n = r.trace.size();
  const size_t stride = n > 40 ? (n + 39) / 40 : 1;
  for (size_t k = 0; k < n; ++k) {
    if (k % stride != 0 && k + 1 != n) continue;
    const TraceRow& row = r.trace[k];
    os << "| " << row.t << " | " << short_num(row.J) << " | " << short_num(r.J_star - row.J) << " | "
       << (row.star_feasible ? 1 : 0) << " |\n";
  }
  return os.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentResult out;
  std::optional<Decoder> dec;
  TabularPomdp m;
  try {
    m = resolve_model(cfg.env, &dec);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  MemorySpace sp(m, cfg.memory);
  Rng crng = Rng::substream(cfg.class_seed, 0xc1a55);
  PolicyClass cls = sample_deterministic_policies(sp, cfg.class_size, crng);

  Json resolved;
  resolved["model_digest"] = model_digest(m);
  resolved["class_size"] = cls.size();
  Mat Ob = m.obs_matrix();
  ObservabilityReport obs = observability(Ob);

  if (cfg.algorithm == "oracle-only") {
    auto [bi, bv] = best_in_class(m, cls);
    out.oracle["J_star"] = bv;
    out.oracle["star_policy"] = bi;
    out.oracle["J_global"] = global_optimal_value(m);
    out.oracle["J_memory_optimum"] = best_memory_policy(m, cfg.memory).value;
    out.oracle["sigma1"] = obs.rank == m.n_states ? 1.0 / obs.l1_pinv : 0.0;
    out.oracle["sigma_min"] = obs.sigma_min;
    std::ostringstream os;
    os << "# Oracle report\n\n| quantity | value |\n|---|---|\n";
    os << "| J(pi*) over the class | " << short_num(bv) << " |\n";
    os << "| J(pi*_gl) | " << short_num(out.oracle["J_global"].get<double>()) << " |\n";
    os << "| best M-memory value | " << short_num(out.oracle["J_memory_optimum"].get<double>()) << " |\n";
    os << "| sigma1 = 1/||O^+||_1 | " << short_num(out.oracle["sigma1"].get<double>()) << " |\n";
    out.report_md = os.str();
  } else {
    const bool dis = cfg.algorithm == "provable-dis";
    LinkClass links = make_link_class(m, cls, cfg.K, cfg.grid_resolution, cfg.grid_bound);
    LearnerConfig lc;
    lc.m = cfg.m;
    lc.m0 = cfg.m0;
    lc.K = cfg.K;
    lc.lambda = cfg.lambda;
    lc.seed = cfg.seed;
    lc.mode = dis ? LearnerMode::Discriminator : (cfg.K == 1 ? LearnerMode::Plain : LearnerMode::MultiStep);
    std::optional<DiscriminatorClass> F;
    if (dis) F = build_complete_discriminators(m, cls, links, *dec);

    BudgetInputs bi = budget_inputs(m, cls, links);
    if (cfg.rank_override > 0) bi.d = cfg.rank_override;
    resolved["d"] = bi.d;
    resolved["B_X"] = bi.B_X;
    resolved["B_W"] = bi.B_W;
    auto eps_of = [&](double R) { return dis ? R : std::sqrt(R); };
    if (cfg.radius == "fixed") {
      lc.R = cfg.R;
    } else if (cfg.radius == "calibrate") {
      // The union multiplier depends on T and T on the radius: iterate to a fixed point.
      int T = cfg.T > 0 ? cfg.T : 1;
      RadiusCalibration rc;
      for (int k = 0; k < 8; ++k) {
        rc = calibrate_radius(m, cls, links, lc, cfg.slack, cfg.calibration_rollins, F ? &*F : nullptr, T, cfg.delta);
        lc.R = rc.R;
        if (cfg.T > 0) break;
        int T2 = compute_iteration_budget(m.horizon, bi.d, bi.B_X, bi.B_W, std::max(1e-12, eps_of(lc.R)));
        if (T2 == T) break;
        T = T2;
      }
      resolved["calibration_max_sigma"] = rc.max_sigma;
      resolved["calibration_max_se"] = rc.max_se;
      resolved["calibration_z"] = rc.z;
    }
    if (cfg.radius == "theory") {
      int T = cfg.T > 0 ? cfg.T : 1;
      for (int k = 0; k < 8; ++k) {
        double r2 = theoretical_radius(static_cast<long>(cls.size()), static_cast<long>(links.links.size()), T,
                                       m.horizon, cfg.m, cfg.delta);
        lc.R = dis ? std::sqrt(r2) : r2;
        if (cfg.T > 0) break;
        T = compute_iteration_budget(m.horizon, bi.d, bi.B_X, bi.B_W, std::max(1e-12, eps_of(lc.R)));
      }
    }
    lc.T = cfg.T > 0 ? cfg.T : compute_iteration_budget(m.horizon, bi.d, bi.B_X, bi.B_W, std::max(1e-12, eps_of(lc.R)));
    resolved["T"] = lc.T;
    resolved["R"] = lc.R;
    try {
      out.run = dis ? provable_dis_run(m, cls, links, *F, lc) : provable_run(m, cls, links, lc);
    } catch (const InfeasibleConstraint& e) {
      throw InfeasibleConstraint(cfg.algorithm + ": " + e.what(), e.iteration, e.min_radius);
    }
    out.metrics_csv = metrics_csv(*out.run, m.horizon, cfg.m, lc.m0 > 0 ? lc.m0 : cfg.m);
    out.report_md = run_report(cfg, *out.run, resolved, m.horizon);
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json man;
  man["tool"] = "pobilin";
  man["version"] = "1.0.0";
  man["config"] = cfg.to_json();
  man["resolved"] = resolved;
  if (!out.oracle.is_null()) man["oracle"] = out.oracle;
  if (out.run) man["summary"] = Json::parse(out.run->summary_json());
  man["wall_seconds"] = wall;
  man["threads"] = thread_count();
  out.manifest = Json::parse(man.dump());

  if (write_files) {
    std::filesystem::create_directories(cfg.output_dir);
    auto path = [&](const char* f) { return (std::filesystem::path(cfg.output_dir) / f).string(); };
    write_text_file(path("manifest.json"), man.dump(2) + "\n");
    write_text_file(path("report.md"), out.report_md);
    if (out.run) {
      write_text_file(path("metrics.csv"), out.metrics_csv);
      write_text_file(path("trace.csv"), out.run->trace_csv());
    } else {
      write_text_file(path("oracle.json"), out.oracle.dump(2) + "\n");
    }
  }
  return out;
}

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table parse_csv(const std::string& text, const std::string& name) {
  Table t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) t.header = split(line);
    else {
      auto r = split(line);
      if (r.size() != t.header.size()) throw ConfigError(name + ": row width differs from the header");
      t.rows.push_back(r);
    }
  }
  if (t.header.empty() || t.rows.empty()) throw ConfigError(name + ": no metric rows");
  return t;
}

int column(const Table& t, const std::string& c) {
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == c) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::string report(const std::vector<std::string>& csv_texts, const std::vector<std::string>& names) {
  if (csv_texts.empty()) throw ConfigError("report: no metrics files given");
  std::vector<Table> tabs;
  for (size_t i = 0; i < csv_texts.size(); ++i) tabs.push_back(parse_csv(csv_texts[i], names[i]));
  std::ostringstream os;
  os << "# Metrics report\n";
  for (size_t i = 0; i < tabs.size(); ++i) {
    const Table& t = tabs[i];
    os << "\n## " << names[i] << "\n\n|";
    for (const auto& h : t.header) os << ' ' << h << " |";
    os << "\n|";
    for (size_t k = 0; k < t.header.size(); ++k) os << "---|";
    os << '\n';
    for (const auto& r : t.rows) {
      os << '|';
      for (const auto& c : r) os << ' ' << c << " |";
      os << '\n';
    }
    os << "\n| metric | first | last | min | max | mean |\n|---|---|---|---|---|---|\n";
    for (size_t k = 0; k < t.header.size(); ++k) {
      if (t.header[k] == "t") continue;
      std::vector<double> v;
      for (const auto& r : t.rows) v.push_back(std::strtod(r[k].c_str(), nullptr));
      double lo = v[0], hi = v[0], s = 0.0;
      for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        s += x;
      }
      os << "| " << t.header[k] << " | " << short_num(v.front()) << " | " << short_num(v.back()) << " | "
         << short_num(lo) << " | " << short_num(hi) << " | " << short_num(s / v.size()) << " |\n";
    }
  }
  if (tabs.size() >= 2) {
    std::map<long, std::vector<std::string>> joined;
    for (size_t i = 0; i < tabs.size(); ++i) {
      int ct = column(tabs[i], "t"), cs = column(tabs[i], "suboptimality");
      if (ct < 0 || cs < 0) throw ConfigError("report: " + names[i] + " lacks t / suboptimality columns");
      for (const auto& r : tabs[i].rows) {
        auto& slot = joined[std::strtol(r[ct].c_str(), nullptr, 10)];
        slot.resize(tabs.size());
        slot[i] = r[cs];
      }
    }
    os << "\n## Suboptimality comparison\n\n| t |";
    for (const auto& n : names) os << ' ' << n << " |";
    os << "\n|---|";
    for (size_t i = 0; i < names.size(); ++i) os << "---|";
    os << '\n';
    for (auto& [t, vals] : joined) {
      vals.resize(tabs.size());
      os << "| " << t << " |";
      for (const auto& v : vals) os << ' ' << v << " |";
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace pobilin
