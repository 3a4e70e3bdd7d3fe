#include "pobilin/io.hpp"

#include <fstream>
#include <sstream>

namespace pobilin {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return j.at(key);
}

int int_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer()) throw ConfigError(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

Json mat_to_json(const Mat& X) {
  Json j = Json::array();
  for (long i = 0; i < X.rows(); ++i) {
    Json row = Json::array();
    for (long k = 0; k < X.cols(); ++k) row.push_back(X(i, k));
    j.push_back(row);
  }
  return j;
}

Mat mat_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be a nested array");
  if (j.empty()) return Mat(0, 0);
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat X(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(std::string(what) + " rows must have equal length");
    for (size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(std::string(what) + " entries must be numbers");
      X(i, k) = j[i][k].get<double>();
    }
  }
  return X;
}

Json vec_to_json(const Vec& v) {
  Json j = Json::array();
  for (long i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec vec_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be an array");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " entries must be numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Json model_to_json(const TabularPomdp& m) {
  Json j;
  j["n_states"] = m.n_states;
  j["n_obs"] = m.n_obs;
  j["n_actions"] = m.n_actions;
  j["horizon"] = m.horizon;
  Json tr = Json::array();
  for (const Mat& t : m.transition) tr.push_back(mat_to_json(t));
  j["transition"] = tr;
  j["emission"] = mat_to_json(m.emission);
  j["reward"] = mat_to_json(m.reward);
  j["init_belief"] = vec_to_json(m.init_belief);
  return j;
}

TabularPomdp model_from_json(const Json& j) {
  TabularPomdp m;
  m.n_states = int_field(j, "n_states");
  m.n_obs = int_field(j, "n_obs");
  m.n_actions = int_field(j, "n_actions");
  m.horizon = int_field(j, "horizon");
  const Json& tr = field(j, "transition");
  if (!tr.is_array()) throw ConfigError("transition must be an array of matrices");
  for (const Json& t : tr) m.transition.push_back(mat_from_json(t, "transition"));
  m.emission = mat_from_json(field(j, "emission"), "emission");
  m.reward = mat_from_json(field(j, "reward"), "reward");
  m.init_belief = vec_from_json(field(j, "init_belief"), "init_belief");
  m.validate();
  return m;
}

Json policy_to_json(const MMemoryPolicy& pi) {
  Json j;
  j["n_obs"] = pi.space.n_obs;
  j["n_actions"] = pi.space.n_actions;
  j["memory"] = pi.space.memory;
  j["horizon"] = pi.space.horizon;
  Json t = Json::array();
  for (const Mat& x : pi.tables) t.push_back(mat_to_json(x));
  j["tables"] = t;
  return j;
}

MMemoryPolicy policy_from_json(const Json& j) {
  MMemoryPolicy pi;
  pi.space = MemorySpace(int_field(j, "n_obs"), int_field(j, "n_actions"), int_field(j, "memory"), int_field(j, "horizon"));
  for (const Json& t : field(j, "tables")) pi.tables.push_back(mat_from_json(t, "policy table"));
  pi.validate();
  return pi;
}

Json link_to_json(const LinkFunction& g) {
  Json j;
  j["K"] = g.K;
  j["memory"] = g.space.memory;
  Json t = Json::array();
  for (const Mat& x : g.theta) t.push_back(mat_to_json(x));
  j["theta"] = t;
  return j;
}

Json decoder_to_json(const Decoder& d) {
  Json j;
  j["memory"] = d.memory;
  j["map"] = d.map;
  return j;
}

Json psr_to_json(const LinearPsr& p) {
  Json j;
  j["dim"] = p.dim;
  j["n_obs"] = p.n_obs;
  j["n_actions"] = p.n_actions;
  j["q1"] = vec_to_json(p.q1);
  Json mo = Json::array();
  for (const Vec& v : p.m_o) mo.push_back(vec_to_json(v));
  j["m_o"] = mo;
  Json M = Json::array();
  for (const auto& row : p.M) {
    Json r = Json::array();
    for (const Mat& x : row) r.push_back(mat_to_json(x));
    M.push_back(r);
  }
  j["M"] = M;
  return j;
}

LinearPsr psr_from_json(const Json& j, int validate_depth) {
  if (j.contains("tests")) {
    const Json& ts = j.at("tests");
    if (!ts.is_array()) throw ConfigError("psr: tests must be an array");
    for (const Json& t : ts) {
      const Json& obs = t.is_object() && t.contains("obs") ? t.at("obs") : t;
      if (!obs.is_array() || obs.size() != 1)
        throw ConfigError("hand-authored PSRs accept one-step observation tests only; multi-step tests need a POMDP "
                          "embedding");
    }
  }
  LinearPsr p;
  p.dim = int_field(j, "dim");
  p.n_obs = int_field(j, "n_obs");
  p.n_actions = int_field(j, "n_actions");
  p.q1 = vec_from_json(field(j, "q1"), "q1");
  for (const Json& v : field(j, "m_o")) p.m_o.push_back(vec_from_json(v, "m_o"));
  for (const Json& row : field(j, "M")) {
    std::vector<Mat> r;
    for (const Json& x : row) r.push_back(mat_from_json(x, "M"));
    p.M.push_back(r);
  }
  p.validate(validate_depth);
  return p;
}

Json lqg_model_to_json(const LqgModel& m) {
  Json j;
  j["A"] = mat_to_json(m.A);
  j["B"] = mat_to_json(m.B);
  j["C"] = mat_to_json(m.C);
  j["Q"] = mat_to_json(m.Q);
  j["R"] = mat_to_json(m.R);
  j["Sigma_eps"] = mat_to_json(m.Sigma_eps);
  j["Sigma_tau"] = mat_to_json(m.Sigma_tau);
  if (m.Sigma_init.size()) j["Sigma_init"] = mat_to_json(m.Sigma_init);
  j["H"] = m.horizon;
  return j;
}

LqgModel lqg_model_from_json(const Json& j) {
  LqgModel m;
  m.A = mat_from_json(field(j, "A"), "A");
  m.B = mat_from_json(field(j, "B"), "B");
  m.C = mat_from_json(field(j, "C"), "C");
  m.Q = mat_from_json(field(j, "Q"), "Q");
  m.R = mat_from_json(field(j, "R"), "R");
  m.Sigma_eps = mat_from_json(field(j, "Sigma_eps"), "Sigma_eps");
  m.Sigma_tau = mat_from_json(field(j, "Sigma_tau"), "Sigma_tau");
  if (j.contains("Sigma_init")) m.Sigma_init = mat_from_json(j.at("Sigma_init"), "Sigma_init");
  m.horizon = int_field(j, "H");
  m.validate();
  return m;
}

Json linear_policy_to_json(const LinearPolicy& p) {
  Json j;
  j["memory"] = p.memory;
  Json u1 = Json::array(), u2 = Json::array();
  for (const Mat& x : p.U1) u1.push_back(mat_to_json(x));
  for (const Mat& x : p.U2) u2.push_back(mat_to_json(x));
  j["U1"] = u1;
  j["U2"] = u2;
  return j;
}

LinearPolicy linear_policy_from_json(const Json& j) {
  LinearPolicy p;
  p.memory = int_field(j, "memory");
  for (const Json& x : field(j, "U1")) p.U1.push_back(mat_from_json(x, "U1"));
  for (const Json& x : field(j, "U2")) p.U2.push_back(mat_from_json(x, "U2"));
  return p;
}

Json design_to_json(const DesignResult& d) {
  Json j;
  j["dim"] = d.dim;
  j["support"] = d.support;
  j["weights"] = vec_to_json(d.weights);
  j["info_matrix"] = mat_to_json(d.info_matrix);
  j["max_leverage"] = d.max_leverage;
  j["iterations"] = d.iterations;
  return j;
}

Json alpha_design_to_json(const AlphaDesign& ad) {
  Json j;
  j["d_a"] = ad.d_a;
  Json atoms = Json::array();
  for (const Vec& a : ad.atoms) atoms.push_back(vec_to_json(a));
  j["atoms"] = atoms;
  j["rho"] = vec_to_json(ad.rho);
  j["design"] = design_to_json(ad.design);
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace pobilin
