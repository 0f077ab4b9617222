#include "reflex/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <toml.hpp>

namespace reflex {

namespace {

// Reads typed keys from one table and rejects the ones nobody asked for.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  [[nodiscard]] const toml::node* node(const char* key) {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  void get(const char* key, double& out) {
    if (const toml::node* n = node(key)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(key, "a number");
      }
    }
  }
  void get(const char* key, int& out) {
    if (const toml::node* n = node(key)) {
      auto v = n->as_integer();
      if (!v || v->get() < std::numeric_limits<int>::min() || v->get() > std::numeric_limits<int>::max()) {
        fail(key, "an integer");
      }
      out = static_cast<int>(v->get());
    }
  }
  void get(const char* key, uint64_t& out) {
    if (const toml::node* n = node(key)) {
      auto v = n->as_integer();
      if (!v || v->get() < 0) fail(key, "a non-negative integer");
      out = static_cast<uint64_t>(v->get());
    }
  }
  void get(const char* key, bool& out) {
    if (const toml::node* n = node(key)) {
      auto v = n->as_boolean();
      if (!v) fail(key, "a boolean");
      out = v->get();
    }
  }
  void get(const char* key, std::string& out) {
    if (const toml::node* n = node(key)) {
      auto v = n->as_string();
      if (!v) fail(key, "a string");
      out = v->get();
    }
  }
  void get(const char* key, Vec3& out) {
    if (const toml::node* n = node(key)) {
      const toml::array* a = n->as_array();
      if (!a || a->size() != 3) fail(key, "an array of 3 numbers");
      for (int i = 0; i < 3; ++i) {
        auto v = a->get(i)->value<double>();
        if (!v) fail(key, "an array of 3 numbers");
        out[i] = *v;
      }
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const toml::node* n = node(key)) {
      const toml::array* a = n->as_array();
      if (!a) fail(key, "an array of integers");
      out.clear();
      for (const toml::node& e : *a) {
        auto v = e.as_integer();
        if (!v) fail(key, "an array of integers");
        out.push_back(static_cast<int>(v->get()));
      }
    }
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (const toml::node* n = node(key)) {
      const toml::array* a = n->as_array();
      if (!a) fail(key, "an array of strings");
      out.clear();
      for (const toml::node& e : *a) {
        auto v = e.as_string();
        if (!v) fail(key, "an array of strings");
        out.push_back(v->get());
      }
    }
  }
  template <size_t N>
  void get(const char* key, std::array<int, N>& out) {
    std::vector<int> v;
    get(key, v);
    if (node(key)) {
      if (v.size() != N) fail(key, fmt::format("an array of {} integers", N));
      std::copy(v.begin(), v.end(), out.begin());
    }
  }

  [[nodiscard]] const toml::table* table(const char* key) {
    const toml::node* n = node(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(key, "a table");
    return n->as_table();
  }

  // Throws on any key that was never requested.
  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError(fmt::format("unknown key '{}{}'", prefix(), k.str()));
      }
    }
  }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(fmt::format("'{}{}' must be {}", prefix(), key, what));
  }

 private:
  [[nodiscard]] std::string prefix() const { return name_.empty() ? "" : name_ + "."; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

ObjectiveKind parse_kind(const std::string& s) {
  for (ObjectiveKind k : {ObjectiveKind::Stealth, ObjectiveKind::MaximizeTowardTarget,
                          ObjectiveKind::DeflectFromPoint}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError(fmt::format("unknown objective kind '{}'", s));
}

void read_target(Section& objective, ReflectivitySpec& spec) {
  const toml::table* t = objective.table("target");
  if (!t) return;
  Section target(t, "objective.target");
  std::string type;
  target.get("type", type);
  if (type == "point") {
    TargetPoint p{Vec3::Zero()};
    target.get("q", p.q);
    spec.target = p;
  } else if (type == "segment") {
    TargetSegment s{Vec3::Zero(), Vec3::Zero()};
    target.get("q1", s.q1);
    target.get("q2", s.q2);
    spec.target = s;
  } else if (type == "plane") {
    TargetPlane p{Vec3::Zero(), Vec3::UnitZ()};
    target.get("point", p.point);
    target.get("normal", p.normal);
    spec.target = p;
  } else {
    throw ConfigError(fmt::format("objective.target.type must be point, segment or plane, got '{}'", type));
  }
  target.finish();
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string vec(const Vec3& v) { return fmt::format("[{}, {}, {}]", num(v.x()), num(v.y()), num(v.z())); }

template <class Range, class F>
std::string list(const Range& r, F&& f) {
  std::string out = "[";
  bool first = true;
  for (const auto& x : r) {
    if (!first) out += ", ";
    out += f(x);
    first = false;
  }
  return out + "]";
}

}  // namespace

void RunConfig::validate() const {
  if (input.empty()) throw ConfigError("run.input is required");
  if (!std::filesystem::exists(input)) {
    throw ConfigError(fmt::format("input mesh not found: {}", input.string()));
  }
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be >= 0");
  if (render.width < 1 || render.height < 1) throw ConfigError("render size must be positive");
  if (!(render.fov_deg > 0.0 && render.fov_deg < 180.0)) throw ConfigError("render.fov_deg must be in (0, 180)");
  if (!(render.exposure > 0.0)) throw ConfigError("render.exposure must be positive");
  if ((render.target - render.eye).norm() < 1e-12) throw ConfigError("render eye and target coincide");
  if (baselines.updates < 0) throw ConfigError("baselines.updates must be >= 0");
  for (const std::string& s : baselines.strategies) {
    if (std::find(kStrategies.begin(), kStrategies.end(), s) == kStrategies.end()) {
      throw ConfigError(fmt::format("unknown strategy '{}'", s));
    }
  }
  for (const auto& [name, _] : baselines.seeds) {
    if (std::find(kStrategies.begin(), kStrategies.end(), name) == kStrategies.end()) {
      throw ConfigError(fmt::format("baselines.seeds names unknown strategy '{}'", name));
    }
  }
  for (int v : fixed_vertices) {
    if (v < 0) throw ConfigError("run.fixed_vertices must be non-negative");
  }
  try {
    params.validate();
    problem.brdf.validate();
    problem.spec.validate();
    if (!(problem.emitter_radiance > 0.0)) throw std::invalid_argument("emitter radiance must be positive");
    if (problem.band_axis.norm() < 1e-12) throw std::invalid_argument("band axis must be non-zero");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Problem RunConfig::problem_for(const Mesh& mesh) const {
  Problem p = problem;
  p.seed = seed;
  p.band_axis = problem.band_axis.normalized();
  p.constraints.clear();
  for (int v : fixed_vertices) {
    if (v >= mesh.vertex_count()) {
      throw ConfigError(fmt::format("fixed vertex {} out of range ({} vertices)", v, mesh.vertex_count()));
    }
    p.constraints.push_back({v, mesh.vertices[v]});
  }
  return p;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("config parse error at line {}: {}", e.source().begin.line,
                                  e.description()));
  }
  RunConfig c;
  Section top(&root, "");

  Section run(top.table("run"), "run");
  std::string input, output;
  run.get("input", input);
  run.get("output", output);
  if (!input.empty()) {
    c.input = input;
    if (c.input.is_relative() && !base_dir.empty()) c.input = base_dir / c.input;
    c.input = c.input.lexically_normal();
  }
  if (!output.empty()) c.output = output;
  run.get("normalize", c.normalize);
  run.get("seed", c.seed);
  run.get("checkpoint_every", c.checkpoint_every);
  run.get("fixed_vertices", c.fixed_vertices);
  run.finish();

  Section objective(top.table("objective"), "objective");
  std::string kind = to_string(c.problem.spec.kind);
  objective.get("kind", kind);
  c.problem.spec.kind = parse_kind(kind);
  objective.get("l_star", c.problem.spec.l_star);
  objective.get("epsilon", c.problem.spec.epsilon);
  read_target(objective, c.problem.spec);
  objective.finish();

  Section brdf(top.table("brdf"), "brdf");
  brdf.get("kd", c.problem.brdf.kd);
  brdf.get("ks", c.problem.brdf.ks);
  brdf.get("exponent", c.problem.brdf.exponent);
  brdf.finish();

  Section light(top.table("light"), "light");
  light.get("band_axis", c.problem.band_axis);
  light.get("theta0_deg", c.params.theta0_deg);
  light.get("emitter_radiance", c.problem.emitter_radiance);
  light.finish();

  Section opt(top.table("optimizer"), "optimizer");
  HyperParams& p = c.params;
  opt.get("eta", p.eta);
  opt.get("beta", p.beta);
  opt.get("lambda_style", p.lambda_style);
  opt.get("tv_alpha", p.tv_alpha);
  opt.get("tv_iters", p.tv_iters);
  opt.get("n_gradient", p.n_gradient);
  opt.get("n_path", p.n_path);
  opt.get("n_dir", p.n_dir);
  opt.get("eval_n_dir", p.eval_n_dir);
  opt.get("stage_iters", p.stage_iters);
  opt.get("split_fraction", p.split_fraction);
  opt.get("arap_iters", p.arap_iters);
  opt.finish();

  Section render(top.table("render"), "render");
  render.get("width", c.render.width);
  render.get("height", c.render.height);
  render.get("eye", c.render.eye);
  render.get("target", c.render.target);
  render.get("up", c.render.up);
  render.get("fov_deg", c.render.fov_deg);
  render.get("exposure", c.render.exposure);
  render.finish();

  Section base(top.table("baselines"), "baselines");
  base.get("updates", c.baselines.updates);
  base.get("strategies", c.baselines.strategies);
  base.get("match_reduction", c.baselines.match_reduction);
  base.get("eta", p.baseline_eta);
  base.get("mu", p.mu);
  if (const toml::table* seeds = base.table("seeds")) {
    Section s(seeds, "baselines.seeds");
    for (const std::string& name : kStrategies) {
      uint64_t v = 0;
      if (s.node(name.c_str())) {
        s.get(name.c_str(), v);
        c.baselines.seeds[name] = v;
      }
    }
    s.finish();
  }
  base.finish();

  top.finish();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string to_toml(const RunConfig& c) {
  const HyperParams& p = c.params;
  const ReflectivitySpec& spec = c.problem.spec;
  std::string out;
  out += "[run]\n";
  out += fmt::format("input = {}\n", quote(c.input.string()));
  out += fmt::format("output = {}\n", quote(c.output.string()));
  out += fmt::format("normalize = {}\n", c.normalize);
  out += fmt::format("seed = {}\n", c.seed);
  out += fmt::format("checkpoint_every = {}\n", c.checkpoint_every);
  out += fmt::format("fixed_vertices = {}\n", list(c.fixed_vertices, [](int v) { return std::to_string(v); }));

  out += "\n[objective]\n";
  out += fmt::format("kind = {}\n", quote(to_string(spec.kind)));
  out += fmt::format("l_star = {}\n", num(spec.l_star));
  out += fmt::format("epsilon = {}\n", num(spec.epsilon));
  if (const auto* t = std::get_if<TargetPoint>(&spec.target)) {
    out += fmt::format("\n[objective.target]\ntype = \"point\"\nq = {}\n", vec(t->q));
  } else if (const auto* s = std::get_if<TargetSegment>(&spec.target)) {
    out += fmt::format("\n[objective.target]\ntype = \"segment\"\nq1 = {}\nq2 = {}\n", vec(s->q1), vec(s->q2));
  } else if (const auto* pl = std::get_if<TargetPlane>(&spec.target)) {
    out += fmt::format("\n[objective.target]\ntype = \"plane\"\npoint = {}\nnormal = {}\n", vec(pl->point),
                       vec(pl->normal));
  }

  out += "\n[brdf]\n";
  out += fmt::format("kd = {}\nks = {}\nexponent = {}\n", num(c.problem.brdf.kd), num(c.problem.brdf.ks),
                     num(c.problem.brdf.exponent));

  out += "\n[light]\n";
  out += fmt::format("band_axis = {}\ntheta0_deg = {}\nemitter_radiance = {}\n", vec(c.problem.band_axis),
                     num(p.theta0_deg), num(c.problem.emitter_radiance));

  out += "\n[optimizer]\n";
  out += fmt::format("eta = {}\nbeta = {}\nlambda_style = {}\ntv_alpha = {}\ntv_iters = {}\n", num(p.eta),
                     num(p.beta), num(p.lambda_style), num(p.tv_alpha), p.tv_iters);
  out += fmt::format("n_gradient = {}\nn_path = {}\nn_dir = {}\neval_n_dir = {}\n", p.n_gradient, p.n_path,
                     p.n_dir, p.eval_n_dir);
  out += fmt::format("stage_iters = [{}, {}, {}]\n", p.stage_iters[0], p.stage_iters[1], p.stage_iters[2]);
  out += fmt::format("split_fraction = {}\narap_iters = {}\n", num(p.split_fraction), p.arap_iters);

  const RenderOptions& r = c.render;
  out += "\n[render]\n";
  out += fmt::format("width = {}\nheight = {}\neye = {}\ntarget = {}\nup = {}\nfov_deg = {}\nexposure = {}\n",
                     r.width, r.height, vec(r.eye), vec(r.target), vec(r.up), num(r.fov_deg), num(r.exposure));

  out += "\n[baselines]\n";
  out += fmt::format("updates = {}\n", c.baselines.updates);
  out += fmt::format("strategies = {}\n", list(c.baselines.strategies, quote));
  out += fmt::format("match_reduction = {}\n", c.baselines.match_reduction);
  out += fmt::format("eta = {}\nmu = {}\n", num(p.baseline_eta), num(p.mu));
  if (!c.baselines.seeds.empty()) {
    out += "\n[baselines.seeds]\n";
    for (const auto& [name, seed] : c.baselines.seeds) out += fmt::format("{} = {}\n", name, seed);
  }
  return out;
}

Mesh load_input(const RunConfig& config) {
  Mesh m = load_obj(config.input);
  return config.normalize ? normalize_scale(m) : m;
}

}  // namespace reflex
