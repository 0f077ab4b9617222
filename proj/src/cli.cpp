#include "reflex/cli.hpp"

#include <atomic>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <boost/system/system_error.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "reflex/baselines.hpp"
#include "reflex/fixtures.hpp"
#include "reflex/parallel.hpp"
#include "reflex/session.hpp"

namespace reflex {

namespace fs = std::filesystem;

namespace {

std::atomic<CommandQueue*> g_active_session{nullptr};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

struct Overrides {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> output;
  std::optional<int> n_dir;
  std::optional<int> checkpoint_every;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "TOML run configuration")->required();
  cmd->add_option("--seed", o.seed, "Random seed (overrides run.seed)");
  cmd->add_option("--output", o.output, "Output directory (overrides run.output)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.output) c.output = *o.output;
  if (o.checkpoint_every) c.checkpoint_every = *o.checkpoint_every;
  if (!c.input.empty()) c.input = fs::absolute(c.input).lexically_normal();
  c.validate();
  return c;
}

struct Prepared {
  Mesh input;
  Problem problem;
};

Prepared prepare(const RunConfig& c) {
  Prepared p{load_input(c), {}};
  p.problem = c.problem_for(p.input);
  try {
    p.problem.validate(p.input);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

class Checkpointer {
 public:
  Checkpointer(fs::path dir, int every) : dir_(std::move(dir)), every_(every) {}

  void maybe(const OptimizerState& s) {
    if (every_ > 0 && s.iteration > 0 && s.iteration % every_ == 0 && s.iteration != last_) save(s);
  }
  void save(const OptimizerState& s) {
    fs::create_directories(dir_);
    save_obj(s.mesh, dir_ / fmt::format("iter_{:04d}.obj", s.iteration));
    last_ = s.iteration;
  }

 private:
  fs::path dir_;
  int every_;
  int last_ = -1;
};

void log_progress(const OptimizerState& s) {
  if (s.history.empty()) return;
  const HistoryRow& r = s.history.back();
  spdlog::info("iter {:3d} {:15s} E_refl {:.5g} +- {:.2g}  disp {:.4g}  faces {}", r.iteration,
               to_string(r.stage), r.e_refl, r.e_std_error, r.mean_vertex_disp, r.face_count);
}

class BatchHooks : public RunHooks {
 public:
  explicit BatchHooks(Checkpointer& ckpt) : ckpt_(ckpt) {}
  void on_snapshot(const OptimizerState& s, const HyperParams&) override {
    log_progress(s);
    ckpt_.maybe(s);
  }

 private:
  Checkpointer& ckpt_;
};

class ServeHooks : public SessionHooks {
 public:
  ServeHooks(SessionServer& server, CommandQueue& commands, Checkpointer& ckpt)
      : SessionHooks(server, commands, [&ckpt](const OptimizerState& s) { ckpt.save(s); }), ckpt_(ckpt) {}
  void on_snapshot(const OptimizerState& s, const HyperParams& p) override {
    SessionHooks::on_snapshot(s, p);
    log_progress(s);
    ckpt_.maybe(s);
  }

 private:
  Checkpointer& ckpt_;
};

int cmd_optimize(const Overrides& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  const Prepared p = prepare(c);
  fs::create_directories(c.output);
  write_text(c.output / "config.toml", to_toml(c));
  Checkpointer ckpt(c.output / "checkpoints", c.checkpoint_every);
  BatchHooks hooks(ckpt);
  const RunResult r = run_schedule(p.input, p.problem, c.params, &hooks);
  write_run_artifacts(c.output, c, p.input, r);
  const HistoryRow& first = r.state.history.front();
  const HistoryRow& last = r.state.history.back();
  out << fmt::format("E_refl {:.6g} -> {:.6g} after {} updates, {} faces; wrote {}\n", first.e_refl,
                     last.e_refl, last.iteration, last.face_count, c.output.string());
  return 0;
}

Vec3 parse_vec3(const std::string& s) {
  Vec3 v;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw ConfigError(fmt::format("expected x,y,z but got '{}'", s));
  }
  if (v.norm() < 1e-12) throw ConfigError("light direction must be non-zero");
  return v;
}

struct EvaluateArgs {
  std::string mesh;
  std::string light;
  std::string per_face;
  std::string render;
};

int cmd_evaluate(const Overrides& o, const EvaluateArgs& a, std::ostream& out) {
  RunConfig c = resolve(o);
  if (o.n_dir) c.params.eval_n_dir = *o.n_dir;
  if (c.params.eval_n_dir < 1) throw ConfigError("--n-dir must be positive");
  // Explicit meshes are taken as they are; the configured input follows run.normalize.
  Mesh mesh;
  if (a.mesh.empty()) {
    mesh = load_input(c);
  } else {
    if (!fs::exists(a.mesh)) throw ConfigError(fmt::format("mesh not found: {}", a.mesh));
    mesh = load_obj(a.mesh);
  }
  const Problem problem = c.problem_for(mesh);
  std::optional<Vec3> light;
  if (!a.light.empty()) light = parse_vec3(a.light);
  const EnergyEstimate e = evaluate(mesh, problem, c.params, light);
  out << fmt::format("E_refl = {:.6g} +- {:.3g} (faces {}, n_dir {})\n", e.total, e.std_error,
                     mesh.face_count(), c.params.eval_n_dir);
  if (!a.per_face.empty()) {
    std::string csv = "face,e_refl\n";
    for (size_t k = 0; k < e.per_face.size(); ++k) csv += fmt::format("{},{:.17g}\n", k, e.per_face[k]);
    write_text(a.per_face, csv);
  }
  if (!a.render.empty()) {
    const PhongScene scene =
        build_scene(mesh, problem.brdf, c.params.band(problem.band_axis), problem.emitter_radiance);
    const Image img = render_retroreflection(scene, scene.normals(), c.render,
                                             TraceSettings{c.params.n_path, 1}, c.seed);
    write_png(img, c.render.exposure, a.render);
  }
  return 0;
}

struct Column {
  std::string name;
  uint64_t seed = 0;
  std::optional<double> eta;
  double e0 = 0.0;
  double e1 = 0.0;
  double area = 0.0;
  double disp = 0.0;
  double adj = 0.0;
  bool collapsed = false;
  std::optional<bool> matched;
};

int cmd_compare(const Overrides& o, std::vector<std::string> filter, std::ostream& out) {
  const RunConfig c = resolve(o);
  std::vector<std::string> strategies = filter.empty() ? c.baselines.strategies : filter;
  for (const std::string& s : strategies) {
    if (std::find(kStrategies.begin(), kStrategies.end(), s) == kStrategies.end()) {
      throw ConfigError(fmt::format("unknown strategy '{}'", s));
    }
  }
  if (strategies.empty()) throw ConfigError("no strategies selected");
  auto seed_of = [&](const std::string& s) {
    auto it = c.baselines.seeds.find(s);
    return it == c.baselines.seeds.end() ? c.seed : it->second;
  };
  for (const std::string& s : strategies) {
    if (seed_of(s) != seed_of(strategies.front())) {
      throw ConfigError(fmt::format("strategies must share one seed; {} uses {} but {} uses {}",
                                    strategies.front(), seed_of(strategies.front()), s, seed_of(s)));
    }
  }
  RunConfig shared = c;
  shared.seed = seed_of(strategies.front());
  const Prepared p = prepare(shared);
  const int updates = c.baselines.updates;
  fs::create_directories(c.output);
  write_text(c.output / "config.toml", to_toml(shared));

  const double e0 = evaluate(p.input, p.problem, c.params).total;
  auto fill = [&](Column& col, const Mesh& m, double e1) {
    col.seed = shared.seed;
    col.e0 = e0;
    col.e1 = e1;
    col.area = relative_cell_area_difference(m);
    col.disp = mean_vertex_displacement(m);
    col.adj = mean_adjacent_normal_difference(m);
    save_obj(m, c.output / (col.name + ".obj"));
  };

  const bool need_ours =
      std::find(strategies.begin(), strategies.end(), "ours") != strategies.end() || c.baselines.match_reduction;
  std::optional<double> target;
  std::vector<Column> cols;
  if (need_ours) {
    HyperParams params = c.params;
    const int first = std::min(updates, params.stage_iters[0]);
    params.stage_iters = {first, updates - first, 0};
    const RunResult r = run_schedule(p.input, p.problem, params);
    target = r.state.history.back().e_refl;
    spdlog::info("ours: E_refl {:.5g} -> {:.5g}", e0, *target);
    if (std::find(strategies.begin(), strategies.end(), "ours") != strategies.end()) {
      Column col;
      col.name = "ours";
      fill(col, r.state.mesh, *target);
      cols.push_back(col);
    }
  }
  const std::map<std::string, int> orders{{"direct", 0}, {"laplacian", 1}, {"bilaplacian", 2}};
  for (const std::string& s : strategies) {
    if (s == "ours") continue;
    Column col;
    col.name = s;
    BaselineResult res;
    if (c.baselines.match_reduction && target) {
      MatchedBaseline m = match_reduction(p.input, p.problem, c.params, orders.at(s), updates, *target);
      col.eta = m.eta;
      col.matched = m.matched;
      res = std::move(m.result);
    } else {
      col.eta = c.params.baseline_eta;
      res = baseline_preconditioned(p.input, p.problem, c.params, orders.at(s), updates);
    }
    col.collapsed = res.collapsed;
    if (res.collapsed) spdlog::warn("{}: {}", s, res.failure);
    fill(col, res.mesh, res.history.back().e_refl);
    spdlog::info("{}: eta {:.4g}, E_refl {:.5g}, cell area diff {:.4g}", s, *col.eta, col.e1, col.area);
    cols.push_back(col);
  }
  // Keep the requested column order.
  std::vector<Column> ordered;
  for (const std::string& s : strategies) {
    for (const Column& col : cols) {
      if (col.name == s) ordered.push_back(col);
    }
  }

  std::string csv = "metric";
  for (const Column& col : ordered) csv += "," + col.name;
  csv += "\n";
  auto row = [&](const char* name, auto&& f) {
    csv += name;
    for (const Column& col : ordered) csv += "," + f(col);
    csv += "\n";
  };
  auto g = [](double v) { return fmt::format("{:.17g}", v); };
  row("seed", [](const Column& col) { return std::to_string(col.seed); });
  row("updates", [&](const Column&) { return std::to_string(updates); });
  row("baseline_eta", [&](const Column& col) { return col.eta ? g(*col.eta) : std::string(); });
  row("e_refl_initial", [&](const Column& col) { return g(col.e0); });
  row("e_refl_final", [&](const Column& col) { return g(col.e1); });
  row("e_refl_reduction", [&](const Column& col) { return g(col.e0 > 0 ? 1.0 - col.e1 / col.e0 : 0.0); });
  row("rel_cell_area_diff", [&](const Column& col) { return g(col.area); });
  row("mean_vertex_disp", [&](const Column& col) { return g(col.disp); });
  row("mean_adj_normal_diff", [&](const Column& col) { return g(col.adj); });
  row("collapsed", [](const Column& col) { return std::string(col.collapsed ? "1" : "0"); });
  row("matched", [](const Column& col) {
    return col.matched ? std::string(*col.matched ? "1" : "0") : std::string();
  });
  write_text(c.output / "comparison.csv", csv);
  out << csv;
  return 0;
}

int cmd_serve(const Overrides& o, uint16_t port, std::ostream& out) {
  const RunConfig c = resolve(o);
  const Prepared p = prepare(c);
  CommandQueue commands;
  std::optional<SessionServer> server;
  try {
    server.emplace(commands, port);
  } catch (const boost::system::system_error& e) {
    throw std::runtime_error(fmt::format("cannot listen on port {}: {}", port, e.code().message()));
  }
  fs::create_directories(c.output);
  write_text(c.output / "config.toml", to_toml(c));
  out << fmt::format("listening on ws://127.0.0.1:{}/session (paused; send resume to start)\n", server->port())
      << std::flush;
  g_active_session = &commands;
  Checkpointer ckpt(c.output / "checkpoints", c.checkpoint_every);
  ServeHooks hooks(*server, commands, ckpt);
  hooks.start_paused(true);
  RunResult r;
  try {
    r = run_schedule(p.input, p.problem, c.params, &hooks);
  } catch (...) {
    g_active_session = nullptr;
    throw;
  }
  g_active_session = nullptr;
  commands.close_for_terminate();
  write_run_artifacts(c.output, c, p.input, r);
  hooks.finish(r.state, r.final_params);
  // Give connected viewers a moment to receive the final frame.
  for (int i = 0; i < 20 && server->client_count() > 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server->stop();
  out << fmt::format("run {} after {} updates; wrote {}\n", r.state.terminated ? "terminated" : "finished",
                     r.state.iteration, c.output.string());
  return 0;
}

}  // namespace

Mesh named_fixture(const std::string& name, int res) {
  auto pick = [res](int fallback) { return res > 0 ? res : fallback; };
  if (name == "icosphere") return fixtures::icosphere(pick(3));
  if (name == "bent_ridge") return fixtures::bent_ridge(pick(24));
  if (name == "wall") return fixtures::wall(2 * pick(16), pick(16), 4.0, 2.0);
  if (name == "plate") return fixtures::plate(pick(1), 1.0);
  if (name == "cube") return fixtures::cube(pick(8));
  if (name == "torus") return fixtures::torus(2 * pick(16), pick(16), 1.0, 0.35);
  if (name == "octahedron") return fixtures::octahedron();
  if (name == "tetrahedron") return fixtures::tetrahedron();
  throw ConfigError(fmt::format("unknown fixture '{}'", name));
}

void write_run_artifacts(const fs::path& dir, const RunConfig& config, const Mesh& input,
                         const RunResult& result) {
  fs::create_directories(dir);
  RunConfig resolved = config;
  resolved.output = dir;
  write_text(dir / "config.toml", to_toml(resolved));
  save_obj(input, dir / "input.obj");
  save_obj(result.state.mesh, dir / "final.obj");
  write_text(dir / "history.csv", history_csv(result.state.history));
  write_text(dir / "timing.csv", timing_csv(result.state.history));
  std::string splits = split_csv_header();
  for (size_t b = 0; b < result.splits.size(); ++b) splits += split_csv_rows(result.splits[b], static_cast<int>(b));
  write_text(dir / "splits.csv", splits);
}

void interrupt_active_session() {
  if (CommandQueue* q = g_active_session.load()) q->stop();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reflective surface optimizer", "reflex"};
  app.require_subcommand(1);
  Overrides o;
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: STEALTH_THREADS or all cores)");

  CLI::App* optimize = app.add_subcommand("optimize", "Run the optimization schedule");
  add_common(optimize, o);
  optimize->add_option("--n-dir", o.n_dir, "Light directions per face per gradient step");
  optimize->add_option("--checkpoint-every", o.checkpoint_every, "OBJ checkpoint interval in vertex updates");

  CLI::App* eval = app.add_subcommand("evaluate", "Estimate E_refl of a mesh");
  EvaluateArgs ea;
  add_common(eval, o);
  eval->add_option("--mesh", ea.mesh, "Mesh to evaluate, taken as is (default: the configured input)");
  eval->add_option("--n-dir", o.n_dir, "Light directions per face");
  eval->add_option("--light", ea.light, "Single light direction x,y,z instead of the band");
  eval->add_option("--per-face", ea.per_face, "Write per-face energies to this CSV");
  eval->add_option("--render", ea.render, "Write a retroreflection render to this PNG");

  CLI::App* compare = app.add_subcommand("compare-baselines", "Compare ours with the vertex-space baselines");
  std::vector<std::string> filter;
  add_common(compare, o);
  compare->add_option("--strategy", filter, "Only these strategies (repeatable)");

  CLI::App* serve = app.add_subcommand("serve", "Run paused behind the steering WebSocket");
  uint16_t port = 8765;
  add_common(serve, o);
  serve->add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one)");
  serve->add_option("--checkpoint-every", o.checkpoint_every, "OBJ checkpoint interval in vertex updates");

  CLI::App* fixture = app.add_subcommand("fixture", "Write a procedural fixture mesh");
  std::string fixture_name, fixture_out;
  int resolution = 0;
  fixture->add_option("name", fixture_name, "icosphere, bent_ridge, wall, plate, cube, torus, octahedron, tetrahedron")
      ->required();
  fixture->add_option("output", fixture_out, "OBJ path")->required();
  fixture->add_option("--resolution", resolution, "Size parameter (0: bundled default)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const WorkerLimit limit = threads > 0 ? WorkerLimit(threads) : WorkerLimit::from_env();
    if (*optimize) return cmd_optimize(o, out);
    if (*eval) return cmd_evaluate(o, ea, out);
    if (*compare) return cmd_compare(o, filter, out);
    if (*serve) return cmd_serve(o, port, out);
    if (*fixture) {
      save_obj(named_fixture(fixture_name, resolution), fixture_out);
      out << fmt::format("wrote {}\n", fixture_out);
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace reflex
