#include "reflex/session.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace reflex {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

// ---------------------------------------------------------------- snapshots

Snapshot make_snapshot(const OptimizerState& state, const HyperParams& params) {
  Snapshot s;
  s.stage = state.stage;
  s.element = state.element;
  s.iteration = state.iteration;
  s.paused = state.paused;
  s.terminated = state.terminated;
  s.params = params;
  s.vertices.reserve(3 * state.mesh.vertices.size());
  for (const Vec3& v : state.mesh.vertices) {
    for (int i = 0; i < 3; ++i) s.vertices.push_back(static_cast<float>(v[i]));
  }
  s.faces.reserve(3 * state.mesh.faces.size());
  for (const Face& f : state.mesh.faces) {
    for (int i : f) s.faces.push_back(static_cast<uint32_t>(i));
  }
  s.energies.assign(state.face_energy.begin(), state.face_energy.end());
  const size_t n = std::min(kHistoryTail, state.history.size());
  s.history_tail.assign(state.history.end() - static_cast<std::ptrdiff_t>(n), state.history.end());
  return s;
}

namespace {

static_assert(std::endian::native == std::endian::little, "frame encoding assumes a little-endian host");

json params_json(const HyperParams& p) {
  return {{"eta", p.eta},
          {"beta", p.beta},
          {"tv_alpha", p.tv_alpha},
          {"n_gradient", p.n_gradient},
          {"lambda_style", p.lambda_style},
          {"n_dir", p.n_dir},
          {"n_path", p.n_path},
          {"theta0_deg", p.theta0_deg},
          {"split_fraction", p.split_fraction}};
}

template <class T>
void append(std::string& out, const std::vector<T>& v) {
  const size_t at = out.size();
  out.resize(at + v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(out.data() + at, v.data(), v.size() * sizeof(T));
}

template <class T>
std::vector<T> take(std::string_view frame, size_t& at, size_t count) {
  if (frame.size() - at < count * sizeof(T)) throw std::runtime_error("frame truncated");
  std::vector<T> v(count);
  if (count) std::memcpy(v.data(), frame.data() + at, count * sizeof(T));
  at += count * sizeof(T);
  return v;
}

}  // namespace

std::string encode_frame(const Snapshot& s, bool include_faces) {
  json history = json::array();
  for (const HistoryRow& r : s.history_tail) {
    history.push_back({{"iteration", r.iteration},
                       {"stage", to_string(r.stage)},
                       {"e_refl", r.e_refl},
                       {"mean_vertex_disp", r.mean_vertex_disp},
                       {"mean_adj_normal_diff", r.mean_adj_normal_diff},
                       {"face_count", r.face_count}});
  }
  const json header = {{"v", kProtocolVersion},
                       {"type", "snapshot"},
                       {"revision", s.revision},
                       {"face_revision", s.face_revision},
                       {"stage", to_string(s.stage)},
                       {"element", to_string(s.element)},
                       {"iteration", s.iteration},
                       {"paused", s.paused},
                       {"terminated", s.terminated},
                       {"finished", s.finished},
                       {"vertex_count", s.vertices.size() / 3},
                       {"face_count", s.faces.size() / 3},
                       {"has_faces", include_faces},
                       {"params", params_json(s.params)},
                       {"history", history}};
  const std::string text = header.dump();
  std::string out(4, '\0');
  const auto len = static_cast<uint32_t>(text.size());
  std::memcpy(out.data(), &len, 4);
  out += text;
  append(out, s.vertices);
  if (include_faces) append(out, s.faces);
  append(out, s.energies);
  return out;
}

DecodedFrame decode_frame(std::string_view frame) {
  if (frame.size() < 4) throw std::runtime_error("frame too short");
  uint32_t len = 0;
  std::memcpy(&len, frame.data(), 4);
  if (frame.size() - 4 < len) throw std::runtime_error("frame header truncated");
  DecodedFrame d;
  d.header_json = std::string(frame.substr(4, len));
  json h;
  try {
    h = json::parse(d.header_json);
    if (h.at("v").get<int>() != kProtocolVersion) throw std::runtime_error("unsupported frame version");
    d.revision = h.at("revision").get<uint64_t>();
    d.face_revision = h.at("face_revision").get<uint64_t>();
    d.vertex_count = h.at("vertex_count").get<int>();
    d.face_count = h.at("face_count").get<int>();
    d.has_faces = h.at("has_faces").get<bool>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad frame header: ") + e.what());
  }
  size_t at = 4 + len;
  d.vertices = take<float>(frame, at, 3 * static_cast<size_t>(d.vertex_count));
  if (d.has_faces) d.faces = take<uint32_t>(frame, at, 3 * static_cast<size_t>(d.face_count));
  d.energies = take<float>(frame, at, static_cast<size_t>(d.face_count));
  if (at != frame.size()) throw std::runtime_error("trailing bytes in frame");
  return d;
}

// ----------------------------------------------------------------- commands

void apply_param(HyperParams& params, const std::string& name, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument(name + " must be finite");
  if (name == "eta") {
    if (!(value > 0.0)) throw std::invalid_argument("eta must be positive");
    params.eta = value;
  } else if (name == "beta") {
    if (value < 0.0) throw std::invalid_argument("beta must be non-negative");
    params.beta = value;
  } else if (name == "tv_alpha") {
    if (!(value > 0.0)) throw std::invalid_argument("tv_alpha must be positive");
    params.tv_alpha = value;
  } else if (name == "n_gradient") {
    if (value < 1.0 || value > 1000.0 || value != std::floor(value)) {
      throw std::invalid_argument("n_gradient must be an integer in [1, 1000]");
    }
    params.n_gradient = static_cast<int>(value);
  } else {
    throw std::invalid_argument("unknown parameter '" + name + "' (allowed: eta, beta, tv_alpha, n_gradient)");
  }
}

Command parse_command(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw std::invalid_argument("malformed command");
  }
  if (!j.is_object()) throw std::invalid_argument("malformed command");
  if (j.contains("v") && j["v"] != kProtocolVersion) throw std::invalid_argument("unsupported protocol version");
  Command c;
  if (j.contains("nonce")) {
    if (!j["nonce"].is_string()) throw std::invalid_argument("nonce must be a string");
    c.nonce = j["nonce"].get<std::string>();
  }
  if (!j.contains("cmd") || !j["cmd"].is_string()) throw std::invalid_argument("missing cmd");
  const std::string cmd = j["cmd"].get<std::string>();
  if (cmd == "pause") {
    c.kind = CommandKind::Pause;
  } else if (cmd == "resume") {
    c.kind = CommandKind::Resume;
  } else if (cmd == "set_param") {
    c.kind = CommandKind::SetParam;
    if (!j.contains("name") || !j["name"].is_string()) throw std::invalid_argument("set_param needs a name");
    if (!j.contains("value") || !j["value"].is_number()) throw std::invalid_argument("set_param needs a numeric value");
    c.name = j["name"].get<std::string>();
    c.value = j["value"].get<double>();
    HyperParams probe;
    apply_param(probe, c.name, c.value);
  } else if (cmd == "switch_element") {
    c.kind = CommandKind::SwitchElement;
    const std::string kind = j.value("kind", "");
    if (kind == to_string(ElementKind::RimSpoke)) {
      c.element = ElementKind::RimSpoke;
    } else if (kind == to_string(ElementKind::FaceOnly)) {
      c.element = ElementKind::FaceOnly;
    } else {
      throw std::invalid_argument("kind must be rim_spoke or face_only");
    }
  } else if (cmd == "trigger_split") {
    c.kind = CommandKind::TriggerSplit;
  } else if (cmd == "terminate") {
    c.kind = CommandKind::Terminate;
  } else if (cmd == "save_checkpoint") {
    c.kind = CommandKind::SaveCheckpoint;
  } else if (cmd == "snapshot") {
    c.kind = CommandKind::Snapshot;
  } else {
    throw std::invalid_argument("unknown command '" + cmd + "'");
  }
  return c;
}

namespace {

std::string command_name(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.is_object() && j.contains("cmd") && j["cmd"].is_string()) return j["cmd"].get<std::string>();
  } catch (const json::exception&) {
  }
  return "";
}

std::string command_nonce(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.is_object() && j.contains("nonce") && j["nonce"].is_string()) return j["nonce"].get<std::string>();
  } catch (const json::exception&) {
  }
  return "";
}

}  // namespace

std::string CommandQueue::submit(std::string_view text) {
  const std::string nonce = command_nonce(text);
  std::lock_guard lock(mutex_);
  if (!nonce.empty()) {
    if (auto it = replies_.find(nonce); it != replies_.end()) return it->second;
  }
  json reply = {{"v", kProtocolVersion}, {"nonce", nonce}, {"cmd", command_name(text)}};
  try {
    Command c = parse_command(text);
    if (terminated_) throw std::invalid_argument("run terminated");
    if (c.kind == CommandKind::Terminate) terminated_ = true;
    if (c.kind != CommandKind::Snapshot) queue_.push_back(std::move(c));
    reply["type"] = "ack";
  } catch (const std::invalid_argument& e) {
    reply["type"] = "rejected";
    reply["reason"] = e.what();
  }
  std::string out = reply.dump();
  if (!nonce.empty()) replies_.emplace(nonce, out);
  cv_.notify_all();
  return out;
}

std::vector<Command> CommandQueue::drain() {
  std::lock_guard lock(mutex_);
  std::vector<Command> out(queue_.begin(), queue_.end());
  queue_.clear();
  return out;
}

void CommandQueue::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return !queue_.empty() || stopped_; });
}

void CommandQueue::close_for_terminate() {
  std::lock_guard lock(mutex_);
  terminated_ = true;
}

void CommandQueue::stop() {
  std::lock_guard lock(mutex_);
  stopped_ = true;
  terminated_ = true;
  queue_.push_back(Command{CommandKind::Terminate, "", "", 0.0, ElementKind::RimSpoke});
  cv_.notify_all();
}

bool CommandQueue::terminated() const {
  std::lock_guard lock(mutex_);
  return terminated_;
}

// ------------------------------------------------------------------- server

namespace {

class WsSession;

}  // namespace

struct SessionServer::Impl : std::enable_shared_from_this<SessionServer::Impl> {
  explicit Impl(CommandQueue& q) : commands(q) {}

  CommandQueue& commands;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  mutable std::mutex mutex;
  std::shared_ptr<const Snapshot> latest;
  std::string status = "starting";
  std::vector<std::weak_ptr<WsSession>> sessions;  // I/O thread only
  std::atomic<int> clients{0};
  std::atomic<bool> stopped{false};

  void accept();
  void notify_all();
  [[nodiscard]] std::string health() const;
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<SessionServer::Impl> server)
      : ws_(std::move(socket)), server_(std::move(server)) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(1 << 20);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void notify() { pump(); }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    server_->sessions.push_back(weak_from_this());
    ++server_->clients;
    registered_ = true;
    read();
    pump();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      drop();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    const std::string reply = server_->commands.submit(text);
    if (command_name(text) == "snapshot" && reply.find("\"ack\"") != std::string::npos) force_full_ = true;
    replies_.push_back(reply);
    pump();
    read();
  }

  void pump() {
    if (writing_ || closed_ || !registered_) return;
    if (!replies_.empty()) {
      auto msg = std::make_shared<std::string>(std::move(replies_.front()));
      replies_.pop_front();
      write(msg, true);
      return;
    }
    std::shared_ptr<const Snapshot> snap;
    {
      std::lock_guard lock(server_->mutex);
      snap = server_->latest;
    }
    if (!snap || (snap->revision <= sent_revision_ && !force_full_)) return;
    const bool faces = force_full_ || !sent_any_ || snap->face_revision != sent_face_revision_;
    auto msg = std::make_shared<std::string>(encode_frame(*snap, faces));
    sent_revision_ = snap->revision;
    if (faces) sent_face_revision_ = snap->face_revision;
    sent_any_ = true;
    force_full_ = false;
    write(msg, false);
  }

  void write(std::shared_ptr<std::string> msg, bool text) {
    writing_ = true;
    ws_.text(text);
    ws_.async_write(net::buffer(*msg), [self = shared_from_this(), msg](beast::error_code ec, size_t) {
      self->writing_ = false;
      if (ec) {
        self->drop();
        return;
      }
      self->pump();
    });
  }

  void drop() {
    if (registered_) {
      registered_ = false;
      --server_->clients;
    }
    close();
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<SessionServer::Impl> server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> replies_;
  bool writing_ = false;
  bool closed_ = false;
  bool registered_ = false;
  bool sent_any_ = false;
  bool force_full_ = false;
  uint64_t sent_revision_ = 0;
  uint64_t sent_face_revision_ = 0;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<SessionServer::Impl> server)
      : stream_(std::move(socket)), server_(std::move(server)) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, size_t) { self->on_read(ec); });
  }

 private:
  void on_read(beast::error_code ec) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/session") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), server_)->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, "text/plain", "unknown endpoint\n");
      return;
    }
    if (req_.method() == http::verb::get && req_.target() == "/health") {
      respond(http::status::ok, "application/json", server_->health());
    } else {
      respond(http::status::not_found, "text/plain", "not found\n");
    }
  }

  void respond(http::status status, const char* type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<SessionServer::Impl> server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void SessionServer::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), self)->start();
    self->accept();
  });
}

void SessionServer::Impl::notify_all() {
  std::erase_if(sessions, [](const std::weak_ptr<WsSession>& w) { return w.expired(); });
  for (const auto& w : sessions) {
    if (auto s = w.lock()) s->notify();
  }
}

std::string SessionServer::Impl::health() const {
  std::lock_guard lock(mutex);
  json j = {{"v", kProtocolVersion}, {"status", status}, {"clients", clients.load()}};
  if (latest) {
    j["revision"] = latest->revision;
    j["iteration"] = latest->iteration;
    j["stage"] = to_string(latest->stage);
    j["paused"] = latest->paused;
    j["face_count"] = latest->faces.size() / 3;
    if (!latest->history_tail.empty()) j["e_refl"] = latest->history_tail.back().e_refl;
  } else {
    j["revision"] = 0;
  }
  return j.dump();
}

SessionServer::SessionServer(CommandQueue& commands, uint16_t port, const std::string& address)
    : impl_(std::make_shared<Impl>(commands)) {
  const tcp::endpoint endpoint(net::ip::make_address(address), port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

SessionServer::~SessionServer() { stop(); }

uint16_t SessionServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void SessionServer::publish(Snapshot snapshot) {
  auto shared = std::make_shared<const Snapshot>(std::move(snapshot));
  {
    std::lock_guard lock(impl_->mutex);
    impl_->latest = std::move(shared);
  }
  net::post(impl_->ioc, [impl = impl_] { impl->notify_all(); });
}

std::shared_ptr<const Snapshot> SessionServer::latest() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->latest;
}

int SessionServer::client_count() const { return impl_->clients.load(); }

void SessionServer::set_status(std::string status) {
  std::lock_guard lock(impl_->mutex);
  impl_->status = std::move(status);
}

void SessionServer::stop() {
  if (!impl_ || impl_->stopped.exchange(true)) return;
  net::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    for (const auto& w : impl->sessions) {
      if (auto s = w.lock()) s->close();
    }
  });
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

// -------------------------------------------------------------------- hooks

SessionHooks::SessionHooks(SessionServer& server, CommandQueue& commands,
                           std::function<void(const OptimizerState&)> checkpoint)
    : server_(server), commands_(commands), checkpoint_(std::move(checkpoint)) {}

void SessionHooks::on_snapshot(const OptimizerState& state, const HyperParams& params) {
  Snapshot s = make_snapshot(state, params);
  s.revision = ++revision_;
  if (state.topology_revision != topology_seen_) {
    topology_seen_ = state.topology_revision;
    face_revision_ = s.revision;
  }
  s.face_revision = face_revision_;
  server_.set_status(state.paused ? "paused" : "running");
  server_.publish(std::move(s));
}

void SessionHooks::apply(const Command& c, OptimizerState* state, HyperParams& params) {
  switch (c.kind) {
    case CommandKind::SetParam:
      apply_param(params, c.name, c.value);
      return;
    case CommandKind::Snapshot:
      return;
    default:
      break;
  }
  if (!state) {
    deferred_.push_back(c);
    return;
  }
  switch (c.kind) {
    case CommandKind::Pause: state->paused = true; break;
    case CommandKind::Resume: state->paused = false; break;
    case CommandKind::SwitchElement: state->element = c.element; break;
    case CommandKind::TriggerSplit: state->split_requested = true; break;
    case CommandKind::Terminate: terminate_ = true; break;
    case CommandKind::SaveCheckpoint:
      if (checkpoint_) checkpoint_(*state);
      break;
    default: break;
  }
}

void SessionHooks::before_gradient_step(HyperParams& params) {
  for (const Command& c : commands_.drain()) apply(c, nullptr, params);
}

bool SessionHooks::before_update(OptimizerState& state, HyperParams& params) {
  auto run_pending = [&] {
    bool any = false;
    while (!deferred_.empty()) {
      const Command c = deferred_.front();
      deferred_.pop_front();
      apply(c, &state, params);
      any = true;
    }
    for (const Command& c : commands_.drain()) {
      apply(c, &state, params);
      any = true;
    }
    return any;
  };
  bool was_paused = state.paused;
  if (start_paused_) {
    start_paused_ = false;
    state.paused = true;
    was_paused = false;
  }
  run_pending();
  if (state.paused != was_paused) on_snapshot(state, params);
  while (state.paused && !terminate_) {
    commands_.wait();
    if (run_pending()) on_snapshot(state, params);
  }
  return !terminate_;
}

void SessionHooks::finish(const OptimizerState& state, const HyperParams& params) {
  Snapshot s = make_snapshot(state, params);
  s.revision = ++revision_;
  if (state.topology_revision != topology_seen_) {
    topology_seen_ = state.topology_revision;
    face_revision_ = s.revision;
  }
  s.face_revision = face_revision_;
  s.finished = true;
  server_.set_status(state.terminated ? "terminated" : "done");
  server_.publish(std::move(s));
}

}  // namespace reflex
