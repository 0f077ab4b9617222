#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/optimize.hpp"

namespace reflex {

inline constexpr int kProtocolVersion = 1;

// Immutable copy of the optimizer state as seen by clients.
struct Snapshot {
  uint64_t revision = 0;
  uint64_t face_revision = 0;  // revision at which the face buffer last changed
  Stage stage = Stage::CoarseRimSpoke;
  ElementKind element = ElementKind::RimSpoke;
  int iteration = 0;
  bool paused = false;
  bool terminated = false;
  bool finished = false;
  std::vector<float> vertices;   // xyz triplets
  std::vector<uint32_t> faces;   // index triplets
  std::vector<float> energies;   // per face
  std::vector<HistoryRow> history_tail;
  HyperParams params;
};

inline constexpr size_t kHistoryTail = 64;

Snapshot make_snapshot(const OptimizerState& state, const HyperParams& params);

// Binary frame: u32 LE header length, JSON header, float32 vertices, uint32
// faces (only when the header says so), float32 per-face energies. All
// little-endian.
std::string encode_frame(const Snapshot& snapshot, bool include_faces);

struct DecodedFrame {
  std::string header_json;
  uint64_t revision = 0;
  uint64_t face_revision = 0;
  int vertex_count = 0;
  int face_count = 0;
  bool has_faces = false;
  std::vector<float> vertices;
  std::vector<uint32_t> faces;
  std::vector<float> energies;
};
// Throws std::runtime_error on malformed frames.
DecodedFrame decode_frame(std::string_view frame);

enum class CommandKind { Pause, Resume, SetParam, SwitchElement, TriggerSplit, Terminate, SaveCheckpoint, Snapshot };

struct Command {
  CommandKind kind = CommandKind::Pause;
  std::string nonce;
  std::string name;  // set_param
  double value = 0.0;
  ElementKind element = ElementKind::RimSpoke;
};

// Parses and range-checks a JSON command. Throws std::invalid_argument with
// the rejection reason.
Command parse_command(std::string_view json);

// Applies set_param to `params`. Throws std::invalid_argument when out of range.
void apply_param(HyperParams& params, const std::string& name, double value);

// Thread-safe bridge between the server and the optimizer loop. Commands
// queue here and are drained at the loop's defined points.
class CommandQueue {
 public:
  // Accepts or rejects; returns the reply JSON. Duplicate nonces return the
  // first reply without queuing again.
  std::string submit(std::string_view json);
  std::vector<Command> drain();
  // Blocks until a command arrives or `stop` is called.
  void wait();
  void close_for_terminate();
  void stop();
  [[nodiscard]] bool terminated() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Command> queue_;
  std::map<std::string, std::string> replies_;
  bool terminated_ = false;
  bool stopped_ = false;
};

// WebSocket /session endpoint and GET /health. One I/O thread; publish()
// never waits on clients, slow clients skip to the latest revision.
class SessionServer {
 public:
  // port 0 picks a free port.
  SessionServer(CommandQueue& commands, uint16_t port, const std::string& address = "127.0.0.1");
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  [[nodiscard]] uint16_t port() const;
  void publish(Snapshot snapshot);
  [[nodiscard]] std::shared_ptr<const Snapshot> latest() const;
  [[nodiscard]] int client_count() const;
  // Status reported by /health.
  void set_status(std::string status);
  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

// Optimizer hooks that stream snapshots to a server and apply queued
// commands. `checkpoint` runs for save_checkpoint commands.
class SessionHooks : public RunHooks {
 public:
  SessionHooks(SessionServer& server, CommandQueue& commands,
               std::function<void(const OptimizerState&)> checkpoint = {});

  void on_snapshot(const OptimizerState& state, const HyperParams& params) override;
  bool before_update(OptimizerState& state, HyperParams& params) override;
  void before_gradient_step(HyperParams& params) override;

  // Publishes a final snapshot marked finished.
  void finish(const OptimizerState& state, const HyperParams& params);
  // Pause at the first vertex update until a resume arrives.
  void start_paused(bool on) { start_paused_ = on; }

 private:
  void apply(const Command& c, OptimizerState* state, HyperParams& params);

  SessionServer& server_;
  CommandQueue& commands_;
  std::function<void(const OptimizerState&)> checkpoint_;
  std::deque<Command> deferred_;  // state-level commands seen mid-update
  uint64_t revision_ = 0;
  uint64_t face_revision_ = 0;
  int topology_seen_ = -1;
  bool terminate_ = false;
  bool start_paused_ = false;
};

}  // namespace reflex
