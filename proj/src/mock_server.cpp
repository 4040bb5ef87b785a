// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/mock_server.hpp"

#include <httplib.h>

#include <atomic>
#include <deque>
#include <thread>

#include "qrmi/errors.hpp"
#include "qrmi/util.hpp"

namespace qrmi {

using nlohmann::json;

struct MockGatewayServer::Impl {
  struct Job {
    std::string id;
    std::string format;
    std::optional<std::size_t> lane;
    std::optional<TaskId> task;  // unset while waiting in the provider queue
    bool cancelled_in_queue = false;
    TaskPayload payload;
  };

  explicit Impl(MockGatewayOptions o)
      : options(std::move(o)),
        clock(std::make_shared<SimClock>(SimClock::Mode::kManual)),
        pool(std::make_shared<SlotPool>(ResourceId("mock-device"), options.device.num_lanes, clock)),
        device(std::make_shared<PseudoQpu>(ResourceId("mock-device"), options.device, clock, pool)),
        lane_busy(options.device.num_lanes, false) {}

  MockGatewayOptions options;
  std::shared_ptr<SimClock> clock;
  std::shared_ptr<SlotPool> pool;
  std::shared_ptr<PseudoQpu> device;

  httplib::Server server;
  std::thread server_thread;
  std::thread driver_thread;
  std::atomic<bool> running{false};
  int bound_port = -1;

  // Listeners fire from the clock driver and may re-enter via dispatch.
  mutable std::recursive_mutex mu;
  std::map<std::string, Job> jobs;
  std::map<std::string, std::string> idempotency;
  std::deque<std::string> provider_queue;
  std::vector<bool> lane_busy;
  std::vector<std::string> completed;
  std::vector<std::string> started;
  std::size_t created = 0;
  std::atomic<std::size_t> requests{0};
  std::atomic<int> fail_remaining{0};
  std::atomic<int> fail_status{503};
  std::atomic<bool> force_401{false};

  void start_on_device(Job& job, std::size_t lane) {
    job.lane = job.lane.value_or(lane);
    job.task = device->run_lane_task(lane, job.payload);
    started.push_back(job.id);
    std::string wire = job.id;
    device->on_terminal(*job.task, [this, wire, lane](const TaskId&, TaskState) {
      std::lock_guard lock(mu);
      completed.push_back(wire);
      if (options.mode == GatewayMode::kCloudQueue) {
        lane_busy[lane] = false;
        dispatch();
      }
    });
  }

  // Cloud-queue: the provider hands queued jobs to idle lanes in FIFO order.
  void dispatch() {
    for (std::size_t lane = 0; lane < lane_busy.size(); ++lane) {
      while (!lane_busy[lane] && !provider_queue.empty()) {
        std::string next = provider_queue.front();
        provider_queue.pop_front();
        Job& job = jobs.at(next);
        if (job.cancelled_in_queue) continue;
        lane_busy[lane] = true;
        start_on_device(job, lane);
      }
    }
  }

  TaskState state_of(const Job& job, std::string* reason = nullptr) const {
    if (job.cancelled_in_queue) return TaskState::kCancelled;
    if (!job.task) return TaskState::kQueued;
    auto st = device->task_status(*job.task);
    if (reason) *reason = st.reason;
    return st.state;
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  bool authorized(const httplib::Request& req) const {
    if (force_401) return false;
    if (!options.secret) return true;
    return req.get_header_value("Authorization") == "Bearer " + *options.secret;
  }

  void install_routes() {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (fail_remaining.load() > 0) {
        --fail_remaining;
        reply(res, fail_status, {{"error", "injected fault"}});
        return httplib::Server::HandlerResponse::Handled;
      }
      if (req.path.starts_with("/v1/") && !authorized(req)) {
        reply(res, 401, {{"error", "unauthorized"}});
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });

    server.Get("/v1/target", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 200;
      res.set_content(target_body(options.device), "application/json");
    });

    server.Get("/v1/metadata", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200,
            {{"backend_type", to_string(options.mode)},
             {"num_lanes", options.device.num_lanes},
             {"num_qubits", options.device.num_qubits}});
    });

    server.Post("/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      TaskPayload payload;
      std::optional<std::size_t> lane;
      std::string key;
      try {
        body = json::parse(req.body);
        payload.format = body.at("format").get<std::string>();
        payload.body = base64_decode(body.at("body").get<std::string>());
        if (body.contains("shots") && !body["shots"].is_null()) {
          payload.shots = body["shots"].get<std::int64_t>();
        }
        if (body.contains("lane") && !body["lane"].is_null()) lane = body["lane"].get<std::size_t>();
        key = body.value("idempotency_key", req.get_header_value("Idempotency-Key"));
      } catch (const std::exception& e) {
        reply(res, 400, {{"error", std::string("bad request: ") + e.what()}});
        return;
      }
      std::lock_guard lock(mu);
      if (!key.empty()) {
        if (auto it = idempotency.find(key); it != idempotency.end()) {
          reply(res, 201, {{"id", it->second}, {"state", to_wire_state(state_of(jobs.at(it->second)))}});
          return;
        }
      }
      // Parse up front so malformed circuits are rejected with 400.
      try {
        if (payload.format == kFormatCircuitV1) {
          Circuit c = parse_circuit(payload.body);
          if (c.num_qubits > options.device.num_qubits) {
            raise(ErrorCode::kMalformedPayload, "circuit too wide for device");
          }
          if (!payload.shots && c.shots < 1) raise(ErrorCode::kMalformedPayload, "missing shots");
        } else if (payload.format != kFormatOpaque) {
          raise(ErrorCode::kMalformedPayload, "unsupported format " + payload.format);
        }
        if (payload.shots && *payload.shots < 1) raise(ErrorCode::kMalformedPayload, "shots must be >= 1");
      } catch (const Error& e) {
        reply(res, 400, {{"error", e.what()}});
        return;
      }
      Job job;
      job.id = make_uuid();
      job.format = payload.format;
      job.payload = std::move(payload);
      if (options.mode == GatewayMode::kDirectAccess) {
        std::size_t l = lane.value_or(0);
        if (l >= options.device.num_lanes) {
          reply(res, 400, {{"error", "lane out of range"}});
          return;
        }
        job.lane = l;
      }
      std::string id = job.id;
      auto& stored = jobs.emplace(id, std::move(job)).first->second;
      ++created;
      if (!key.empty()) idempotency[key] = id;
      if (options.mode == GatewayMode::kDirectAccess) {
        start_on_device(stored, *stored.lane);
      } else {
        provider_queue.push_back(id);
        dispatch();
      }
      json out = {{"id", id}, {"state", to_wire_state(state_of(jobs.at(id)))}};
      reply(res, 201, out);
    });

    server.Get(R"(/v1/jobs/([A-Za-z0-9\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) {
        reply(res, 404, {{"error", "unknown job"}});
        return;
      }
      std::string reason;
      TaskState s = state_of(it->second, &reason);
      json out = {{"id", it->first}, {"state", to_wire_state(s)}};
      if (it->second.lane) out["lane"] = *it->second.lane;
      if (s == TaskState::kFailed) out["error"] = reason;
      reply(res, 200, out);
    });

    server.Get(R"(/v1/jobs/([A-Za-z0-9\-]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) {
        reply(res, 404, {{"error", "unknown job"}});
        return;
      }
      std::string reason;
      TaskState s = state_of(it->second, &reason);
      if (!is_terminal(s)) {
        reply(res, 409, {{"error", "job not terminal"}, {"state", to_wire_state(s)}});
        return;
      }
      json out = {{"counts", json::object()}};
      if (s == TaskState::kCompleted) {
        TaskResult r = device->task_result(*it->second.task);
        for (const auto& [k, v] : r.counts) out["counts"][k] = v;
        if (it->second.format == kFormatOpaque) out["raw"] = base64_encode(r.raw);
      } else {
        out["error"] = s == TaskState::kFailed ? reason : "cancelled";
      }
      reply(res, 200, out);
    });

    server.Delete(R"(/v1/jobs/([A-Za-z0-9\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<TaskId> task;
      {
        std::lock_guard lock(mu);
        auto it = jobs.find(req.matches[1]);
        if (it == jobs.end()) {
          reply(res, 404, {{"error", "unknown job"}});
          return;
        }
        if (!it->second.task) {
          it->second.cancelled_in_queue = true;
        } else {
          task = it->second.task;
        }
      }
      if (task) device->task_stop(*task);
      std::lock_guard lock(mu);
      reply(res, 200, {{"id", std::string(req.matches[1])},
                       {"state", to_wire_state(state_of(jobs.at(req.matches[1])))}});
    });
  }

  void drive() {
    const auto wall0 = std::chrono::steady_clock::now();
    while (running) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0);
      clock->advance_to(Millis{static_cast<std::int64_t>(elapsed.count() * options.time_scale)});
    }
  }
};

MockGatewayServer::MockGatewayServer(MockGatewayOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->install_routes();
}

MockGatewayServer::~MockGatewayServer() { stop(); }

int MockGatewayServer::start() {
  if (impl_->running) return impl_->bound_port;
  int port = impl_->options.port;
  // The library default sets SO_REUSEPORT, which would let two servers share
  // a port silently.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) {
    raise(ErrorCode::kBindFailed,
          impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  impl_->bound_port = port;
  impl_->running = true;
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->driver_thread = std::thread([this] { impl_->drive(); });
  impl_->server.wait_until_ready();
  return port;
}

void MockGatewayServer::stop() {
  if (!impl_->running.exchange(false)) return;
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
  if (impl_->driver_thread.joinable()) impl_->driver_thread.join();
}

void MockGatewayServer::wait() {
  while (impl_->running) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

int MockGatewayServer::port() const { return impl_->bound_port; }

std::string MockGatewayServer::url() const {
  return "http://" + impl_->options.host + ":" + std::to_string(impl_->bound_port);
}

void MockGatewayServer::fail_next(int n, int status) {
  impl_->fail_status = status;
  impl_->fail_remaining = n;
}

void MockGatewayServer::force_unauthorized(bool on) { impl_->force_401 = on; }

std::vector<std::string> MockGatewayServer::completion_order() const {
  std::lock_guard lock(impl_->mu);
  return impl_->completed;
}

std::vector<std::string> MockGatewayServer::start_order() const {
  std::lock_guard lock(impl_->mu);
  return impl_->started;
}

std::size_t MockGatewayServer::jobs_created() const {
  std::lock_guard lock(impl_->mu);
  return impl_->created;
}

std::size_t MockGatewayServer::requests_seen() const { return impl_->requests; }

}  // namespace qrmi
