// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/gateway.hpp"

#include <httplib.h>

#include <regex>
#include <thread>

#include "qrmi/errors.hpp"
#include "qrmi/util.hpp"

namespace qrmi {

using nlohmann::json;

std::string_view to_string(GatewayMode mode) {
  return mode == GatewayMode::kDirectAccess ? "direct-access" : "cloud-queue";
}

std::optional<GatewayMode> gateway_mode_from_string(std::string_view name) {
  if (name == "direct-access") return GatewayMode::kDirectAccess;
  if (name == "cloud-queue") return GatewayMode::kCloudQueue;
  return std::nullopt;
}

namespace {

// "http://host:port/base/" -> {"http://host:port", "/base"}.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme = endpoint.find("://");
  auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, slash), prefix};
}

}  // namespace

void validate(const GatewayConfig& c) {
  static const std::regex kUrl(R"(^https?://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/[A-Za-z0-9._~\-/]*)?$)");
  if (!std::regex_match(c.endpoint, kUrl)) {
    raise(ErrorCode::kValidationError, "gateway endpoint is not an http(s) URL: '" + c.endpoint + "'");
  }
  if (c.auth_env.empty()) raise(ErrorCode::kValidationError, "gateway auth_env must be non-empty");
  if (c.poll_interval.count() < 1) raise(ErrorCode::kValidationError, "poll_interval_ms must be >= 1");
  if (c.max_retries < 0) raise(ErrorCode::kValidationError, "max_retries must be >= 0");
}

GatewayConfig gateway_config_from_json(const json& j, GatewayMode mode) {
  GatewayConfig c;
  c.mode = mode;
  try {
    if (!j.is_object()) raise(ErrorCode::kValidationError, "gateway must be an object");
    c.endpoint = j.at("endpoint").get<std::string>();
    c.auth_env = j.at("auth_env").get<std::string>();
    c.poll_interval = Millis{j.value("poll_interval_ms", c.poll_interval.count())};
    c.probe_timeout = Millis{j.value("probe_timeout_ms", c.probe_timeout.count())};
    c.request_timeout = Millis{j.value("request_timeout_ms", c.request_timeout.count())};
    c.initial_backoff = Millis{j.value("initial_backoff_ms", c.initial_backoff.count())};
    c.max_retries = j.value("max_retries", c.max_retries);
  } catch (const json::exception& e) {
    raise(ErrorCode::kValidationError, std::string("gateway: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const GatewayConfig& c) {
  return {{"endpoint", c.endpoint},
          {"auth_env", c.auth_env},
          {"poll_interval_ms", c.poll_interval.count()},
          {"probe_timeout_ms", c.probe_timeout.count()},
          {"request_timeout_ms", c.request_timeout.count()},
          {"initial_backoff_ms", c.initial_backoff.count()},
          {"max_retries", c.max_retries}};
}

std::string_view to_wire_state(TaskState s) {
  switch (s) {
    case TaskState::kQueued: return "QUEUED";
    case TaskState::kRunning: return "RUNNING";
    case TaskState::kCompleted: return "COMPLETED";
    case TaskState::kFailed: return "FAILED";
    case TaskState::kCancelled: return "CANCELLED";
  }
  return "UNKNOWN";
}

std::optional<TaskState> from_wire_state(std::string_view wire) {
  for (auto s : {TaskState::kQueued, TaskState::kRunning, TaskState::kCompleted,
                 TaskState::kFailed, TaskState::kCancelled}) {
    if (to_wire_state(s) == wire) return s;
  }
  return std::nullopt;
}

namespace {

template <typename Rep, typename Period>
std::pair<time_t, time_t> split(std::chrono::duration<Rep, Period> d) {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
  return {static_cast<time_t>(us / 1000000), static_cast<time_t>(us % 1000000)};
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    raise(ErrorCode::kGatewayUnreachable, std::string("invalid JSON from gateway: ") + e.what());
  }
}

}  // namespace

GatewayClient::GatewayClient(GatewayConfig config, EnvLookup env)
    : config_(std::move(config)), env_(std::move(env)) {
  validate(config_);
}

GatewayClient::~GatewayClient() = default;

std::string GatewayClient::bearer() const {
  auto secret = env_(config_.auth_env);
  if (!secret || secret->empty()) {
    raise(ErrorCode::kAuthFailed, "secret variable " + config_.auth_env + " is not set");
  }
  return *secret;
}

GatewayClient::Response GatewayClient::send(Method method, const std::string& path,
                                            const std::string& body,
                                            const std::string& idempotency_key) {
  // Resolve the secret before any network traffic.
  const std::string secret = bearer();
  httplib::Headers headers = {{"Authorization", "Bearer " + secret}};
  if (!idempotency_key.empty()) headers.emplace("Idempotency-Key", idempotency_key);

  const auto [origin, prefix] = split_endpoint(config_.endpoint);
  const std::string full = prefix + path;
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(origin);
    auto [cs, cus] = split(config_.request_timeout);
    cli.set_connection_timeout(cs, cus);
    cli.set_read_timeout(cs, cus);
    cli.set_write_timeout(cs, cus);
    ++attempts_;
    httplib::Result res;
    switch (method) {
      case Method::kGet: res = cli.Get(full, headers); break;
      case Method::kPost: res = cli.Post(full, headers, body, "application/json"); break;
      case Method::kDelete: res = cli.Delete(full, headers); break;
    }
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status == 401) raise(ErrorCode::kAuthFailed, config_.endpoint + path);
    return Response{res->status, res->body};
  }
  raise(ErrorCode::kGatewayUnreachable, config_.endpoint + path + ": " + last_error);
}

std::string GatewayClient::submit(const TaskPayload& payload, std::optional<std::size_t> lane,
                                  const std::string& idempotency_key) {
  json req = {{"format", payload.format},
              {"body", base64_encode(payload.body)},
              {"idempotency_key", idempotency_key}};
  req["shots"] = payload.shots ? json(*payload.shots) : json(nullptr);
  if (lane) req["lane"] = *lane;
  auto res = send(Method::kPost, "/v1/jobs", req.dump(), idempotency_key);
  if (res.status == 400) {
    std::string detail = res.body;
    try {
      detail = json::parse(res.body).value("error", res.body);
    } catch (const json::exception&) {
    }
    raise(ErrorCode::kMalformedPayload, detail);
  }
  if (res.status != 201 && res.status != 200) {
    raise(ErrorCode::kGatewayUnreachable, "submit: HTTP " + std::to_string(res.status));
  }
  return parse_body(res.body).at("id").get<std::string>();
}

WireJob GatewayClient::get_job(const std::string& id) {
  auto res = send(Method::kGet, "/v1/jobs/" + id);
  if (res.status == 404) raise(ErrorCode::kUnknownTask, id);
  if (res.status != 200) raise(ErrorCode::kGatewayUnreachable, "poll: HTTP " + std::to_string(res.status));
  json j = parse_body(res.body);
  WireJob job;
  job.id = j.at("id").get<std::string>();
  auto state = from_wire_state(j.at("state").get<std::string>());
  if (!state) raise(ErrorCode::kGatewayUnreachable, "unknown wire state");
  job.state = *state;
  if (j.contains("lane") && !j["lane"].is_null()) job.lane = j["lane"].get<std::size_t>();
  job.error = j.value("error", "");
  return job;
}

TaskStatus GatewayClient::poll(const std::string& id) {
  auto job = get_job(id);
  return TaskStatus{job.state, job.error};
}

std::optional<json> GatewayClient::result(const std::string& id) {
  auto res = send(Method::kGet, "/v1/jobs/" + id + "/result");
  if (res.status == 404) raise(ErrorCode::kUnknownTask, id);
  if (res.status == 409) return std::nullopt;
  if (res.status != 200) raise(ErrorCode::kGatewayUnreachable, "result: HTTP " + std::to_string(res.status));
  return parse_body(res.body);
}

void GatewayClient::cancel(const std::string& id) {
  auto res = send(Method::kDelete, "/v1/jobs/" + id);
  if (res.status == 404) raise(ErrorCode::kUnknownTask, id);
  if (res.status != 200) raise(ErrorCode::kGatewayUnreachable, "cancel: HTTP " + std::to_string(res.status));
}

std::string GatewayClient::target_json() {
  auto res = send(Method::kGet, "/v1/target");
  if (res.status != 200) raise(ErrorCode::kGatewayUnreachable, "target: HTTP " + std::to_string(res.status));
  return parse_body(res.body).dump();
}

json GatewayClient::metadata_json() {
  auto res = send(Method::kGet, "/v1/metadata");
  if (res.status != 200) raise(ErrorCode::kGatewayUnreachable, "metadata: HTTP " + std::to_string(res.status));
  return parse_body(res.body);
}

bool GatewayClient::health() {
  try {
    const auto [origin, prefix] = split_endpoint(config_.endpoint);
    httplib::Client cli(origin);
    auto [s, us] = split(config_.probe_timeout);
    cli.set_connection_timeout(s, us);
    cli.set_read_timeout(s, us);
    ++attempts_;
    auto res = cli.Get(prefix + "/health");
    return res && res->status == 200;
  } catch (const std::exception&) {
    return false;
  }
}

GatewayResource::GatewayResource(ResourceId id, GatewayConfig config,
                                 std::shared_ptr<SlotPool> pool, EnvLookup env)
    : id_(std::move(id)), client_(std::move(config), std::move(env)), pool_(std::move(pool)) {
  if (!pool_) raise(ErrorCode::kBackendInitFailed, id_.str() + ": missing pool");
  pool_->set_release_hook([this](const AcquisitionToken& t) { cancel_owned_by(t.token); });
}

GatewayResource::~GatewayResource() { pool_->set_release_hook(nullptr); }

bool GatewayResource::is_accessible() { return !maintenance_ && client_.health(); }

AcquisitionToken GatewayResource::acquire(const std::string& requester,
                                          std::optional<std::chrono::milliseconds> timeout) {
  if (!is_accessible()) raise(ErrorCode::kResourceUnavailable, id_.str());
  return pool_->acquire(requester, timeout);
}

void GatewayResource::release(const AcquisitionToken& token) { pool_->release(token); }

void GatewayResource::cancel_owned_by(const std::string& token) {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mu_);
    for (const auto& [wire, owner] : owner_) {
      if (owner == token) ids.push_back(wire);
    }
  }
  for (const auto& id : ids) {
    try {
      client_.cancel(id);
    } catch (const Error&) {
      // The gateway may already have dropped the job.
    }
  }
}

TaskId GatewayResource::task_start(const AcquisitionToken& token, const TaskPayload& payload) {
  try {
    pool_->check(token);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kAlreadyReleased) raise(ErrorCode::kInvalidToken, "token already released");
    throw;
  }
  std::optional<std::size_t> lane;
  if (client_.config().mode == GatewayMode::kDirectAccess) lane = token.slot;
  std::string wire = client_.submit(payload, lane, make_uuid());
  {
    std::lock_guard lock(mu_);
    owner_[wire] = token.token;
  }
  if (!pool_->is_held(token)) {
    cancel_owned_by(token.token);
    raise(ErrorCode::kInvalidToken, "token released during task_start");
  }
  return TaskId(wire);
}

void GatewayResource::task_stop(const TaskId& task) { client_.cancel(task.str()); }

TaskStatus GatewayResource::task_status(const TaskId& task) { return client_.poll(task.str()); }

TaskState GatewayResource::task_wait(const TaskId& task, std::chrono::milliseconds max_wait) {
  const auto deadline = std::chrono::steady_clock::now() + max_wait;
  for (;;) {
    auto status = client_.poll(task.str());
    if (is_terminal(status.state)) return status.state;
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return status.state;
    std::this_thread::sleep_for(
        std::min<std::chrono::steady_clock::duration>(client_.config().poll_interval, deadline - now));
  }
}

TaskResult GatewayResource::task_result(const TaskId& task) {
  TaskState state;
  do {
    state = task_wait(task, std::chrono::hours(24));
  } while (!is_terminal(state));
  if (state == TaskState::kCancelled) raise(ErrorCode::kTaskCancelled, task.str());
  if (state == TaskState::kFailed) raise(ErrorCode::kTaskFailed, client_.poll(task.str()).reason);
  auto body = client_.result(task.str());
  if (!body) raise(ErrorCode::kGatewayUnreachable, "result not available for terminal job");
  TaskResult r;
  r.task = task;
  const json counts = body->value("counts", json::object());
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    r.counts[it.key()] = it.value().get<std::uint64_t>();
  }
  if (body->contains("raw")) r.raw = base64_decode(body->at("raw").get<std::string>());
  return r;
}

Target GatewayResource::target() {
  return Target{id_, std::string(kTargetFormat), client_.target_json(), 1};
}

Metadata GatewayResource::metadata() {
  Metadata m;
  m.entries = {{"backend_type", std::string(to_string(client_.config().mode))},
               {"num_lanes", std::to_string(pool_->num_slots())},
               {"endpoint", client_.config().endpoint},
               {"resource_id", id_.str()},
               {"gres_name", "qpu"},
               {"maintenance", maintenance_ ? "true" : "false"}};
  return m;
}

}  // namespace qrmi
