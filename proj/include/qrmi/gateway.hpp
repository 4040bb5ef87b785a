// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "qrmi/lock_manager.hpp"
#include "qrmi/quantum_resource.hpp"

namespace qrmi {

enum class GatewayMode { kDirectAccess, kCloudQueue };

std::string_view to_string(GatewayMode mode);
std::optional<GatewayMode> gateway_mode_from_string(std::string_view name);

struct GatewayConfig {
  std::string endpoint;
  GatewayMode mode = GatewayMode::kDirectAccess;
  // Name of the environment variable holding the bearer secret.
  std::string auth_env;
  Millis poll_interval{20};
  Millis probe_timeout{500};
  Millis request_timeout{5000};
  Millis initial_backoff{100};
  int max_retries = 3;
};

void validate(const GatewayConfig& config);

// Keys: endpoint, auth_env, poll_interval_ms, probe_timeout_ms,
// request_timeout_ms, initial_backoff_ms, max_retries. The mode comes from
// the resource's backend type.
GatewayConfig gateway_config_from_json(const nlohmann::json& j, GatewayMode mode);
nlohmann::json to_json(const GatewayConfig& config);

std::string_view to_wire_state(TaskState state);
std::optional<TaskState> from_wire_state(std::string_view wire);

struct WireJob {
  std::string id;
  TaskState state = TaskState::kQueued;
  std::optional<std::size_t> lane;
  std::string error;
};

/// REST client for the vendor gateway protocol.
///
/// Connection errors and 5xx responses are retried up to `max_retries` times
/// with exponential backoff; 4xx responses never are. 401 maps to
/// kAuthFailed, 404 on job routes to kUnknownTask, 400 to kMalformedPayload.
class GatewayClient {
 public:
  explicit GatewayClient(GatewayConfig config, EnvLookup env = process_env());
  ~GatewayClient();

  const GatewayConfig& config() const noexcept { return config_; }

  /// Returns the wire job id. Re-sending the same idempotency key yields the
  /// same id.
  std::string submit(const TaskPayload& payload, std::optional<std::size_t> lane,
                     const std::string& idempotency_key);
  WireJob get_job(const std::string& id);
  TaskStatus poll(const std::string& id);
  /// nullopt while the job is not terminal (409).
  std::optional<nlohmann::json> result(const std::string& id);
  void cancel(const std::string& id);
  std::string target_json();
  nlohmann::json metadata_json();
  /// Single unauthenticated probe with `probe_timeout`; never throws.
  bool health();

  std::uint64_t attempts() const noexcept { return attempts_.load(); }

 private:
  struct Response {
    int status = 0;
    std::string body;
  };

  enum class Method { kGet, kPost, kDelete };

  Response send(Method method, const std::string& path, const std::string& body = {},
                const std::string& idempotency_key = {});
  std::string bearer() const;

  GatewayConfig config_;
  EnvLookup env_;
  std::atomic<std::uint64_t> attempts_{0};
};

/// QuantumResource backed by a remote gateway. Lanes are held locally in a
/// SlotPool; in direct-access mode jobs are pinned to the token's lane, in
/// cloud-queue mode they join the provider queue.
class GatewayResource : public QuantumResource {
 public:
  GatewayResource(ResourceId id, GatewayConfig config, std::shared_ptr<SlotPool> pool,
                  EnvLookup env = process_env());
  ~GatewayResource() override;

  const ResourceId& id() const override { return id_; }
  bool is_accessible() override;
  AcquisitionToken acquire(const std::string& requester = {},
                           std::optional<std::chrono::milliseconds> timeout = std::nullopt) override;
  void release(const AcquisitionToken& token) override;
  TaskId task_start(const AcquisitionToken& token, const TaskPayload& payload) override;
  void task_stop(const TaskId& task) override;
  TaskStatus task_status(const TaskId& task) override;
  TaskResult task_result(const TaskId& task) override;
  Target target() override;
  Metadata metadata() override;
  TaskState task_wait(const TaskId& task, std::chrono::milliseconds max_wait) override;

  void set_maintenance(bool on) { maintenance_ = on; }
  GatewayClient& client() noexcept { return client_; }
  const std::shared_ptr<SlotPool>& pool() const noexcept { return pool_; }

 private:
  void cancel_owned_by(const std::string& token);

  const ResourceId id_;
  GatewayClient client_;
  const std::shared_ptr<SlotPool> pool_;
  std::atomic<bool> maintenance_{false};
  std::mutex mu_;
  std::map<std::string, std::string> owner_;  // wire id -> token
};

}  // namespace qrmi
