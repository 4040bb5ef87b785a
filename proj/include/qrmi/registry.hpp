// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "qrmi/gateway.hpp"
#include "qrmi/lock_manager.hpp"
#include "qrmi/pseudo_qpu.hpp"
#include "qrmi/quantum_resource.hpp"

namespace qrmi {

enum class BackendKind { kSimulated, kDirectAccess, kCloudQueue };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> backend_kind_from_string(std::string_view name);

inline constexpr std::string_view kGresName = "qpu";
inline constexpr std::string_view kConfigEnvVar = "QRMI_CONFIG";
inline constexpr std::string_view kDefaultConfigFile = "qrmi_config.json";

struct ResourceEntry {
  ResourceId id;
  BackendKind backend = BackendKind::kSimulated;
  std::size_t lanes = 1;
  bool maintenance = false;
  std::string gres_name{kGresName};
  std::optional<DeviceSpec> device;
  std::optional<GatewayConfig> gateway;
  // Opt-in lease length for tokens on this resource.
  std::optional<Millis> lease;
};

struct RegistryConfig {
  std::int64_t version = 1;
  std::vector<ResourceEntry> resources;
};

/// Parses and validates; `source` names the input in error messages.
/// Throws kParseError (with line and column) or kValidationError naming the
/// first failing rule.
RegistryConfig parse_config(std::string_view text, const std::string& source = "<config>");
RegistryConfig config_from_json(const nlohmann::json& j);
RegistryConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RegistryConfig& config);
void validate(const RegistryConfig& config);

/// $QRMI_CONFIG when set, else ./qrmi_config.json.
std::filesystem::path default_config_path(const EnvLookup& env = process_env());

/// Owns one backend and one SlotPool per configured resource and routes the
/// id-keyed resource-control calls to them. Readers never observe a partially
/// applied reload.
class Registry {
 public:
  struct Options {
    // Shared by every pool and simulated device. Defaults to an
    // auto-advancing clock.
    std::shared_ptr<SimClock> clock;
    EnvLookup env;
    // When set, overrides the seed of every simulated device (mixed with the
    // resource id).
    std::optional<std::uint64_t> seed;
  };

  static std::unique_ptr<Registry> open(const RegistryConfig& config, Options options = {});
  ~Registry();

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  bool is_accessible(const ResourceId& id);
  AcquisitionToken acquire(const ResourceId& id, const std::string& requester = {},
                           std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  void release(const AcquisitionToken& token);
  TaskId task_start(const AcquisitionToken& token, const TaskPayload& payload);
  void task_stop(const TaskId& task);
  TaskStatus task_status(const TaskId& task);
  TaskResult task_result(const TaskId& task);
  TaskState task_wait(const TaskId& task, std::chrono::milliseconds max_wait);
  Target target(const ResourceId& id);
  Metadata metadata(const ResourceId& id);

  /// Sorted by id.
  std::vector<std::pair<ResourceId, Metadata>> list();
  std::vector<ResourceId> ids() const;

  std::shared_ptr<QuantumResource> resource(const ResourceId& id) const;
  std::shared_ptr<SlotPool> pool(const ResourceId& id) const;
  /// nullptr unless the resource is simulated.
  std::shared_ptr<PseudoQpu> simulated(const ResourceId& id) const;
  std::optional<ResourceEntry> entry(const ResourceId& id) const;

  /// Resource a task was started on through this registry.
  std::optional<ResourceId> task_resource(const TaskId& task) const;

  /// Looks a live token up by its opaque string across all pools.
  std::optional<AcquisitionToken> find_token(const std::string& token) const;

  /// Swaps in a new configuration. Entries that are unchanged keep their
  /// backend, pool, and held tokens.
  void reload(const RegistryConfig& config);
  RegistryConfig config() const;

  const std::shared_ptr<SimClock>& clock() const noexcept { return clock_; }

  /// Closes every pool; blocked acquirers fail with kPoolClosed.
  void close();

 private:
  struct Slot {
    ResourceEntry entry;
    std::shared_ptr<SlotPool> pool;
    std::shared_ptr<QuantumResource> backend;
    std::shared_ptr<PseudoQpu> simulated;
  };
  using Table = std::map<ResourceId, std::shared_ptr<const Slot>>;

  Registry(std::shared_ptr<SimClock> clock, EnvLookup env, std::optional<std::uint64_t> seed);

  std::shared_ptr<const Slot> build(const ResourceEntry& entry) const;
  std::shared_ptr<const Table> table() const;
  std::shared_ptr<const Slot> find(const ResourceId& id) const;
  std::shared_ptr<QuantumResource> route(const TaskId& task) const;

  std::shared_ptr<SimClock> clock_;
  EnvLookup env_;
  std::optional<std::uint64_t> seed_;

  mutable std::shared_mutex mu_;
  std::shared_ptr<const Table> table_;
  RegistryConfig config_;

  mutable std::mutex tasks_mu_;
  std::map<TaskId, ResourceId> task_owner_;
};

}  // namespace qrmi
