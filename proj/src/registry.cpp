// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/registry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "qrmi/errors.hpp"

namespace qrmi {

using nlohmann::json;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kSimulated: return "simulated";
    case BackendKind::kDirectAccess: return "direct-access";
    case BackendKind::kCloudQueue: return "cloud-queue";
  }
  return "unknown";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view name) {
  if (name == "simulated") return BackendKind::kSimulated;
  if (name == "direct-access") return BackendKind::kDirectAccess;
  if (name == "cloud-queue") return BackendKind::kCloudQueue;
  return std::nullopt;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

ResourceEntry entry_from_json(const json& r, std::size_t index) {
  const std::string where = "resources[" + std::to_string(index) + "]";
  if (!r.is_object()) raise(ErrorCode::kValidationError, where + " must be an object");
  for (const char* key : {"id", "backend", "lanes"}) {
    if (!r.contains(key)) raise(ErrorCode::kValidationError, where + " missing \"" + key + "\"");
  }
  ResourceEntry e;
  try {
    std::string id = r.at("id").get<std::string>();
    if (!ResourceId::is_valid(id)) raise(ErrorCode::kValidationError, "invalid resource id '" + id + "'");
    e.id = ResourceId(id);
    std::string backend = r.at("backend").get<std::string>();
    auto kind = backend_kind_from_string(backend);
    if (!kind) raise(ErrorCode::kValidationError, "unknown backend '" + backend + "' for " + id);
    e.backend = *kind;
    auto lanes = r.at("lanes").get<std::int64_t>();
    if (lanes < 1) raise(ErrorCode::kValidationError, "lanes must be >= 1 for " + id);
    e.lanes = static_cast<std::size_t>(lanes);
    e.maintenance = r.value("maintenance", false);
    e.gres_name = lower(r.value("gres_name", std::string(kGresName)));
    if (e.gres_name != kGresName) {
      raise(ErrorCode::kValidationError, "gres_name must be \"qpu\" for " + id);
    }
    if (r.contains("lease_ms")) {
      auto lease = r.at("lease_ms").get<std::int64_t>();
      if (lease < 1) raise(ErrorCode::kValidationError, "lease_ms must be >= 1 for " + id);
      e.lease = Millis{lease};
    }
    if (e.backend == BackendKind::kSimulated) {
      json dev = r.value("device", json::object());
      if (!dev.contains("num_lanes")) dev["num_lanes"] = e.lanes;
      e.device = device_spec_from_json(dev);
      if (e.device->num_lanes != e.lanes) {
        raise(ErrorCode::kValidationError, "lane count mismatch for " + id + ": lanes=" +
                                               std::to_string(e.lanes) + " device.num_lanes=" +
                                               std::to_string(e.device->num_lanes));
      }
    } else {
      if (!r.contains("gateway")) raise(ErrorCode::kValidationError, "missing \"gateway\" for " + id);
      auto mode = e.backend == BackendKind::kDirectAccess ? GatewayMode::kDirectAccess
                                                          : GatewayMode::kCloudQueue;
      e.gateway = gateway_config_from_json(r.at("gateway"), mode);
    }
  } catch (const json::exception& ex) {
    raise(ErrorCode::kValidationError, where + ": " + ex.what());
  }
  return e;
}

json entry_to_json(const ResourceEntry& e) {
  json j = {{"id", e.id.str()},
            {"backend", to_string(e.backend)},
            {"lanes", e.lanes},
            {"maintenance", e.maintenance},
            {"gres_name", e.gres_name}};
  if (e.lease) j["lease_ms"] = e.lease->count();
  if (e.device) j["device"] = to_json(*e.device);
  if (e.gateway) j["gateway"] = to_json(*e.gateway);
  return j;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void validate(const RegistryConfig& config) {
  if (config.version < 1) raise(ErrorCode::kValidationError, "version must be >= 1");
  std::set<ResourceId> seen;
  for (const auto& e : config.resources) {
    if (!seen.insert(e.id).second) {
      raise(ErrorCode::kValidationError, "duplicate resource id '" + e.id.str() + "'");
    }
    if (e.lanes < 1) raise(ErrorCode::kValidationError, "lanes must be >= 1 for " + e.id.str());
    if (e.gres_name != kGresName) raise(ErrorCode::kValidationError, "gres_name must be \"qpu\"");
    if (e.backend == BackendKind::kSimulated) {
      if (!e.device) raise(ErrorCode::kValidationError, "missing device for " + e.id.str());
      validate(*e.device);
      if (e.device->num_lanes != e.lanes) {
        raise(ErrorCode::kValidationError, "lane count mismatch for " + e.id.str());
      }
    } else {
      if (!e.gateway) raise(ErrorCode::kValidationError, "missing gateway for " + e.id.str());
      validate(*e.gateway);
    }
  }
}

RegistryConfig config_from_json(const json& j) {
  if (!j.is_object()) raise(ErrorCode::kValidationError, "config must be a JSON object");
  RegistryConfig c;
  try {
    if (!j.contains("version")) raise(ErrorCode::kValidationError, "missing \"version\"");
    c.version = j.at("version").get<std::int64_t>();
    if (c.version < 1) raise(ErrorCode::kValidationError, "version must be >= 1");
    if (!j.contains("resources") || !j.at("resources").is_array()) {
      raise(ErrorCode::kValidationError, "\"resources\" must be an array");
    }
    std::set<std::string> seen;
    std::size_t i = 0;
    for (const auto& r : j.at("resources")) {
      // Check duplicates before deeper validation so the rule is named.
      if (r.is_object() && r.contains("id") && r["id"].is_string() &&
          !seen.insert(r["id"].get<std::string>()).second) {
        raise(ErrorCode::kValidationError, "duplicate resource id '" + r["id"].get<std::string>() + "'");
      }
      c.resources.push_back(entry_from_json(r, i++));
    }
  } catch (const json::exception& ex) {
    raise(ErrorCode::kValidationError, ex.what());
  }
  validate(c);
  return c;
}

RegistryConfig parse_config(std::string_view text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    raise(ErrorCode::kParseError, source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                      ": " + e.what());
  }
  return config_from_json(j);
}

RegistryConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kParseError, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

json to_json(const RegistryConfig& config) {
  json resources = json::array();
  for (const auto& e : config.resources) resources.push_back(entry_to_json(e));
  return {{"version", config.version}, {"resources", resources}};
}

std::filesystem::path default_config_path(const EnvLookup& env) {
  if (auto v = env(std::string(kConfigEnvVar)); v && !v->empty()) return *v;
  return std::string(kDefaultConfigFile);
}

Registry::Registry(std::shared_ptr<SimClock> clock, EnvLookup env, std::optional<std::uint64_t> seed)
    : clock_(std::move(clock)), env_(std::move(env)), seed_(seed) {}

Registry::~Registry() { close(); }

std::unique_ptr<Registry> Registry::open(const RegistryConfig& config, Options options) {
  validate(config);
  auto clock = options.clock ? options.clock
                             : std::make_shared<SimClock>(SimClock::Mode::kAutoAdvance);
  auto env = options.env ? options.env : process_env();
  std::unique_ptr<Registry> reg(new Registry(std::move(clock), std::move(env), options.seed));
  auto table = std::make_shared<Table>();
  for (const auto& e : config.resources) table->emplace(e.id, reg->build(e));
  reg->table_ = std::move(table);
  reg->config_ = config;
  return reg;
}

std::shared_ptr<const Registry::Slot> Registry::build(const ResourceEntry& e) const {
  auto slot = std::make_shared<Slot>();
  slot->entry = e;
  try {
    slot->pool = std::make_shared<SlotPool>(e.id, e.lanes, clock_, e.lease);
    if (e.backend == BackendKind::kSimulated) {
      DeviceSpec spec = *e.device;
      if (seed_) spec.seed = *seed_ ^ fnv1a(e.id.str());
      slot->simulated = std::make_shared<PseudoQpu>(e.id, spec, clock_, slot->pool);
      slot->simulated->set_maintenance(e.maintenance);
      slot->backend = slot->simulated;
    } else {
      auto gw = std::make_shared<GatewayResource>(e.id, *e.gateway, slot->pool, env_);
      gw->set_maintenance(e.maintenance);
      // Lane counts are checked only when the gateway answers now; an
      // unreachable gateway is accepted and reported as inaccessible.
      if (gw->client().health()) {
        std::size_t remote_lanes = 0;
        try {
          remote_lanes = gw->client().metadata_json().at("num_lanes").get<std::size_t>();
        } catch (const std::exception&) {
          remote_lanes = 0;
        }
        if (remote_lanes != 0 && remote_lanes != e.lanes) {
          raise(ErrorCode::kValidationError,
                "lane count mismatch for " + e.id.str() + ": config=" + std::to_string(e.lanes) +
                    " gateway=" + std::to_string(remote_lanes));
        }
      }
      slot->backend = gw;
    }
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kValidationError) throw;
    raise(ErrorCode::kBackendInitFailed, e.id.str() + ": " + ex.what());
  } catch (const std::exception& ex) {
    raise(ErrorCode::kBackendInitFailed, e.id.str() + ": " + ex.what());
  }
  return slot;
}

std::shared_ptr<const Registry::Table> Registry::table() const {
  std::shared_lock lock(mu_);
  return table_;
}

std::shared_ptr<const Registry::Slot> Registry::find(const ResourceId& id) const {
  auto t = table();
  auto it = t->find(id);
  if (it == t->end()) raise(ErrorCode::kUnknownResource, id.str());
  return it->second;
}

bool Registry::is_accessible(const ResourceId& id) {
  auto slot = find(id);
  try {
    return slot->backend->is_accessible();
  } catch (const std::exception&) {
    return false;
  }
}

AcquisitionToken Registry::acquire(const ResourceId& id, const std::string& requester,
                                   std::optional<std::chrono::milliseconds> timeout) {
  return find(id)->backend->acquire(requester, timeout);
}

void Registry::release(const AcquisitionToken& token) {
  auto t = table();
  auto it = t->find(token.resource);
  if (it == t->end()) raise(ErrorCode::kInvalidToken, "token names unknown resource");
  it->second->backend->release(token);
}

TaskId Registry::task_start(const AcquisitionToken& token, const TaskPayload& payload) {
  auto t = table();
  auto it = t->find(token.resource);
  if (it == t->end()) raise(ErrorCode::kInvalidToken, "token names unknown resource");
  TaskId id = it->second->backend->task_start(token, payload);
  std::lock_guard lock(tasks_mu_);
  task_owner_[id] = token.resource;
  return id;
}

std::shared_ptr<QuantumResource> Registry::route(const TaskId& task) const {
  ResourceId owner;
  {
    std::lock_guard lock(tasks_mu_);
    auto it = task_owner_.find(task);
    if (it == task_owner_.end()) raise(ErrorCode::kUnknownTask, task.str());
    owner = it->second;
  }
  auto t = table();
  auto it = t->find(owner);
  if (it == t->end()) raise(ErrorCode::kUnknownTask, task.str());
  return it->second->backend;
}

void Registry::task_stop(const TaskId& task) { route(task)->task_stop(task); }
TaskStatus Registry::task_status(const TaskId& task) { return route(task)->task_status(task); }
TaskResult Registry::task_result(const TaskId& task) { return route(task)->task_result(task); }

TaskState Registry::task_wait(const TaskId& task, std::chrono::milliseconds max_wait) {
  return route(task)->task_wait(task, max_wait);
}

Target Registry::target(const ResourceId& id) { return find(id)->backend->target(); }
Metadata Registry::metadata(const ResourceId& id) { return find(id)->backend->metadata(); }

std::vector<std::pair<ResourceId, Metadata>> Registry::list() {
  std::vector<std::pair<ResourceId, Metadata>> out;
  for (const auto& [id, slot] : *table()) out.emplace_back(id, slot->backend->metadata());
  return out;
}

std::vector<ResourceId> Registry::ids() const {
  std::vector<ResourceId> out;
  for (const auto& [id, slot] : *table()) out.push_back(id);
  return out;
}

std::shared_ptr<QuantumResource> Registry::resource(const ResourceId& id) const {
  return find(id)->backend;
}

std::shared_ptr<SlotPool> Registry::pool(const ResourceId& id) const { return find(id)->pool; }

std::shared_ptr<PseudoQpu> Registry::simulated(const ResourceId& id) const {
  return find(id)->simulated;
}

std::optional<ResourceEntry> Registry::entry(const ResourceId& id) const {
  auto t = table();
  auto it = t->find(id);
  if (it == t->end()) return std::nullopt;
  return it->second->entry;
}

std::optional<AcquisitionToken> Registry::find_token(const std::string& token) const {
  for (const auto& [id, slot] : *table()) {
    if (auto t = slot->pool->find(token)) return t;
  }
  return std::nullopt;
}

std::optional<ResourceId> Registry::task_resource(const TaskId& task) const {
  std::lock_guard lock(tasks_mu_);
  auto it = task_owner_.find(task);
  if (it == task_owner_.end()) return std::nullopt;
  return it->second;
}

void Registry::reload(const RegistryConfig& config) {
  validate(config);
  auto current = table();
  auto next = std::make_shared<Table>();
  for (const auto& e : config.resources) {
    auto it = current->find(e.id);
    if (it != current->end() && entry_to_json(it->second->entry) == entry_to_json(e)) {
      next->emplace(e.id, it->second);
    } else {
      next->emplace(e.id, build(e));
    }
  }
  std::shared_ptr<const Table> old;
  {
    std::unique_lock lock(mu_);
    old = table_;
    table_ = next;
    config_ = config;
  }
  for (const auto& [id, slot] : *old) {
    auto it = next->find(id);
    if (it == next->end() || it->second != slot) slot->pool->close();
  }
}

RegistryConfig Registry::config() const {
  std::shared_lock lock(mu_);
  return config_;
}

void Registry::close() {
  auto t = table();
  if (!t) return;
  for (const auto& [id, slot] : *t) slot->pool->close();
}

}  // namespace qrmi
