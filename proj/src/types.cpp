// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/types.hpp"

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "qrmi/errors.hpp"
#include "qrmi/util.hpp"

namespace qrmi {

using nlohmann::json;

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

ResourceId::ResourceId(std::string value) : value_(std::move(value)) {
  if (!is_valid(value_)) {
    raise(ErrorCode::kValidationError, "invalid resource id '" + value_ + "'");
  }
}

bool ResourceId::is_valid(std::string_view value) {
  if (value.empty() || value.size() > 128) return false;
  for (char c : value) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

TaskId::TaskId(std::string value) : value_(std::move(value)) {
  if (value_.empty()) raise(ErrorCode::kUnknownTask, "empty task id");
}

std::string_view to_string(TaskState state) {
  switch (state) {
    case TaskState::kQueued: return "Queued";
    case TaskState::kRunning: return "Running";
    case TaskState::kCompleted: return "Completed";
    case TaskState::kFailed: return "Failed";
    case TaskState::kCancelled: return "Cancelled";
  }
  return "Unknown";
}

std::optional<TaskState> task_state_from_string(std::string_view name) {
  for (auto s : {TaskState::kQueued, TaskState::kRunning, TaskState::kCompleted,
                 TaskState::kFailed, TaskState::kCancelled}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

bool is_terminal(TaskState state) {
  return state == TaskState::kCompleted || state == TaskState::kFailed ||
         state == TaskState::kCancelled;
}

bool is_legal_transition(TaskState from, TaskState to) {
  switch (from) {
    case TaskState::kQueued:
      return to == TaskState::kRunning || to == TaskState::kCancelled;
    case TaskState::kRunning:
      return to == TaskState::kCompleted || to == TaskState::kFailed ||
             to == TaskState::kCancelled;
    default:
      return false;
  }
}

bool is_reachable(TaskState from, TaskState to) {
  if (from == to) return true;
  if (is_legal_transition(from, to)) return true;
  return from == TaskState::kQueued && is_legal_transition(TaskState::kRunning, to);
}

std::string serialize(const Target& target) {
  json j = {{"resource", target.resource.str()},
            {"format", target.format},
            {"body", base64_encode(target.body)},
            {"version", target.version}};
  return j.dump();
}

Target deserialize_target(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
    Target t;
    t.resource = ResourceId(j.at("resource").get<std::string>());
    t.format = j.at("format").get<std::string>();
    t.body = base64_decode(j.at("body").get<std::string>());
    t.version = j.at("version").get<std::int64_t>();
    if (t.body.empty() || t.version < 1) {
      raise(ErrorCode::kParseError, "target body empty or version < 1");
    }
    return t;
  } catch (const json::exception& e) {
    raise(ErrorCode::kParseError, std::string("target: ") + e.what());
  }
}

std::string counts_to_json(const Counts& counts) {
  json j = json::object();
  for (const auto& [k, v] : counts) j[k] = v;
  return j.dump();
}

Counts counts_from_json(std::string_view text) {
  try {
    Counts out;
    json j = json::parse(text);
    if (!j.is_object()) raise(ErrorCode::kParseError, "counts must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.value().is_number_unsigned()) {
        raise(ErrorCode::kParseError, "count for '" + it.key() + "' is not a non-negative integer");
      }
      out[it.key()] = it.value().get<std::uint64_t>();
    }
    return out;
  } catch (const json::exception& e) {
    raise(ErrorCode::kParseError, std::string("counts: ") + e.what());
  }
}

}  // namespace qrmi
