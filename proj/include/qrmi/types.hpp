// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qrmi {

/// Simulated time and durations. One tick is one millisecond.
using Millis = std::chrono::milliseconds;

using Bytes = std::string;

/// Environment lookup; injectable so tests never touch the process env.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();

/// Scheduler-side name of a quantum resource, `[A-Za-z0-9_.-]{1,128}`.
class ResourceId {
 public:
  ResourceId() = default;
  explicit ResourceId(std::string value);

  static bool is_valid(std::string_view value);

  const std::string& str() const noexcept { return value_; }

  auto operator<=>(const ResourceId&) const = default;

 private:
  std::string value_;
};

/// Backend-scoped task identifier (UUID-formatted for every built-in backend).
class TaskId {
 public:
  TaskId() = default;
  explicit TaskId(std::string value);

  const std::string& str() const noexcept { return value_; }

  auto operator<=>(const TaskId&) const = default;

 private:
  std::string value_;
};

enum class TaskState { kQueued, kRunning, kCompleted, kFailed, kCancelled };

std::string_view to_string(TaskState state);
std::optional<TaskState> task_state_from_string(std::string_view name);

bool is_terminal(TaskState state);

// Single-step edges of the lifecycle graph.
bool is_legal_transition(TaskState from, TaskState to);

// True when `to` is reachable from `from` by zero or more legal steps.
// Polling observers use this: a poll may miss intermediate states.
bool is_reachable(TaskState from, TaskState to);

struct TaskStatus {
  TaskState state = TaskState::kQueued;
  std::string reason;  // set for kFailed
};

struct AcquisitionToken {
  std::string token;
  ResourceId resource;
  std::size_t slot = 0;
  Millis acquired_at{0};
  std::optional<Millis> lease_expiry;

  bool operator==(const AcquisitionToken&) const = default;
};

inline constexpr std::string_view kFormatCircuitV1 = "circuit-v1";
inline constexpr std::string_view kFormatOpaque = "opaque";

struct TaskPayload {
  std::string format{kFormatCircuitV1};
  Bytes body;
  // Overrides the `shots` line of a circuit body when set.
  std::optional<std::int64_t> shots;
  std::map<std::string, std::string> metadata;
};

using Counts = std::map<std::string, std::uint64_t>;

struct TaskResult {
  TaskId task;
  Counts counts;
  Bytes raw;
  Millis completed_at{0};
};

struct Target {
  ResourceId resource;
  std::string format;
  Bytes body;
  std::int64_t version = 1;

  bool operator==(const Target&) const = default;
};

inline constexpr std::string_view kTargetFormat = "qrmi-target-json";

std::string serialize(const Target& target);
Target deserialize_target(std::string_view text);

struct Metadata {
  std::map<std::string, std::string> entries;

  const std::string& at(const std::string& key) const { return entries.at(key); }
  bool contains(const std::string& key) const { return entries.contains(key); }
};

std::string counts_to_json(const Counts& counts);
Counts counts_from_json(std::string_view text);

}  // namespace qrmi
