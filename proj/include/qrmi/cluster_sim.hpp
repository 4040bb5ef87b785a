// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qrmi/job_harness.hpp"
#include "qrmi/registry.hpp"

namespace qrmi {

enum class SchedulingPolicy { kFifo, kBackfill };

std::string_view to_string(SchedulingPolicy policy);

struct NodeSpec {
  std::string name;
  int cores = 1;
};

struct ClusterSpec {
  std::vector<NodeSpec> nodes;
  RegistryConfig registry;
  SchedulingPolicy policy = SchedulingPolicy::kFifo;
};

struct SimJob {
  std::int64_t job_id = 0;
  Millis arrival{0};
  int cores = 0;
  std::size_t qpu_count = 0;
  std::optional<ResourceId> qpu_resource;
  std::vector<ScriptStep> script;
  // Classical work done at the start of the user task.
  Millis duration_classical{0};
  std::map<std::string, std::string> options;
};

enum class SimEventKind { kSubmitted, kBlocked, kStarted, kPrologueDone, kTaskDone, kEpilogueDone, kFinished };

std::string_view to_string(SimEventKind kind);

struct SimEvent {
  Millis time{0};
  std::int64_t job_id = 0;
  SimEventKind kind = SimEventKind::kSubmitted;
  std::string detail;
};

/// One contiguous hold of a resource by a job: cores on a node, or one lane
/// of a QPU.
struct Allocation {
  std::int64_t job_id = 0;
  std::string resource;
  std::optional<std::size_t> lane;
  int cores = 0;
  Millis start{0};
  Millis end{0};
};

struct SimTrace {
  std::vector<SimEvent> events;
  Millis makespan{0};
  std::vector<Allocation> allocations;
  std::map<std::int64_t, std::vector<HookResult>> hooks;
  std::map<std::int64_t, int> exit_status;
  std::vector<std::int64_t> unfinished;
  std::vector<LockEvent> lock_events;

  bool all_finished() const { return unfinished.empty(); }
};

struct Scenario {
  ClusterSpec cluster;
  std::vector<SimJob> jobs;
  std::uint64_t seed = 0;
};

/// {"cluster":{"nodes":[{"name","cores"}],"registry":{...}|"registry_path":".."},
///  "jobs":[{"job_id","arrival_ms","cores","gres","resource"?,
///           "duration_classical_ms","script","options","count"?}],
///  "policy":"fifo"|"backfill","seed":n}
/// `count` expands one entry into that many jobs with consecutive ids.
/// Throws kSpecError.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
Scenario load_scenario(const std::filesystem::path& path);

/// Runs the workload to completion on a single-threaded event loop. A job
/// starts only when its cores and QPU lanes are all free at once; its
/// lifecycle goes through JobHarness hooks. Throws kSpecError for invalid
/// input.
SimTrace simulate(const ClusterSpec& cluster, const std::vector<SimJob>& jobs, std::uint64_t seed);

/// Busy fraction over the makespan, keyed "node:<name>" and
/// "qpu:<id>/lane<k>".
std::map<std::string, double> utilization(const SimTrace& trace, const ClusterSpec& cluster);

std::string trace_jsonl(const SimTrace& trace);

}  // namespace qrmi
