// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qrmi/errors.hpp"
#include "qrmi/registry.hpp"

namespace qrmi {

/// Plugin context a job runs under. Hook assignment:
///   allocator  - no hooks
///   local      - prologue, task_init, epilogue
///   remote     - prologue, task_init, epilogue
///   job_script - prologue, epilogue
enum class ContextKind { kAllocator, kLocal, kRemote, kJobScript };

enum class JobPhase { kCreated, kPrologued, kTaskInit, kRunningTask, kEpilogued, kDone, kFailed };

enum class HookKind { kPrologue, kTaskInit, kEpilogue };

std::string_view to_string(ContextKind kind);
std::optional<ContextKind> context_kind_from_string(std::string_view name);
std::string_view to_string(JobPhase phase);
std::string_view to_string(HookKind hook);

// Injected environment contract.
inline constexpr std::string_view kEnvResourceId = "QRMI_RESOURCE_ID";
inline constexpr std::string_view kEnvBackendType = "QRMI_BACKEND_TYPE";
inline constexpr std::string_view kEnvTokenPrefix = "QRMI_TOKEN_";
inline constexpr std::string_view kEnvTokenCount = "QRMI_TOKEN_COUNT";
inline constexpr std::string_view kEnvJobId = "QRMI_JOB_ID";
inline constexpr std::string_view kEnvOptionPrefix = "QRMI_OPT_";
inline constexpr std::string_view kEnvMiddleware = "QRMI_MIDDLEWARE";

/// Plugin options accepted by task_init, with or without a leading "--".
const std::vector<std::string>& known_plugin_options();

struct ResourceRequest {
  std::optional<ResourceId> resource;  // nullopt means any qpu
  std::size_t count = 1;
};

struct ScriptStep {
  enum class Kind { kSubmit, kAwait, kStatus, kStop, kTarget, kClassical, kExit };

  Kind kind = Kind::kExit;
  TaskPayload payload;                    // kSubmit
  std::size_t token_index = 0;            // kSubmit: which QRMI_TOKEN_<i>
  std::optional<std::size_t> task_index;  // kAwait/kStatus/kStop, default last
  Millis duration{0};                     // kClassical
  int exit_code = 0;                      // kExit
};

// {"op":"submit","circuit":"...","format":"circuit-v1","shots":N,"token":0}
// {"op":"await"|"status"|"stop","task":i}  {"op":"target"}
// {"op":"classical","duration_ms":d}  {"op":"exit","code":c}
ScriptStep script_step_from_json(const nlohmann::json& j);
std::vector<ScriptStep> script_from_json(const nlohmann::json& j);

struct JobSpec {
  std::int64_t job_id = 0;
  ContextKind context = ContextKind::kLocal;
  std::vector<ResourceRequest> requested;
  std::map<std::string, std::string> options;
  std::vector<ScriptStep> script;
  // Secret name -> environment variable holding it.
  std::map<std::string, std::string> secrets;
  std::optional<std::chrono::milliseconds> acquire_timeout;
};

/// {"job_id","gres":"qpu:<count>","resource"?,"options":{...},"script":[...],
///  "context"?, "secrets"?: {name: env_var}, "timeout_ms"?}
JobSpec job_spec_from_json(const nlohmann::json& j);

/// "qpu", "qpu:3" or "QPU:2". Throws kValidationError otherwise.
std::size_t parse_gres(std::string_view gres);

struct HookResult {
  HookKind hook = HookKind::kPrologue;
  bool ok = false;
  std::string detail;
  Millis duration{0};
  std::optional<ErrorCode> error;
};

struct JobContext {
  std::int64_t job_id = 0;
  std::vector<ResourceRequest> requested;
  JobPhase phase = JobPhase::kCreated;
  std::map<std::string, std::string> env;
  std::vector<AcquisitionToken> tokens;
  ContextKind context_kind = ContextKind::kLocal;
  std::map<std::string, std::string> secrets;
  std::map<std::string, std::string> options;
  std::optional<std::chrono::milliseconds> acquire_timeout;

  std::vector<HookResult> hooks;
  std::vector<TaskId> tasks;
  std::vector<Counts> results;
  std::optional<int> exit_status;
  // Resources the user task resolved from its environment.
  std::vector<ResourceId> observed_resources;
  std::vector<std::string> log;
  bool prologue_ok = false;
  bool epilogue_done = false;
  bool middleware_up = false;

  static JobContext from_spec(const JobSpec& spec);

  // Resolved secret values. Kept out of `env` on purpose.
  std::map<std::string, std::string> resolved_secrets;
};

std::string to_json_line(std::int64_t job_id, const HookResult& hook);
std::string hook_trace_jsonl(const JobContext& ctx);

/// Executes a task program one step at a time. `advance()` runs steps until
/// one has to wait for simulated time or for a task, so the same program can
/// be driven by a blocking thread or by the discrete-event simulator.
class ScriptRunner {
 public:
  struct Yield {
    enum class Kind { kSleep, kWaitTask, kExit };
    Kind kind = Kind::kExit;
    Millis sleep{0};
    std::optional<TaskId> task;
    int exit_code = 0;
  };

  ScriptRunner(JobContext& ctx, Registry& registry, std::vector<ScriptStep> steps);

  Yield advance();

 private:
  AcquisitionToken token_from_env(std::size_t index);
  const TaskId& task_at(const std::optional<std::size_t>& index) const;

  JobContext& ctx_;
  Registry& registry_;
  std::vector<ScriptStep> steps_;
  std::size_t pc_ = 0;
  bool done_ = false;
  int exit_code_ = 0;
};

class JobHarness {
 public:
  explicit JobHarness(Registry& registry, EnvLookup env = process_env());

  /// Resolves secrets, acquires one token per requested unit, raises the
  /// middleware marker. On any failure holds zero tokens and ends Failed.
  HookResult run_prologue(JobContext& ctx);
  /// Parses plugin options and injects identifiers into ctx.env.
  HookResult run_task_init(JobContext& ctx);
  /// Runs the program to completion, blocking on tasks. Returns exit status.
  int run_user_task(JobContext& ctx, const std::vector<ScriptStep>& script);
  /// Releases every token. Release errors are logged, never raised. A second
  /// call is a no-op and is not recorded.
  HookResult run_epilogue(JobContext& ctx);

  /// Full lifecycle for one job according to its context kind.
  JobContext run_job(const JobSpec& spec);

  Registry& registry() noexcept { return registry_; }

 private:
  std::optional<AcquisitionToken> acquire_unit(JobContext& ctx, const ResourceRequest& req);
  HookResult finish_hook(JobContext& ctx, HookKind hook, Millis started, bool ok,
                         std::string detail, std::optional<ErrorCode> error);

  Registry& registry_;
  EnvLookup env_;
};

}  // namespace qrmi
