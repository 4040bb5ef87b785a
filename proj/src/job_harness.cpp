// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/job_harness.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace qrmi {

using nlohmann::json;

std::string_view to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::kAllocator: return "allocator";
    case ContextKind::kLocal: return "local";
    case ContextKind::kRemote: return "remote";
    case ContextKind::kJobScript: return "job_script";
  }
  return "unknown";
}

std::optional<ContextKind> context_kind_from_string(std::string_view name) {
  for (auto k : {ContextKind::kAllocator, ContextKind::kLocal, ContextKind::kRemote,
                 ContextKind::kJobScript}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(JobPhase phase) {
  switch (phase) {
    case JobPhase::kCreated: return "Created";
    case JobPhase::kPrologued: return "Prologued";
    case JobPhase::kTaskInit: return "TaskInit";
    case JobPhase::kRunningTask: return "RunningTask";
    case JobPhase::kEpilogued: return "Epilogued";
    case JobPhase::kDone: return "Done";
    case JobPhase::kFailed: return "Failed";
  }
  return "unknown";
}

std::string_view to_string(HookKind hook) {
  switch (hook) {
    case HookKind::kPrologue: return "prologue";
    case HookKind::kTaskInit: return "task_init";
    case HookKind::kEpilogue: return "epilogue";
  }
  return "unknown";
}

const std::vector<std::string>& known_plugin_options() {
  static const std::vector<std::string> kOptions = {"qpu-primitive", "qpu-shots",
                                                    "qpu-log-level", "qpu-transpile"};
  return kOptions;
}

std::size_t parse_gres(std::string_view gres) {
  std::string s(gres);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "qpu") return 1;
  if (!s.starts_with("qpu:")) raise(ErrorCode::kValidationError, "gres must be qpu[:<count>]");
  std::string count = s.substr(4);
  if (count.empty() || !std::all_of(count.begin(), count.end(), ::isdigit) || count.size() > 6) {
    raise(ErrorCode::kValidationError, "bad gres count in '" + std::string(gres) + "'");
  }
  return static_cast<std::size_t>(std::stoul(count));
}

ScriptStep script_step_from_json(const json& j) {
  ScriptStep step;
  try {
    std::string op = j.at("op").get<std::string>();
    if (op == "submit") {
      step.kind = ScriptStep::Kind::kSubmit;
      step.payload.format = j.value("format", std::string(kFormatCircuitV1));
      if (j.contains("circuit")) {
        step.payload.body = j.at("circuit").get<std::string>();
      } else {
        step.payload.body = j.value("body", std::string());
      }
      if (j.contains("shots")) step.payload.shots = j.at("shots").get<std::int64_t>();
      step.token_index = j.value("token", std::size_t{0});
    } else if (op == "await" || op == "status" || op == "stop") {
      step.kind = op == "await"    ? ScriptStep::Kind::kAwait
                  : op == "status" ? ScriptStep::Kind::kStatus
                                   : ScriptStep::Kind::kStop;
      if (j.contains("task")) step.task_index = j.at("task").get<std::size_t>();
    } else if (op == "target") {
      step.kind = ScriptStep::Kind::kTarget;
    } else if (op == "classical") {
      step.kind = ScriptStep::Kind::kClassical;
      step.duration = Millis{j.at("duration_ms").get<std::int64_t>()};
      if (step.duration.count() < 0) raise(ErrorCode::kValidationError, "negative duration");
    } else if (op == "exit") {
      step.kind = ScriptStep::Kind::kExit;
      step.exit_code = j.value("code", 0);
    } else {
      raise(ErrorCode::kValidationError, "unknown script op '" + op + "'");
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::kValidationError, std::string("script step: ") + e.what());
  }
  return step;
}

std::vector<ScriptStep> script_from_json(const json& j) {
  if (!j.is_array()) raise(ErrorCode::kValidationError, "script must be an array");
  std::vector<ScriptStep> out;
  for (const auto& s : j) out.push_back(script_step_from_json(s));
  return out;
}

JobSpec job_spec_from_json(const json& j) {
  JobSpec spec;
  try {
    spec.job_id = j.at("job_id").get<std::int64_t>();
    std::size_t count = parse_gres(j.value("gres", std::string("qpu:1")));
    std::optional<ResourceId> resource;
    if (j.contains("resource") && !j["resource"].is_null()) {
      std::string r = j["resource"].get<std::string>();
      if (r != "any") resource = ResourceId(r);
    }
    if (count > 0) spec.requested.push_back(ResourceRequest{resource, count});
    if (j.contains("options")) {
      for (const auto& [k, v] : j.at("options").items()) {
        spec.options[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    if (j.contains("script")) spec.script = script_from_json(j.at("script"));
    if (j.contains("context")) {
      auto kind = context_kind_from_string(j.at("context").get<std::string>());
      if (!kind) raise(ErrorCode::kValidationError, "unknown context kind");
      spec.context = *kind;
    }
    if (j.contains("secrets")) {
      spec.secrets = j.at("secrets").get<std::map<std::string, std::string>>();
    }
    if (j.contains("timeout_ms")) {
      spec.acquire_timeout = std::chrono::milliseconds{j.at("timeout_ms").get<std::int64_t>()};
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::kValidationError, std::string("job spec: ") + e.what());
  }
  return spec;
}

JobContext JobContext::from_spec(const JobSpec& spec) {
  JobContext ctx;
  ctx.job_id = spec.job_id;
  ctx.requested = spec.requested;
  ctx.context_kind = spec.context;
  ctx.secrets = spec.secrets;
  ctx.options = spec.options;
  ctx.acquire_timeout = spec.acquire_timeout;
  return ctx;
}

std::string to_json_line(std::int64_t job_id, const HookResult& h) {
  nlohmann::ordered_json j;
  j["job_id"] = job_id;
  j["hook"] = to_string(h.hook);
  j["ok"] = h.ok;
  j["detail"] = h.detail;
  j["duration_ms"] = h.duration.count();
  if (h.error) j["error"] = to_string(*h.error);
  return j.dump();
}

std::string hook_trace_jsonl(const JobContext& ctx) {
  std::string out;
  for (const auto& h : ctx.hooks) out += to_json_line(ctx.job_id, h) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

ScriptRunner::ScriptRunner(JobContext& ctx, Registry& registry, std::vector<ScriptStep> steps)
    : ctx_(ctx), registry_(registry), steps_(std::move(steps)) {}

AcquisitionToken ScriptRunner::token_from_env(std::size_t index) {
  // Only the injected environment names the device; nothing is hard-coded.
  auto it = ctx_.env.find(std::string(kEnvTokenPrefix) + std::to_string(index));
  if (it == ctx_.env.end()) {
    raise(ErrorCode::kTaskScriptError, "no " + std::string(kEnvTokenPrefix) + std::to_string(index));
  }
  auto token = registry_.find_token(it->second);
  if (!token) raise(ErrorCode::kInvalidToken, "token from environment is not held");
  return *token;
}

const TaskId& ScriptRunner::task_at(const std::optional<std::size_t>& index) const {
  if (ctx_.tasks.empty()) raise(ErrorCode::kTaskScriptError, "no task submitted");
  std::size_t i = index.value_or(ctx_.tasks.size() - 1);
  if (i >= ctx_.tasks.size()) raise(ErrorCode::kTaskScriptError, "task index out of range");
  return ctx_.tasks[i];
}

ScriptRunner::Yield ScriptRunner::advance() {
  using Kind = ScriptStep::Kind;
  if (done_) return Yield{Yield::Kind::kExit, Millis{0}, std::nullopt, exit_code_};
  try {
    while (pc_ < steps_.size()) {
      const ScriptStep& step = steps_[pc_];
      switch (step.kind) {
        case Kind::kSubmit: {
          AcquisitionToken token = token_from_env(step.token_index);
          ctx_.observed_resources.push_back(token.resource);
          ctx_.tasks.push_back(registry_.task_start(token, step.payload));
          break;
        }
        case Kind::kAwait: {
          const TaskId& id = task_at(step.task_index);
          TaskStatus st = registry_.task_status(id);
          if (!is_terminal(st.state)) {
            return Yield{Yield::Kind::kWaitTask, Millis{0}, id, 0};
          }
          ctx_.results.push_back(registry_.task_result(id).counts);
          break;
        }
        case Kind::kStatus:
          registry_.task_status(task_at(step.task_index));
          break;
        case Kind::kStop:
          registry_.task_stop(task_at(step.task_index));
          break;
        case Kind::kTarget: {
          auto it = ctx_.env.find(std::string(kEnvResourceId));
          if (it == ctx_.env.end()) raise(ErrorCode::kTaskScriptError, "no resource in environment");
          std::string first = it->second.substr(0, it->second.find(','));
          ctx_.observed_resources.push_back(ResourceId(first));
          registry_.target(ResourceId(first));
          break;
        }
        case Kind::kClassical:
          ++pc_;
          if (step.duration.count() > 0) {
            return Yield{Yield::Kind::kSleep, step.duration, std::nullopt, 0};
          }
          continue;
        case Kind::kExit:
          done_ = true;
          exit_code_ = step.exit_code;
          return Yield{Yield::Kind::kExit, Millis{0}, std::nullopt, exit_code_};
      }
      ++pc_;
    }
  } catch (const std::exception& e) {
    ctx_.log.push_back(std::string("task script error: ") + e.what());
    done_ = true;
    exit_code_ = 1;
    return Yield{Yield::Kind::kExit, Millis{0}, std::nullopt, exit_code_};
  }
  done_ = true;
  exit_code_ = 0;
  return Yield{Yield::Kind::kExit, Millis{0}, std::nullopt, 0};
}

// ---------------------------------------------------------------------------

JobHarness::JobHarness(Registry& registry, EnvLookup env)
    : registry_(registry), env_(env ? std::move(env) : process_env()) {}

HookResult JobHarness::finish_hook(JobContext& ctx, HookKind hook, Millis started, bool ok,
                                   std::string detail, std::optional<ErrorCode> error) {
  HookResult r{hook, ok, std::move(detail), registry_.clock()->now() - started, error};
  ctx.hooks.push_back(r);
  return r;
}

std::optional<AcquisitionToken> JobHarness::acquire_unit(JobContext& ctx, const ResourceRequest& req) {
  const std::string requester = "job-" + std::to_string(ctx.job_id);
  if (req.resource) {
    return registry_.acquire(*req.resource, requester, ctx.acquire_timeout);
  }
  std::vector<ResourceId> accessible;
  for (const auto& id : registry_.ids()) {
    if (registry_.is_accessible(id)) accessible.push_back(id);
  }
  if (accessible.empty()) raise(ErrorCode::kResourceUnavailable, "no accessible qpu");
  for (const auto& id : accessible) {
    if (auto t = registry_.pool(id)->try_acquire(requester)) return t;
  }
  return registry_.acquire(accessible.front(), requester, ctx.acquire_timeout);
}

HookResult JobHarness::run_prologue(JobContext& ctx) {
  const Millis started = registry_.clock()->now();
  if (ctx.phase != JobPhase::kCreated) {
    return finish_hook(ctx, HookKind::kPrologue, started, false,
                       "prologue requires phase Created", ErrorCode::kValidationError);
  }
  auto fail = [&](ErrorCode code, const std::string& detail) {
    for (const auto& t : ctx.tokens) {
      try {
        registry_.release(t);
      } catch (const Error& e) {
        ctx.log.push_back(std::string("prologue rollback: ") + e.what());
      }
    }
    ctx.tokens.clear();
    ctx.resolved_secrets.clear();
    ctx.phase = JobPhase::kFailed;
    return finish_hook(ctx, HookKind::kPrologue, started, false, detail, code);
  };

  for (const auto& [name, var] : ctx.secrets) {
    auto value = env_(var);
    if (!value) return fail(ErrorCode::kSecretMissing, "secret " + name + " (" + var + ") missing");
    ctx.resolved_secrets[name] = *value;
  }
  try {
    for (const auto& req : ctx.requested) {
      for (std::size_t i = 0; i < req.count; ++i) {
        ctx.tokens.push_back(*acquire_unit(ctx, req));
      }
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  }
  ctx.middleware_up = true;
  ctx.env[std::string(kEnvMiddleware)] = "up";
  ctx.prologue_ok = true;
  ctx.phase = JobPhase::kPrologued;
  return finish_hook(ctx, HookKind::kPrologue, started, true,
                     "acquired " + std::to_string(ctx.tokens.size()) + " token(s)", std::nullopt);
}

HookResult JobHarness::run_task_init(JobContext& ctx) {
  const Millis started = registry_.clock()->now();
  if (ctx.phase != JobPhase::kPrologued) {
    return finish_hook(ctx, HookKind::kTaskInit, started, false,
                       "task_init requires phase Prologued", ErrorCode::kValidationError);
  }
  const auto& known = known_plugin_options();
  std::map<std::string, std::string> parsed;
  for (const auto& [raw, value] : ctx.options) {
    std::string name = raw.starts_with("--") ? raw.substr(2) : raw;
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      ctx.phase = JobPhase::kFailed;
      return finish_hook(ctx, HookKind::kTaskInit, started, false, "unknown option " + raw,
                         ErrorCode::kInvalidOption);
    }
    parsed[name] = value;
  }

  std::vector<std::string> ids;
  std::vector<std::string> backends;
  for (std::size_t i = 0; i < ctx.tokens.size(); ++i) {
    const auto& t = ctx.tokens[i];
    ctx.env[std::string(kEnvTokenPrefix) + std::to_string(i)] = t.token;
    if (std::find(ids.begin(), ids.end(), t.resource.str()) == ids.end()) {
      ids.push_back(t.resource.str());
      std::string type = "unknown";
      try {
        type = registry_.metadata(t.resource).at("backend_type");
      } catch (const std::exception& e) {
        ctx.log.push_back(std::string("metadata: ") + e.what());
      }
      if (std::find(backends.begin(), backends.end(), type) == backends.end()) {
        backends.push_back(type);
      }
    }
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
    return out;
  };
  ctx.env[std::string(kEnvResourceId)] = join(ids);
  ctx.env[std::string(kEnvBackendType)] = join(backends);
  ctx.env[std::string(kEnvTokenCount)] = std::to_string(ctx.tokens.size());
  ctx.env[std::string(kEnvJobId)] = std::to_string(ctx.job_id);
  for (const auto& [name, value] : parsed) {
    std::string key(kEnvOptionPrefix);
    for (char c : name) key.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(c)));
    ctx.env[key] = value;
  }
  ctx.phase = JobPhase::kTaskInit;
  return finish_hook(ctx, HookKind::kTaskInit, started, true, "environment injected", std::nullopt);
}

int JobHarness::run_user_task(JobContext& ctx, const std::vector<ScriptStep>& script) {
  if (ctx.phase != JobPhase::kTaskInit) {
    raise(ErrorCode::kTaskScriptError, "user task requires phase TaskInit");
  }
  ctx.phase = JobPhase::kRunningTask;
  ScriptRunner runner(ctx, registry_, script);
  for (;;) {
    auto y = runner.advance();
    switch (y.kind) {
      case ScriptRunner::Yield::Kind::kSleep:
        if (registry_.clock()->auto_advance()) registry_.clock()->advance_by(y.sleep);
        break;
      case ScriptRunner::Yield::Kind::kWaitTask:
        try {
          registry_.task_wait(*y.task, std::chrono::hours(24));
        } catch (const Error& e) {
          ctx.log.push_back(std::string("wait: ") + e.what());
        }
        break;
      case ScriptRunner::Yield::Kind::kExit:
        ctx.exit_status = y.exit_code;
        if (y.exit_code != 0) {
          ctx.log.push_back("TaskScriptError: exit status " + std::to_string(y.exit_code));
          ctx.phase = JobPhase::kFailed;
        }
        return y.exit_code;
    }
  }
}

HookResult JobHarness::run_epilogue(JobContext& ctx) {
  const Millis started = registry_.clock()->now();
  if (ctx.epilogue_done) {
    return HookResult{HookKind::kEpilogue, true, "no-op", Millis{0}, std::nullopt};
  }
  if (!ctx.prologue_ok) {
    return HookResult{HookKind::kEpilogue, false, "prologue did not succeed", Millis{0},
                      ErrorCode::kValidationError};
  }
  std::size_t released = 0;
  for (const auto& t : ctx.tokens) {
    try {
      registry_.release(t);
      ++released;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAlreadyReleased) {
        ctx.log.push_back(std::string("epilogue release: ") + e.what());
      }
    }
  }
  ctx.tokens.clear();
  ctx.middleware_up = false;
  ctx.env.erase(std::string(kEnvMiddleware));
  ctx.resolved_secrets.clear();
  ctx.epilogue_done = true;
  if (ctx.phase != JobPhase::kFailed) {
    ctx.phase = JobPhase::kDone;
  }
  return finish_hook(ctx, HookKind::kEpilogue, started, true,
                     "released " + std::to_string(released) + " token(s)", std::nullopt);
}

JobContext JobHarness::run_job(const JobSpec& spec) {
  JobContext ctx = JobContext::from_spec(spec);
  switch (spec.context) {
    case ContextKind::kAllocator:
      ctx.phase = JobPhase::kDone;
      return ctx;
    case ContextKind::kJobScript:
      if (run_prologue(ctx).ok) run_epilogue(ctx);
      return ctx;
    case ContextKind::kLocal:
    case ContextKind::kRemote:
      break;
  }
  if (!run_prologue(ctx).ok) return ctx;
  if (run_task_init(ctx).ok) run_user_task(ctx, spec.script);
  run_epilogue(ctx);
  return ctx;
}

}  // namespace qrmi
