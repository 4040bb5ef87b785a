// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "qrmi/cluster_sim.hpp"
#include "qrmi/mock_server.hpp"
#include "qrmi/registry.hpp"

namespace qrmi::cli {

using nlohmann::json;
using nlohmann::ordered_json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return kExitParse;
    case ErrorCode::kValidationError:
    case ErrorCode::kUnknownResource: return kExitValidation;
    case ErrorCode::kAcquireTimeout: return kExitAcquireTimeout;
    case ErrorCode::kTaskFailed:
    case ErrorCode::kTaskCancelled: return kExitTaskFailed;
    case ErrorCode::kSpecError: return kExitSpec;
    case ErrorCode::kBindFailed: return kExitBind;
    default: return kExitFailure;
  }
}

namespace {

struct Options {
  bool json = false;

  std::string config;

  std::string resource;
  std::string payload;
  std::string format{kFormatCircuitV1};
  std::optional<std::int64_t> shots;
  std::optional<std::int64_t> timeout_ms;
  std::string event_log;

  std::string scenario;
  std::string trace;
  std::optional<std::uint64_t> seed;

  int port = 0;
  std::string host = "127.0.0.1";
  std::string mode = "direct-access";
  std::string device;
  std::string secret_env;
  double time_scale = 1.0;
};

bool interrupted(const Io& io) { return io.interrupted && io.interrupted->load(); }

int report(const Io& io, const Options& opt, const Error& e) {
  int code = exit_code_for(e.code());
  if (opt.json) {
    ordered_json j;
    j["ok"] = false;
    j["error"] = to_string(e.code());
    j["message"] = e.what();
    j["exit_code"] = code;
    io.out << j.dump() << "\n";
  } else {
    io.err << "error: " << e.what() << "\n";
  }
  return code;
}

std::filesystem::path config_path(const Io& io, const Options& opt) {
  return opt.config.empty() ? default_config_path(io.env) : std::filesystem::path(opt.config);
}

// Either the embedder's registry or one opened from the config file.
struct RegistryRef {
  std::unique_ptr<Registry> owned;
  Registry* ptr = nullptr;
  Registry* operator->() const { return ptr; }
};

RegistryRef open_registry(const Io& io, const Options& opt) {
  RegistryRef ref;
  if (io.registry) {
    ref.ptr = io.registry;
  } else {
    ref.owned = Registry::open(load_config(config_path(io, opt)), Registry::Options{nullptr, io.env, {}});
    ref.ptr = ref.owned.get();
  }
  return ref;
}

std::string read_file(const std::string& path, ErrorCode on_missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(on_missing, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_validate(const Io& io, const Options& opt) {
  RegistryConfig config = load_config(config_path(io, opt));
  if (opt.json) {
    ordered_json j;
    j["ok"] = true;
    j["resources"] = config.resources.size();
    io.out << j.dump() << "\n";
  } else {
    io.out << "OK: " << config.resources.size() << " resources\n";
  }
  return kExitOk;
}

int cmd_list(const Io& io, const Options& opt) {
  auto registry = open_registry(io, opt);
  ordered_json arr = ordered_json::array();
  for (const auto& [id, meta] : registry->list()) {
    ordered_json j;
    j["id"] = id.str();
    j["accessible"] = registry->is_accessible(id);
    for (const auto& [k, v] : meta.entries) j[k] = v;
    arr.push_back(j);
  }
  if (opt.json) {
    io.out << arr.dump() << "\n";
  } else {
    for (const auto& j : arr) {
      io.out << std::left << std::setw(20) << j["id"].get<std::string>() << " "
             << std::setw(14) << j.value("backend_type", "") << " lanes=" << j.value("num_lanes", "")
             << (j["accessible"].get<bool>() ? "" : " (inaccessible)") << "\n";
    }
  }
  return kExitOk;
}

int cmd_run(const Io& io, const Options& opt) {
  auto registry = open_registry(io, opt);
  const ResourceId id(opt.resource);
  TaskPayload payload;
  payload.format = opt.format;
  payload.body = read_file(opt.payload, ErrorCode::kParseError);
  payload.shots = opt.shots;

  std::optional<std::chrono::milliseconds> timeout;
  if (opt.timeout_ms) timeout = std::chrono::milliseconds(*opt.timeout_ms);

  auto write_log = [&] {
    if (opt.event_log.empty()) return;
    std::ofstream out(opt.event_log);
    out << to_json_lines(registry->pool(id)->events());
  };

  AcquisitionToken token;
  try {
    token = registry->acquire(id, "qrmi-cli", timeout);
  } catch (const Error&) {
    write_log();
    throw;
  }

  int code = kExitOk;
  std::optional<TaskId> task;
  try {
    task = registry->task_start(token, payload);
    TaskState state = TaskState::kQueued;
    while (true) {
      if (interrupted(io)) {
        registry->task_stop(*task);
        code = kExitInterrupted;
        break;
      }
      state = registry->task_wait(*task, std::chrono::milliseconds(50));
      if (is_terminal(state)) break;
    }
    if (code == kExitOk) {
      TaskResult result = registry->task_result(*task);
      if (opt.json) {
        ordered_json j;
        j["ok"] = true;
        j["resource"] = id.str();
        j["task"] = task->str();
        j["state"] = to_string(TaskState::kCompleted);
        j["counts"] = json::parse(counts_to_json(result.counts));
        io.out << j.dump() << "\n";
      } else {
        io.out << counts_to_json(result.counts) << "\n";
      }
    } else if (opt.json) {
      ordered_json j;
      j["ok"] = false;
      j["error"] = "Interrupted";
      j["task"] = task->str();
      j["exit_code"] = code;
      io.out << j.dump() << "\n";
    } else {
      io.err << "interrupted: task " << task->str() << " stopped\n";
    }
  } catch (const Error& e) {
    code = report(io, opt, e);
  } catch (...) {
    registry->release(token);
    write_log();
    throw;
  }
  registry->release(token);
  write_log();
  return code;
}

std::string summary_text(const SimTrace& trace, const ClusterSpec& cluster) {
  std::ostringstream out;
  std::size_t finished = 0;
  for (const auto& e : trace.events) finished += e.kind == SimEventKind::kFinished;
  out << "jobs finished: " << finished << "\n";
  if (!trace.unfinished.empty()) out << "jobs unfinished: " << trace.unfinished.size() << "\n";
  out << "makespan_ms: " << trace.makespan.count() << "\n";
  out << "utilization:\n";
  for (const auto& [key, u] : utilization(trace, cluster)) {
    out << "  " << std::left << std::setw(24) << key << " " << std::fixed << std::setprecision(3) << u << "\n";
  }
  return out.str();
}

int cmd_simulate(const Io& io, const Options& opt) {
  Scenario sc = load_scenario(opt.scenario);
  if (opt.seed) sc.seed = *opt.seed;
  SimTrace trace = simulate(sc.cluster, sc.jobs, sc.seed);
  if (!opt.trace.empty()) {
    std::ofstream out(opt.trace);
    if (!out) raise(ErrorCode::kSpecError, "cannot write trace " + opt.trace);
    out << trace_jsonl(trace);
  }
  if (opt.json) {
    ordered_json j;
    j["ok"] = trace.all_finished();
    j["makespan_ms"] = trace.makespan.count();
    j["jobs"] = sc.jobs.size();
    j["unfinished"] = trace.unfinished;
    j["utilization"] = utilization(trace, sc.cluster);
    io.out << j.dump() << "\n";
  } else {
    io.out << summary_text(trace, sc.cluster);
  }
  return trace.all_finished() ? kExitOk : kExitFailure;
}

int cmd_mock_gateway(const Io& io, const Options& opt) {
  MockGatewayOptions mo;
  auto mode = gateway_mode_from_string(opt.mode);
  if (!mode) raise(ErrorCode::kValidationError, "unknown mode '" + opt.mode + "'");
  mo.mode = *mode;
  mo.host = opt.host;
  mo.port = opt.port;
  mo.time_scale = opt.time_scale;
  if (!opt.device.empty()) {
    try {
      mo.device = device_spec_from_json(json::parse(read_file(opt.device, ErrorCode::kParseError)));
    } catch (const json::exception& e) {
      raise(ErrorCode::kParseError, opt.device + ": " + e.what());
    }
  }
  if (!opt.secret_env.empty()) {
    auto secret = io.env(opt.secret_env);
    if (!secret) raise(ErrorCode::kSecretMissing, "environment variable " + opt.secret_env + " is not set");
    mo.secret = *secret;
  }
  MockGatewayServer server(mo);
  int port = server.start();
  if (opt.json) {
    ordered_json j;
    j["port"] = port;
    j["url"] = server.url();
    j["mode"] = opt.mode;
    io.out << j.dump() << std::endl;
  } else {
    io.out << "listening on " << server.url() << std::endl;
  }
  if (io.on_listening) io.on_listening(port);
  while (!interrupted(io)) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  server.stop();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, Io io) {
  CLI::App app{"Quantum resource management tools", "qrmi"};
  app.require_subcommand(1);
  Options opt;

  auto add_json = [&](CLI::App* sub) { sub->add_flag("--json", opt.json, "Machine-readable output"); };
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Registry config (default $QRMI_CONFIG or ./qrmi_config.json)");
  };

  auto* validate = app.add_subcommand("validate", "Check a registry config");
  validate->add_option("config,--config", opt.config, "Config file (default $QRMI_CONFIG or ./qrmi_config.json)");
  add_json(validate);

  auto* list = app.add_subcommand("list", "List configured resources");
  add_config(list);
  add_json(list);

  auto* run = app.add_subcommand("run", "Acquire, run one payload, print counts, release");
  add_config(run);
  run->add_option("--resource", opt.resource, "Resource id")->required();
  run->add_option("--payload", opt.payload, "Payload file")->required();
  run->add_option("--format", opt.format, "Payload format");
  run->add_option("--shots", opt.shots, "Shot count override")->check(CLI::PositiveNumber);
  run->add_option("--timeout", opt.timeout_ms, "Acquire timeout in ms")->check(CLI::NonNegativeNumber);
  run->add_option("--event-log", opt.event_log, "Write the lock event log (JSON lines)");
  add_json(run);

  auto* sim = app.add_subcommand("simulate", "Run a cluster scenario in simulated time");
  sim->add_option("scenario", opt.scenario, "Scenario file")->required();
  sim->add_option("--trace", opt.trace, "Write the job event trace (JSON lines)");
  sim->add_option("--seed", opt.seed, "Override the scenario seed");
  add_json(sim);

  auto* gw = app.add_subcommand("mock-gateway", "Serve the gateway protocol over a simulated device");
  gw->add_option("--port", opt.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  gw->add_option("--host", opt.host, "Bind address");
  gw->add_option("--mode", opt.mode, "direct-access or cloud-queue")
      ->check(CLI::IsMember({"direct-access", "cloud-queue"}));
  gw->add_option("--device", opt.device, "Device spec JSON file");
  gw->add_option("--secret-env", opt.secret_env, "Variable holding the expected bearer secret");
  gw->add_option("--time-scale", opt.time_scale, "Simulated ms per wall ms")->check(CLI::PositiveNumber);
  add_json(gw);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      io.out << app.help();
      return kExitOk;
    }
    io.err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(io, opt);
    if (*list) return cmd_list(io, opt);
    if (*run) return cmd_run(io, opt);
    if (*sim) return cmd_simulate(io, opt);
    if (*gw) return cmd_mock_gateway(io, opt);
  } catch (const Error& e) {
    return report(io, opt, e);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace qrmi::cli
