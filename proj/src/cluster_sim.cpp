// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/cluster_sim.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace qrmi {

using nlohmann::json;

std::string_view to_string(SchedulingPolicy policy) {
  return policy == SchedulingPolicy::kFifo ? "fifo" : "backfill";
}

std::string_view to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::kSubmitted: return "Submitted";
    case SimEventKind::kBlocked: return "Blocked";
    case SimEventKind::kStarted: return "Started";
    case SimEventKind::kPrologueDone: return "PrologueDone";
    case SimEventKind::kTaskDone: return "TaskDone";
    case SimEventKind::kEpilogueDone: return "EpilogueDone";
    case SimEventKind::kFinished: return "Finished";
  }
  return "Unknown";
}

namespace {

[[noreturn]] void spec_error(const std::string& what) { raise(ErrorCode::kSpecError, what); }

void validate(const ClusterSpec& cluster, const std::vector<SimJob>& jobs) {
  if (cluster.nodes.empty()) spec_error("cluster has no nodes");
  std::set<std::string> names;
  for (const auto& n : cluster.nodes) {
    if (n.name.empty()) spec_error("node name must be non-empty");
    if (!names.insert(n.name).second) spec_error("duplicate node name '" + n.name + "'");
    if (n.cores < 1) spec_error("node " + n.name + " needs cores >= 1");
  }
  try {
    validate(cluster.registry);
  } catch (const Error& e) {
    spec_error(std::string("registry: ") + e.what());
  }
  std::map<ResourceId, std::size_t> lanes;
  std::size_t total_lanes = 0;
  for (const auto& e : cluster.registry.resources) {
    if (e.backend != BackendKind::kSimulated) {
      spec_error("resource " + e.id.str() + " is not simulated; only simulated backends run in simulated time");
    }
    lanes[e.id] = e.lanes;
    if (!e.maintenance) total_lanes += e.lanes;
  }
  const int total_cores = std::accumulate(cluster.nodes.begin(), cluster.nodes.end(), 0,
                                          [](int acc, const NodeSpec& n) { return acc + n.cores; });
  std::set<std::int64_t> ids;
  for (const auto& j : jobs) {
    const std::string name = "job " + std::to_string(j.job_id);
    if (!ids.insert(j.job_id).second) spec_error("duplicate job id " + std::to_string(j.job_id));
    if (j.cores < 0) spec_error(name + ": negative cores");
    if (j.cores == 0 && j.qpu_count == 0) spec_error(name + ": requests neither cores nor qpu");
    if (j.arrival.count() < 0) spec_error(name + ": negative arrival");
    if (j.cores > total_cores) spec_error(name + ": needs more cores than the cluster has");
    if (j.qpu_resource) {
      auto it = lanes.find(*j.qpu_resource);
      if (it == lanes.end()) spec_error(name + ": unknown resource '" + j.qpu_resource->str() + "'");
      if (j.qpu_count > it->second) spec_error(name + ": requests more lanes than " + it->first.str() + " has");
    } else if (j.qpu_count > total_lanes) {
      spec_error(name + ": requests more qpu units than the cluster has");
    }
  }
}

class Simulator {
 public:
  Simulator(const ClusterSpec& cluster, const std::vector<SimJob>& jobs, std::uint64_t seed)
      : cluster_(cluster),
        clock_(std::make_shared<SimClock>(SimClock::Mode::kManual)),
        registry_(Registry::open(cluster.registry, Registry::Options{clock_, nullptr, seed})),
        harness_(*registry_),
        free_cores_(cluster.nodes.size()) {
    for (std::size_t i = 0; i < cluster.nodes.size(); ++i) free_cores_[i] = cluster.nodes[i].cores;
    std::vector<SimJob> ordered = jobs;
    std::stable_sort(ordered.begin(), ordered.end(), [](const SimJob& a, const SimJob& b) {
      return a.arrival != b.arrival ? a.arrival < b.arrival : a.job_id < b.job_id;
    });
    for (auto& j : ordered) {
      auto state = std::make_unique<JobState>();
      state->job = std::move(j);
      JobState* raw = state.get();
      clock_->schedule_at(raw->job.arrival, [this, raw] { arrive(*raw); });
      jobs_.push_back(std::move(state));
    }
  }

  SimTrace run() {
    while (auto next = clock_->next_event_time()) {
      clock_->advance_to(*next);
      schedule_pass();
    }
    finalize();
    return std::move(trace_);
  }

 private:
  struct JobState {
    SimJob job;
    JobContext ctx;
    std::unique_ptr<ScriptRunner> runner;
    std::vector<std::pair<std::size_t, int>> cores;  // node index, cores
    bool blocked_reported = false;
    bool finished = false;
  };

  void emit(const JobState& s, SimEventKind kind, std::string detail = {}) {
    trace_.events.push_back(SimEvent{clock_->now(), s.job.job_id, kind, std::move(detail)});
  }

  void arrive(JobState& s) {
    emit(s, SimEventKind::kSubmitted);
    queue_.push_back(&s);
  }

  int total_free_cores() const { return std::accumulate(free_cores_.begin(), free_cores_.end(), 0); }

  std::size_t free_lanes(const ResourceId& id) const {
    auto pool = registry_->pool(id);
    return pool->num_slots() - pool->holder_count();
  }

  std::vector<ResourceId> eligible(const SimJob& j) const {
    if (j.qpu_resource) return {*j.qpu_resource};
    std::vector<ResourceId> out;
    for (const auto& id : registry_->ids()) {
      if (registry_->is_accessible(id)) out.push_back(id);
    }
    return out;
  }

  bool qpu_available(const SimJob& j) const {
    if (j.qpu_count == 0) return true;
    if (j.qpu_resource && !registry_->is_accessible(*j.qpu_resource)) return false;
    std::size_t free = 0;
    for (const auto& id : eligible(j)) free += free_lanes(id);
    return free >= j.qpu_count;
  }

  bool can_start(const SimJob& j) const { return j.cores <= total_free_cores() && qpu_available(j); }

  // A later job may jump the blocked head only if it takes nothing the head
  // could use now: surplus cores only, and no QPU the head is eligible for.
  bool can_backfill(const SimJob& head, const SimJob& j) const {
    if (!can_start(j)) return false;
    const int free = total_free_cores();
    const int reserved = std::min(head.cores, free);
    if (j.cores > free - reserved) return false;
    if (j.qpu_count > 0 && head.qpu_count > 0) {
      if (!j.qpu_resource || !head.qpu_resource) return false;
      if (*j.qpu_resource == *head.qpu_resource) return false;
    }
    return true;
  }

  void schedule_pass() {
    bool progress = true;
    while (progress) {
      progress = false;
      const SimJob* head = nullptr;
      for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        JobState* s = *it;
        bool ok = head ? can_backfill(*head, s->job) : can_start(s->job);
        if (ok) {
          queue_.erase(it);
          start(*s);
          progress = true;
          break;
        }
        if (!s->blocked_reported) {
          s->blocked_reported = true;
          emit(*s, SimEventKind::kBlocked);
        }
        if (cluster_.policy == SchedulingPolicy::kFifo) break;
        if (!head) head = &s->job;
      }
    }
  }

  void start(JobState& s) {
    int need = s.job.cores;
    for (std::size_t i = 0; i < free_cores_.size() && need > 0; ++i) {
      int take = std::min(need, free_cores_[i]);
      if (take > 0) {
        free_cores_[i] -= take;
        need -= take;
        s.cores.emplace_back(i, take);
      }
    }
    emit(s, SimEventKind::kStarted);

    JobSpec spec;
    spec.job_id = s.job.job_id;
    if (s.job.qpu_count > 0) spec.requested.push_back(ResourceRequest{s.job.qpu_resource, s.job.qpu_count});
    spec.options = s.job.options;
    spec.acquire_timeout = std::chrono::milliseconds{0};
    s.ctx = JobContext::from_spec(spec);

    auto prologue = harness_.run_prologue(s.ctx);
    if (!prologue.ok) {
      finish(s, "prologue failed: " + prologue.detail);
      return;
    }
    for (const auto& t : s.ctx.tokens) {
      lane_start_[{s.job.job_id, t.token}] = clock_->now();
    }
    emit(s, SimEventKind::kPrologueDone);
    if (!harness_.run_task_init(s.ctx).ok) {
      epilogue(s);
      finish(s, "task_init failed");
      return;
    }
    s.ctx.phase = JobPhase::kRunningTask;
    std::vector<ScriptStep> steps;
    if (s.job.duration_classical.count() > 0) {
      ScriptStep classical;
      classical.kind = ScriptStep::Kind::kClassical;
      classical.duration = s.job.duration_classical;
      steps.push_back(classical);
    }
    steps.insert(steps.end(), s.job.script.begin(), s.job.script.end());
    s.runner = std::make_unique<ScriptRunner>(s.ctx, *registry_, std::move(steps));
    drive(s);
  }

  void drive(JobState& s) {
    auto y = s.runner->advance();
    switch (y.kind) {
      case ScriptRunner::Yield::Kind::kSleep:
        clock_->schedule_after(y.sleep, [this, &s] { drive(s); });
        return;
      case ScriptRunner::Yield::Kind::kWaitTask: {
        auto owner = registry_->task_resource(*y.task);
        auto device = owner ? registry_->simulated(*owner) : nullptr;
        if (!device) {
          s.ctx.log.push_back("cannot wait on non-simulated task");
          complete_task(s, 1);
          return;
        }
        device->on_terminal(*y.task, [this, &s](const TaskId&, TaskState) { drive(s); });
        return;
      }
      case ScriptRunner::Yield::Kind::kExit:
        complete_task(s, y.exit_code);
        return;
    }
  }

  void complete_task(JobState& s, int exit_code) {
    s.ctx.exit_status = exit_code;
    if (exit_code != 0) s.ctx.phase = JobPhase::kFailed;
    emit(s, SimEventKind::kTaskDone, "exit " + std::to_string(exit_code));
    epilogue(s);
    finish(s, exit_code == 0 ? "" : "exit " + std::to_string(exit_code));
  }

  void epilogue(JobState& s) {
    std::vector<AcquisitionToken> held = s.ctx.tokens;
    harness_.run_epilogue(s.ctx);
    for (const auto& t : held) {
      auto key = std::make_pair(s.job.job_id, t.token);
      trace_.allocations.push_back(Allocation{s.job.job_id, t.resource.str(), t.slot, 0,
                                              lane_start_.at(key), clock_->now()});
      lane_start_.erase(key);
    }
    emit(s, SimEventKind::kEpilogueDone);
  }

  void finish(JobState& s, std::string detail) {
    for (auto [node, n] : s.cores) {
      free_cores_[node] += n;
      Millis started{0};
      for (auto it = trace_.events.rbegin(); it != trace_.events.rend(); ++it) {
        if (it->job_id == s.job.job_id && it->kind == SimEventKind::kStarted) {
          started = it->time;
          break;
        }
      }
      trace_.allocations.push_back(Allocation{s.job.job_id, cluster_.nodes[node].name, std::nullopt, n,
                                              started, clock_->now()});
    }
    s.cores.clear();
    s.finished = true;
    trace_.hooks[s.job.job_id] = s.ctx.hooks;
    trace_.exit_status[s.job.job_id] = s.ctx.exit_status.value_or(-1);
    emit(s, SimEventKind::kFinished, std::move(detail));
  }

  void finalize() {
    for (const auto& s : jobs_) {
      if (!s->finished) trace_.unfinished.push_back(s->job.job_id);
    }
    std::optional<Millis> first;
    Millis last{0};
    for (const auto& e : trace_.events) {
      if (e.kind == SimEventKind::kSubmitted && (!first || e.time < *first)) first = e.time;
      if (e.kind == SimEventKind::kFinished) last = std::max(last, e.time);
    }
    trace_.makespan = first ? std::max(Millis{0}, last - *first) : Millis{0};
    for (const auto& id : registry_->ids()) {
      auto ev = registry_->pool(id)->events();
      trace_.lock_events.insert(trace_.lock_events.end(), ev.begin(), ev.end());
    }
  }

  const ClusterSpec& cluster_;
  std::shared_ptr<SimClock> clock_;
  std::unique_ptr<Registry> registry_;
  JobHarness harness_;
  std::vector<int> free_cores_;
  std::vector<std::unique_ptr<JobState>> jobs_;
  std::deque<JobState*> queue_;
  std::map<std::pair<std::int64_t, std::string>, Millis> lane_start_;
  SimTrace trace_;
};

std::vector<SimJob> jobs_from_json(const json& arr) {
  if (!arr.is_array()) spec_error("\"jobs\" must be an array");
  std::vector<SimJob> out;
  for (const auto& j : arr) {
    SimJob job;
    job.job_id = j.at("job_id").get<std::int64_t>();
    job.arrival = Millis{j.value("arrival_ms", std::int64_t{0})};
    job.cores = j.value("cores", 0);
    if (j.contains("gres")) {
      job.qpu_count = parse_gres(j.at("gres").get<std::string>());
    } else {
      job.qpu_count = j.value("qpu", std::size_t{0});
    }
    if (j.contains("resource") && !j["resource"].is_null() && j["resource"] != "any") {
      std::string r = j["resource"].get<std::string>();
      if (!ResourceId::is_valid(r)) spec_error("invalid resource id '" + r + "'");
      job.qpu_resource = ResourceId(r);
    }
    job.duration_classical = Millis{j.value("duration_classical_ms", std::int64_t{0})};
    if (j.contains("script")) job.script = script_from_json(j.at("script"));
    if (j.contains("options")) {
      for (const auto& [k, v] : j.at("options").items()) {
        job.options[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    auto count = j.value("count", std::int64_t{1});
    if (count < 1) spec_error("job count must be >= 1");
    for (std::int64_t i = 0; i < count; ++i) {
      SimJob copy = job;
      copy.job_id = job.job_id + i;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace

Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
  Scenario sc;
  try {
    const json& cl = j.at("cluster");
    for (const auto& n : cl.at("nodes")) {
      sc.cluster.nodes.push_back(NodeSpec{n.at("name").get<std::string>(), n.at("cores").get<int>()});
    }
    if (cl.contains("registry")) {
      sc.cluster.registry = config_from_json(cl.at("registry"));
    } else if (cl.contains("registry_path")) {
      sc.cluster.registry = load_config(base_dir / cl.at("registry_path").get<std::string>());
    } else {
      spec_error("cluster needs \"registry\" or \"registry_path\"");
    }
    std::string policy = j.value("policy", std::string("fifo"));
    if (policy == "fifo") {
      sc.cluster.policy = SchedulingPolicy::kFifo;
    } else if (policy == "backfill") {
      sc.cluster.policy = SchedulingPolicy::kBackfill;
    } else {
      spec_error("unknown policy '" + policy + "'");
    }
    sc.jobs = jobs_from_json(j.at("jobs"));
    sc.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    spec_error(std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSpecError) throw;
    spec_error(e.what());
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) spec_error("cannot read scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    spec_error(path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

SimTrace simulate(const ClusterSpec& cluster, const std::vector<SimJob>& jobs, std::uint64_t seed) {
  validate(cluster, jobs);
  Simulator sim(cluster, jobs, seed);
  return sim.run();
}

std::map<std::string, double> utilization(const SimTrace& trace, const ClusterSpec& cluster) {
  std::map<std::string, double> busy;
  std::map<std::string, double> capacity;
  for (const auto& n : cluster.nodes) {
    busy["node:" + n.name] = 0;
    capacity["node:" + n.name] = n.cores;
  }
  for (const auto& e : cluster.registry.resources) {
    for (std::size_t l = 0; l < e.lanes; ++l) {
      std::string key = "qpu:" + e.id.str() + "/lane" + std::to_string(l);
      busy[key] = 0;
      capacity[key] = 1;
    }
  }
  for (const auto& a : trace.allocations) {
    double span = static_cast<double>((a.end - a.start).count());
    if (a.lane) {
      busy["qpu:" + a.resource + "/lane" + std::to_string(*a.lane)] += span;
    } else {
      busy["node:" + a.resource] += span * a.cores;
    }
  }
  std::map<std::string, double> out;
  const double makespan = static_cast<double>(trace.makespan.count());
  for (const auto& [key, b] : busy) {
    out[key] = makespan > 0 ? std::clamp(b / (capacity[key] * makespan), 0.0, 1.0) : 0.0;
  }
  return out;
}

std::string trace_jsonl(const SimTrace& trace) {
  std::string out;
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["time"] = e.time.count();
    j["job_id"] = e.job_id;
    j["kind"] = to_string(e.kind);
    if (!e.detail.empty()) j["detail"] = e.detail;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace qrmi
