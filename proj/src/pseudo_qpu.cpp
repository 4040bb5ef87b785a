// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/pseudo_qpu.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qrmi/errors.hpp"
#include "qrmi/util.hpp"

namespace qrmi {

using nlohmann::json;

void validate(const DeviceSpec& spec) {
  if (spec.num_qubits < 1 || spec.num_qubits > kMaxQubits) {
    raise(ErrorCode::kValidationError,
          "device num_qubits must be in 1.." + std::to_string(kMaxQubits));
  }
  if (spec.num_lanes < 1) raise(ErrorCode::kValidationError, "device num_lanes must be >= 1");
  if (!(spec.exec_time_per_shot_ms > 0) || !std::isfinite(spec.exec_time_per_shot_ms)) {
    raise(ErrorCode::kValidationError, "device exec_time_per_shot_ms must be > 0");
  }
  const auto& p = spec.faults.fail_task_prob;
  if (!(p >= 0.0 && p <= 1.0)) {
    raise(ErrorCode::kValidationError, "fail_task_prob must be in [0, 1]");
  }
}

DeviceSpec device_spec_from_json(const json& j) {
  DeviceSpec s;
  try {
    if (!j.is_object()) raise(ErrorCode::kValidationError, "device must be an object");
    s.num_qubits = j.value("num_qubits", s.num_qubits);
    s.num_lanes = j.value("num_lanes", s.num_lanes);
    s.exec_time_per_shot_ms = j.value("exec_time_per_shot_ms", s.exec_time_per_shot_ms);
    s.basis_gates = j.value("basis_gates", s.basis_gates);
    s.seed = j.value("seed", s.seed);
    if (j.contains("fault_injection")) {
      const auto& f = j.at("fault_injection");
      s.faults.fail_task_prob = f.value("fail_task_prob", 0.0);
      s.faults.inaccessible = f.value("inaccessible", false);
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::kValidationError, std::string("device: ") + e.what());
  }
  validate(s);
  return s;
}

json to_json(const DeviceSpec& s) {
  return {{"num_qubits", s.num_qubits},
          {"num_lanes", s.num_lanes},
          {"exec_time_per_shot_ms", s.exec_time_per_shot_ms},
          {"basis_gates", s.basis_gates},
          {"seed", s.seed},
          {"fault_injection",
           {{"fail_task_prob", s.faults.fail_task_prob},
            {"inaccessible", s.faults.inaccessible}}}};
}

Millis task_duration(const DeviceSpec& spec, std::int64_t shots) {
  double ms = std::ceil(static_cast<double>(shots) * spec.exec_time_per_shot_ms - 1e-9);
  return Millis{std::max<std::int64_t>(1, static_cast<std::int64_t>(ms))};
}

std::string target_body(const DeviceSpec& spec) {
  json j = {{"num_qubits", spec.num_qubits},
            {"basis_gates", spec.basis_gates},
            {"coupling", "all-to-all"}};
  return j.dump();
}

PseudoQpu::PseudoQpu(ResourceId id, DeviceSpec spec, std::shared_ptr<SimClock> clock,
                     std::shared_ptr<SlotPool> pool)
    : id_(std::move(id)),
      spec_(std::move(spec)),
      clock_(std::move(clock)),
      pool_(std::move(pool)),
      lanes_(spec_.num_lanes),
      fault_rng_(spec_.seed ^ 0x5851f42d4c957f2dULL) {
  validate(spec_);
  if (!clock_ || !pool_) raise(ErrorCode::kBackendInitFailed, id_.str() + ": missing clock or pool");
  if (pool_->num_slots() != spec_.num_lanes) {
    raise(ErrorCode::kValidationError, id_.str() + ": pool size differs from lane count");
  }
  pool_->set_release_hook([this](const AcquisitionToken& t) { cancel_owned_by(t.token); });
}

PseudoQpu::~PseudoQpu() {
  pool_->set_release_hook(nullptr);
  std::lock_guard lock(mu_);
  for (auto& [id, t] : tasks_) {
    if (t.completion_event) clock_->cancel(*t.completion_event);
  }
}

bool PseudoQpu::is_accessible() {
  std::lock_guard lock(mu_);
  return !maintenance_ && !spec_.faults.inaccessible;
}

void PseudoQpu::set_maintenance(bool on) {
  std::lock_guard lock(mu_);
  maintenance_ = on;
}

AcquisitionToken PseudoQpu::acquire(const std::string& requester,
                                    std::optional<std::chrono::milliseconds> timeout) {
  if (!is_accessible()) raise(ErrorCode::kResourceUnavailable, id_.str());
  return pool_->acquire(requester, timeout);
}

void PseudoQpu::release(const AcquisitionToken& token) { pool_->release(token); }

TaskId PseudoQpu::task_start(const AcquisitionToken& token, const TaskPayload& payload) {
  try {
    pool_->check(token);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kAlreadyReleased) {
      raise(ErrorCode::kInvalidToken, "token already released");
    }
    throw;
  }
  TaskId id = run_lane_task(token.slot, payload, token.token);
  // A release racing with the start would otherwise leave an orphan task.
  if (!pool_->is_held(token)) {
    task_stop(id);
    raise(ErrorCode::kInvalidToken, "token released during task_start");
  }
  return id;
}

TaskId PseudoQpu::run_lane_task(std::size_t lane, const TaskPayload& payload,
                                const std::string& owner_token) {
  if (lane >= spec_.num_lanes) {
    raise(ErrorCode::kInvalidToken, "lane " + std::to_string(lane) + " out of range");
  }
  Task t;
  t.lane = lane;
  t.owner_token = owner_token;
  t.format = payload.format;
  t.body = payload.body;
  if (payload.format == kFormatCircuitV1) {
    Circuit c = parse_circuit(payload.body);
    if (payload.shots) c.shots = *payload.shots;
    if (c.shots < 1) raise(ErrorCode::kMalformedPayload, "shots must be >= 1");
    if (c.num_qubits > spec_.num_qubits) {
      raise(ErrorCode::kMalformedPayload, "circuit uses " + std::to_string(c.num_qubits) +
                                              " qubits, device has " +
                                              std::to_string(spec_.num_qubits));
    }
    t.shots = c.shots;
    t.circuit = std::move(c);
  } else if (payload.format == kFormatOpaque) {
    t.shots = payload.shots.value_or(1);
    if (t.shots < 1) raise(ErrorCode::kMalformedPayload, "shots must be >= 1");
  } else {
    raise(ErrorCode::kMalformedPayload, "unsupported payload format '" + payload.format + "'");
  }
  t.duration = task_duration(spec_, t.shots);
  t.id = TaskId(make_uuid());

  std::vector<Notification> notes;
  TaskId id = t.id;
  {
    std::lock_guard lock(mu_);
    std::uint64_t sm = spec_.seed + (++task_seq_);
    t.seed = splitmix64(sm);
    transitions_.push_back({id, lane, std::nullopt, TaskState::kQueued, clock_->now()});
    tasks_.emplace(id, std::move(t));
    lanes_[lane].queue.push_back(id);
    dispatch_locked(lane, notes);
  }
  notify(notes);
  return id;
}

PseudoQpu::Task& PseudoQpu::find_locked(const TaskId& id) {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) raise(ErrorCode::kUnknownTask, id.str());
  return it->second;
}

void PseudoQpu::transition_locked(Task& t, TaskState to, std::vector<Notification>& notes) {
  transitions_.push_back({t.id, t.lane, t.state, to, clock_->now()});
  t.state = to;
  if (to == TaskState::kRunning) {
    ++running_;
    max_running_ = std::max(max_running_, running_);
  }
  if (is_terminal(to)) {
    t.completed_at = clock_->now();
    notes.push_back({std::move(t.listeners), {t.id, to}});
    t.listeners.clear();
    cv_.notify_all();
  }
}

void PseudoQpu::dispatch_locked(std::size_t lane_idx, std::vector<Notification>& notes) {
  Lane& lane = lanes_[lane_idx];
  if (lane.running || lane.queue.empty()) return;
  TaskId next = lane.queue.front();
  lane.queue.pop_front();
  Task& t = tasks_.at(next);
  lane.running = next;
  transition_locked(t, TaskState::kRunning, notes);
  t.completion_event = clock_->schedule_after(t.duration, [this, next] { complete(next); });
}

void PseudoQpu::complete(const TaskId& id) {
  std::vector<Notification> notes;
  {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(id);
    if (it == tasks_.end() || it->second.state != TaskState::kRunning) return;
    Task& t = it->second;
    t.completion_event.reset();
    --running_;
    lanes_[t.lane].running.reset();
    bool fail = spec_.faults.fail_task_prob > 0 &&
                fault_rng_.next_double() < spec_.faults.fail_task_prob;
    if (fail) {
      t.reason = "injected";
      transition_locked(t, TaskState::kFailed, notes);
    } else {
      if (t.circuit) {
        t.counts = execute_circuit(*t.circuit, t.seed);
      } else {
        t.raw = t.body;
      }
      transition_locked(t, TaskState::kCompleted, notes);
    }
    dispatch_locked(t.lane, notes);
  }
  notify(notes);
}

void PseudoQpu::cancel_locked(Task& t, std::vector<Notification>& notes) {
  if (t.state == TaskState::kQueued) {
    std::erase(lanes_[t.lane].queue, t.id);
    transition_locked(t, TaskState::kCancelled, notes);
  } else if (t.state == TaskState::kRunning) {
    if (t.completion_event) clock_->cancel(*t.completion_event);
    t.completion_event.reset();
    --running_;
    lanes_[t.lane].running.reset();
    transition_locked(t, TaskState::kCancelled, notes);
    dispatch_locked(t.lane, notes);
  }
}

void PseudoQpu::cancel_owned_by(const std::string& token) {
  std::vector<Notification> notes;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, t] : tasks_) {
      if (t.owner_token == token && !is_terminal(t.state)) cancel_locked(t, notes);
    }
  }
  notify(notes);
}

void PseudoQpu::notify(std::vector<Notification>& notes) {
  for (auto& [listeners, what] : notes) {
    for (auto& l : listeners) l(what.first, what.second);
  }
  notes.clear();
}

void PseudoQpu::task_stop(const TaskId& task) {
  std::vector<Notification> notes;
  {
    std::lock_guard lock(mu_);
    cancel_locked(find_locked(task), notes);
  }
  notify(notes);
}

TaskStatus PseudoQpu::task_status(const TaskId& task) {
  std::lock_guard lock(mu_);
  const Task& t = find_locked(task);
  return TaskStatus{t.state, t.reason};
}

TaskState PseudoQpu::task_wait(const TaskId& task, std::chrono::milliseconds max_wait) {
  const auto deadline = std::chrono::steady_clock::now() + max_wait;
  for (;;) {
    {
      std::unique_lock lock(mu_);
      Task& t = find_locked(task);
      if (is_terminal(t.state)) return t.state;
      if (!clock_->auto_advance()) {
        cv_.wait_until(lock, deadline, [&] { return is_terminal(t.state); });
        return t.state;
      }
    }
    if (clock_->step()) continue;
    // Nothing pending: another thread may be mid-event. Back off briefly.
    std::unique_lock lock(mu_);
    Task& t = find_locked(task);
    if (std::chrono::steady_clock::now() >= deadline) return t.state;
    cv_.wait_for(lock, std::chrono::milliseconds(1), [&] { return is_terminal(t.state); });
  }
}

TaskResult PseudoQpu::task_result(const TaskId& task) {
  TaskState state;
  do {
    state = task_wait(task, std::chrono::hours(24));
  } while (!is_terminal(state));
  std::lock_guard lock(mu_);
  const Task& t = find_locked(task);
  if (t.state == TaskState::kFailed) raise(ErrorCode::kTaskFailed, t.reason);
  if (t.state == TaskState::kCancelled) raise(ErrorCode::kTaskCancelled, task.str());
  return TaskResult{t.id, t.counts, t.raw, t.completed_at};
}

void PseudoQpu::on_terminal(const TaskId& task, TerminalListener listener) {
  TaskState state;
  {
    std::lock_guard lock(mu_);
    Task& t = find_locked(task);
    if (!is_terminal(t.state)) {
      t.listeners.push_back(std::move(listener));
      return;
    }
    state = t.state;
  }
  listener(task, state);
}

Target PseudoQpu::target() {
  return Target{id_, std::string(kTargetFormat), target_body(spec_), 1};
}

Metadata PseudoQpu::metadata() {
  Metadata m;
  std::string gates;
  for (const auto& g : spec_.basis_gates) gates += (gates.empty() ? "" : ",") + g;
  m.entries = {{"backend_type", "simulated"},
               {"num_lanes", std::to_string(spec_.num_lanes)},
               {"num_qubits", std::to_string(spec_.num_qubits)},
               {"basis_gates", gates},
               {"resource_id", id_.str()},
               {"gres_name", "qpu"}};
  std::ostringstream per_shot;
  per_shot << spec_.exec_time_per_shot_ms;
  m.entries["exec_time_per_shot_ms"] = per_shot.str();
  std::lock_guard lock(mu_);
  m.entries["maintenance"] = maintenance_ ? "true" : "false";
  return m;
}

std::vector<PseudoQpu::Transition> PseudoQpu::transitions() const {
  std::lock_guard lock(mu_);
  return transitions_;
}

std::size_t PseudoQpu::running_count() const {
  std::lock_guard lock(mu_);
  return running_;
}

std::size_t PseudoQpu::max_running() const {
  std::lock_guard lock(mu_);
  return max_running_;
}

}  // namespace qrmi
