// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qrmi/circuit.hpp"
#include "qrmi/lock_manager.hpp"
#include "qrmi/quantum_resource.hpp"
#include "qrmi/sim_clock.hpp"

namespace qrmi {

struct FaultInjection {
  double fail_task_prob = 0.0;
  bool inaccessible = false;
};

struct DeviceSpec {
  int num_qubits = 5;
  std::size_t num_lanes = 1;
  double exec_time_per_shot_ms = 0.01;
  std::vector<std::string> basis_gates{"h", "x", "cx", "rz"};
  FaultInjection faults;
  std::uint64_t seed = 0;
};

void validate(const DeviceSpec& spec);

// Keys: num_qubits, num_lanes, exec_time_per_shot_ms, basis_gates,
// fault_injection{fail_task_prob, inaccessible}, seed. All optional.
DeviceSpec device_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeviceSpec& spec);

/// Simulated execution time of `shots` shots, rounded up to whole ticks.
Millis task_duration(const DeviceSpec& spec, std::int64_t shots);

/// {"basis_gates":[...],"coupling":"all-to-all","num_qubits":n}
std::string target_body(const DeviceSpec& spec);

/// In-process simulated quantum device.
///
/// Each lane runs its tasks serially; a task is Running from the moment its
/// lane picks it up until shots * exec_time_per_shot of simulated time has
/// passed on the shared clock.
class PseudoQpu : public QuantumResource {
 public:
  using TerminalListener = std::function<void(const TaskId&, TaskState)>;

  struct Transition {
    TaskId task;
    std::size_t lane = 0;
    std::optional<TaskState> from;  // nullopt for task creation
    TaskState to = TaskState::kQueued;
    Millis at{0};
  };

  PseudoQpu(ResourceId id, DeviceSpec spec, std::shared_ptr<SimClock> clock,
            std::shared_ptr<SlotPool> pool);
  ~PseudoQpu() override;

  const ResourceId& id() const override { return id_; }
  bool is_accessible() override;
  AcquisitionToken acquire(const std::string& requester = {},
                           std::optional<std::chrono::milliseconds> timeout = std::nullopt) override;
  void release(const AcquisitionToken& token) override;
  TaskId task_start(const AcquisitionToken& token, const TaskPayload& payload) override;
  void task_stop(const TaskId& task) override;
  TaskStatus task_status(const TaskId& task) override;
  TaskResult task_result(const TaskId& task) override;
  Target target() override;
  Metadata metadata() override;
  TaskState task_wait(const TaskId& task, std::chrono::milliseconds max_wait) override;

  /// Queues a task directly on a lane, bypassing token checks.
  TaskId run_lane_task(std::size_t lane, const TaskPayload& payload,
                       const std::string& owner_token = {});

  /// Fires once when the task becomes terminal, immediately if it already is.
  void on_terminal(const TaskId& task, TerminalListener listener);

  void set_maintenance(bool on);

  const DeviceSpec& spec() const noexcept { return spec_; }
  const std::shared_ptr<SlotPool>& pool() const noexcept { return pool_; }
  const std::shared_ptr<SimClock>& clock() const noexcept { return clock_; }

  std::vector<Transition> transitions() const;
  std::size_t running_count() const;
  std::size_t max_running() const;

 private:
  struct Task {
    TaskId id;
    std::size_t lane = 0;
    std::string owner_token;
    std::string format;
    Bytes body;
    std::optional<Circuit> circuit;
    std::int64_t shots = 1;
    std::uint64_t seed = 0;
    Millis duration{1};
    TaskState state = TaskState::kQueued;
    std::string reason;
    Counts counts;
    Bytes raw;
    Millis completed_at{0};
    std::optional<SimClock::EventId> completion_event;
    std::vector<TerminalListener> listeners;
  };

  struct Lane {
    std::deque<TaskId> queue;
    std::optional<TaskId> running;
  };

  using Notification = std::pair<std::vector<TerminalListener>, std::pair<TaskId, TaskState>>;

  Task& find_locked(const TaskId& id);
  void transition_locked(Task& t, TaskState to, std::vector<Notification>& notes);
  void dispatch_locked(std::size_t lane, std::vector<Notification>& notes);
  void complete(const TaskId& id);
  void cancel_locked(Task& t, std::vector<Notification>& notes);
  void cancel_owned_by(const std::string& token);
  void notify(std::vector<Notification>& notes);

  const ResourceId id_;
  const DeviceSpec spec_;
  const std::shared_ptr<SimClock> clock_;
  const std::shared_ptr<SlotPool> pool_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool maintenance_ = false;
  std::map<TaskId, Task> tasks_;
  std::vector<Lane> lanes_;
  std::vector<Transition> transitions_;
  std::size_t running_ = 0;
  std::size_t max_running_ = 0;
  std::uint64_t task_seq_ = 0;
  Xoshiro256StarStar fault_rng_;
};

}  // namespace qrmi
