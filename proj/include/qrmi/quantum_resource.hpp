// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "qrmi/types.hpp"

namespace qrmi {

/// Resource-control contract implemented by every backend.
///
/// All methods are safe to call concurrently. `acquire` blocks only its
/// caller; `task_result` blocks until the task is terminal.
class QuantumResource {
 public:
  virtual ~QuantumResource() = default;

  virtual const ResourceId& id() const = 0;

  /// Liveness probe. Never throws for a registered resource.
  virtual bool is_accessible() = 0;

  /// Returns immediately when a lane is free, otherwise waits in FIFO order.
  /// Throws kResourceUnavailable when not accessible and kAcquireTimeout when
  /// `timeout` elapses first.
  virtual AcquisitionToken acquire(
      const std::string& requester = {},
      std::optional<std::chrono::milliseconds> timeout = std::nullopt) = 0;

  /// Frees the lane and cancels tasks still running under the token.
  virtual void release(const AcquisitionToken& token) = 0;

  virtual TaskId task_start(const AcquisitionToken& token, const TaskPayload& payload) = 0;

  /// Cancels a queued or running task; terminal tasks are left untouched.
  virtual void task_stop(const TaskId& task) = 0;

  virtual TaskStatus task_status(const TaskId& task) = 0;

  /// Blocks until terminal. Throws kTaskFailed (with the reason) or
  /// kTaskCancelled for unsuccessful tasks.
  virtual TaskResult task_result(const TaskId& task) = 0;

  virtual Target target() = 0;
  virtual Metadata metadata() = 0;

  /// Waits up to `max_wait` of wall time for the task to become terminal and
  /// returns the state observed last. Lets callers stay interruptible.
  virtual TaskState task_wait(const TaskId& task, std::chrono::milliseconds max_wait) = 0;
};

}  // namespace qrmi
