// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <utility>

#include "qrmi/types.hpp"

namespace qrmi {

/// Discrete-event clock. Events run in (time, insertion) order; `now()` only
/// moves forward. In kAutoAdvance mode blocking waiters (task_result) may
/// drive the clock themselves; in kManual mode only the owner advances it.
class SimClock {
 public:
  enum class Mode { kManual, kAutoAdvance };

  using EventId = std::uint64_t;

  explicit SimClock(Mode mode = Mode::kManual) : mode_(mode) {}

  SimClock(const SimClock&) = delete;
  SimClock& operator=(const SimClock&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool auto_advance() const noexcept { return mode_ == Mode::kAutoAdvance; }

  Millis now() const;

  EventId schedule_at(Millis when, std::function<void()> fn);
  EventId schedule_after(Millis delay, std::function<void()> fn);
  bool cancel(EventId id);

  std::optional<Millis> next_event_time() const;
  std::size_t pending() const;

  // Runs the earliest pending event. Returns false when none is pending.
  bool step();

  // Runs every event with time <= `when`, then sets now() to `when`.
  void advance_to(Millis when);
  void advance_by(Millis delta) { advance_to(now() + delta); }

  std::size_t run_all();

 private:
  struct Key {
    Millis when;
    EventId id;
    auto operator<=>(const Key&) const = default;
  };

  bool step_locked_driver(std::optional<Millis> limit);

  Mode mode_;
  mutable std::mutex mu_;
  // Serializes event execution across threads that drive the clock.
  std::mutex drive_mu_;
  Millis now_{0};
  EventId next_id_ = 1;
  std::map<Key, std::function<void()>> events_;
  std::map<EventId, Millis> index_;
};

}  // namespace qrmi
