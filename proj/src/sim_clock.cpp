// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/sim_clock.hpp"

#include <algorithm>

namespace qrmi {

Millis SimClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

SimClock::EventId SimClock::schedule_at(Millis when, std::function<void()> fn) {
  std::lock_guard lock(mu_);
  when = std::max(when, now_);
  EventId id = next_id_++;
  events_.emplace(Key{when, id}, std::move(fn));
  index_.emplace(id, when);
  return id;
}

SimClock::EventId SimClock::schedule_after(Millis delay, std::function<void()> fn) {
  std::lock_guard lock(mu_);
  Millis when = now_ + std::max(delay, Millis{0});
  EventId id = next_id_++;
  events_.emplace(Key{when, id}, std::move(fn));
  index_.emplace(id, when);
  return id;
}

bool SimClock::cancel(EventId id) {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  events_.erase(Key{it->second, id});
  index_.erase(it);
  return true;
}

std::optional<Millis> SimClock::next_event_time() const {
  std::lock_guard lock(mu_);
  if (events_.empty()) return std::nullopt;
  return events_.begin()->first.when;
}

std::size_t SimClock::pending() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

bool SimClock::step_locked_driver(std::optional<Millis> limit) {
  std::function<void()> fn;
  {
    std::lock_guard lock(mu_);
    if (events_.empty()) return false;
    auto it = events_.begin();
    if (limit && it->first.when > *limit) return false;
    now_ = std::max(now_, it->first.when);
    fn = std::move(it->second);
    index_.erase(it->first.id);
    events_.erase(it);
  }
  fn();
  return true;
}

bool SimClock::step() {
  std::lock_guard drive(drive_mu_);
  return step_locked_driver(std::nullopt);
}

void SimClock::advance_to(Millis when) {
  std::lock_guard drive(drive_mu_);
  while (step_locked_driver(when)) {
  }
  std::lock_guard lock(mu_);
  now_ = std::max(now_, when);
}

std::size_t SimClock::run_all() {
  std::lock_guard drive(drive_mu_);
  std::size_t n = 0;
  while (step_locked_driver(std::nullopt)) ++n;
  return n;
}

}  // namespace qrmi
