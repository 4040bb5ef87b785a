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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qrmi/sim_clock.hpp"
#include "qrmi/types.hpp"

namespace qrmi {

enum class LockEventKind { kAcquireRequest, kGranted, kReleased, kExpired, kTimedOut };

std::string_view to_string(LockEventKind kind);

struct LockEvent {
  std::uint64_t seq = 0;
  LockEventKind kind = LockEventKind::kAcquireRequest;
  ResourceId resource;
  std::optional<std::size_t> slot;
  std::string requester;
  std::string token;
  Millis ts{0};
};

// {seq, kind, resource, slot, requester, token, ts}; absent slot/token are null.
std::string to_json_line(const LockEvent& event);
std::string to_json_lines(const std::vector<LockEvent>& events);

/// Blocking slot-based lock for one quantum resource.
///
/// A pool owns `num_slots` lanes. Acquirers get the lowest free slot; when
/// none is free they queue and are granted strictly in arrival order. Grants
/// on release happen synchronously under the pool mutex, so the event log
/// always shows the Released event immediately followed by the hand-off.
///
/// Timestamps come from the shared SimClock. Acquire timeouts are wall-clock
/// durations because they bound how long a real thread blocks.
class SlotPool {
 public:
  using ReleaseHook = std::function<void(const AcquisitionToken&)>;

  SlotPool(ResourceId resource, std::size_t num_slots,
           std::shared_ptr<SimClock> clock,
           std::optional<Millis> lease = std::nullopt);

  SlotPool(const SlotPool&) = delete;
  SlotPool& operator=(const SlotPool&) = delete;

  ~SlotPool();

  const ResourceId& resource() const noexcept { return resource_; }
  std::size_t num_slots() const noexcept { return num_slots_; }
  std::optional<Millis> lease() const noexcept { return lease_; }

  /// Blocks until a slot is granted. A timeout of zero never waits.
  AcquisitionToken acquire(const std::string& requester,
                           std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  /// Non-blocking variant; nullopt when every slot is held. Logs nothing on
  /// failure.
  std::optional<AcquisitionToken> try_acquire(const std::string& requester);

  void release(const AcquisitionToken& token);

  /// Force-releases every holder whose lease expired strictly before `now`.
  std::vector<AcquisitionToken> expire_leases(Millis now);

  /// Throws kInvalidToken for forged, foreign, or expired tokens and
  /// kAlreadyReleased for tokens that were released normally.
  void check(const AcquisitionToken& token);
  bool is_held(const AcquisitionToken& token) const;
  std::optional<AcquisitionToken> find(const std::string& token) const;

  /// Wakes all waiters with kPoolClosed; later acquires fail the same way.
  void close();

  /// Called, outside the pool lock, after each release or expiry.
  void set_release_hook(ReleaseHook hook);

  std::vector<AcquisitionToken> holders() const;
  std::size_t holder_count() const;
  std::size_t queue_length() const;
  std::vector<LockEvent> events() const;

 private:
  struct Waiter {
    std::string requester;
    std::optional<AcquisitionToken> granted;
    bool closed = false;
  };

  AcquisitionToken grant_locked(std::size_t slot, const std::string& requester);
  void free_slot_locked(std::size_t slot, std::vector<AcquisitionToken>& handoffs);
  void log_locked(LockEventKind kind, std::optional<std::size_t> slot,
                  const std::string& requester, const std::string& token);
  std::optional<std::size_t> lowest_free_locked() const;
  void expire_locked(Millis now, std::vector<AcquisitionToken>& expired);
  void run_hook(const std::vector<AcquisitionToken>& released);

  const ResourceId resource_;
  const std::size_t num_slots_;
  const std::shared_ptr<SimClock> clock_;
  const std::optional<Millis> lease_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool closed_ = false;
  std::vector<std::optional<AcquisitionToken>> holders_;
  std::deque<std::shared_ptr<Waiter>> queue_;
  std::set<std::string> released_;
  std::set<std::string> expired_;
  std::vector<LockEvent> log_;
  std::uint64_t next_seq_ = 1;
  ReleaseHook hook_;
};

}  // namespace qrmi
