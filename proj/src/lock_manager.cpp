// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/lock_manager.hpp"

#include <nlohmann/json.hpp>

#include "qrmi/errors.hpp"
#include "qrmi/util.hpp"

namespace qrmi {

std::string_view to_string(LockEventKind kind) {
  switch (kind) {
    case LockEventKind::kAcquireRequest: return "AcquireRequest";
    case LockEventKind::kGranted: return "Granted";
    case LockEventKind::kReleased: return "Released";
    case LockEventKind::kExpired: return "Expired";
    case LockEventKind::kTimedOut: return "TimedOut";
  }
  return "Unknown";
}

std::string to_json_line(const LockEvent& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["kind"] = to_string(e.kind);
  j["resource"] = e.resource.str();
  j["slot"] = e.slot ? nlohmann::ordered_json(*e.slot) : nlohmann::ordered_json(nullptr);
  j["requester"] = e.requester;
  j["token"] = e.token.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.token);
  j["ts"] = e.ts.count();
  return j.dump();
}

std::string to_json_lines(const std::vector<LockEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json_line(e);
    out += '\n';
  }
  return out;
}

SlotPool::SlotPool(ResourceId resource, std::size_t num_slots,
                   std::shared_ptr<SimClock> clock, std::optional<Millis> lease)
    : resource_(std::move(resource)),
      num_slots_(num_slots),
      clock_(std::move(clock)),
      lease_(lease),
      holders_(num_slots) {
  if (num_slots_ == 0) raise(ErrorCode::kValidationError, "slot pool needs at least one slot");
  if (!clock_) raise(ErrorCode::kValidationError, "slot pool needs a clock");
}

SlotPool::~SlotPool() { close(); }

void SlotPool::log_locked(LockEventKind kind, std::optional<std::size_t> slot,
                          const std::string& requester, const std::string& token) {
  log_.push_back(LockEvent{next_seq_++, kind, resource_, slot, requester, token, clock_->now()});
}

std::optional<std::size_t> SlotPool::lowest_free_locked() const {
  for (std::size_t i = 0; i < holders_.size(); ++i) {
    if (!holders_[i]) return i;
  }
  return std::nullopt;
}

AcquisitionToken SlotPool::grant_locked(std::size_t slot, const std::string& requester) {
  AcquisitionToken t;
  t.token = random_hex(16);
  t.resource = resource_;
  t.slot = slot;
  t.acquired_at = clock_->now();
  if (lease_) t.lease_expiry = t.acquired_at + *lease_;
  holders_[slot] = t;
  log_locked(LockEventKind::kGranted, slot, requester, t.token);
  return t;
}

void SlotPool::free_slot_locked(std::size_t slot, std::vector<AcquisitionToken>& handoffs) {
  holders_[slot].reset();
  if (queue_.empty()) return;
  auto waiter = queue_.front();
  queue_.pop_front();
  waiter->granted = grant_locked(slot, waiter->requester);
  handoffs.push_back(*waiter->granted);
  cv_.notify_all();
}

void SlotPool::expire_locked(Millis now, std::vector<AcquisitionToken>& expired) {
  if (!lease_) return;
  // Collect first so simultaneous expiries hand off in slot order to the
  // queue head, preserving arrival order of waiters.
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < holders_.size(); ++i) {
    const auto& h = holders_[i];
    if (h && h->lease_expiry && *h->lease_expiry < now) slots.push_back(i);
  }
  std::vector<AcquisitionToken> handoffs;
  for (std::size_t slot : slots) {
    AcquisitionToken t = *holders_[slot];
    expired_.insert(t.token);
    log_locked(LockEventKind::kExpired, slot, "", t.token);
    expired.push_back(t);
    free_slot_locked(slot, handoffs);
  }
}

void SlotPool::run_hook(const std::vector<AcquisitionToken>& released) {
  ReleaseHook hook;
  {
    std::lock_guard lock(mu_);
    hook = hook_;
  }
  if (!hook) return;
  for (const auto& t : released) hook(t);
}

AcquisitionToken SlotPool::acquire(const std::string& requester,
                                   std::optional<std::chrono::milliseconds> timeout) {
  std::vector<AcquisitionToken> expired;
  std::optional<AcquisitionToken> result;
  bool timed_out = false;
  {
    std::unique_lock lock(mu_);
    if (closed_) raise(ErrorCode::kPoolClosed, resource_.str());
    expire_locked(clock_->now(), expired);
    log_locked(LockEventKind::kAcquireRequest, std::nullopt, requester, "");
    if (auto slot = lowest_free_locked(); slot && queue_.empty()) {
      result = grant_locked(*slot, requester);
    } else {
      auto waiter = std::make_shared<Waiter>();
      waiter->requester = requester;
      queue_.push_back(waiter);
      auto ready = [&] { return waiter->granted.has_value() || waiter->closed; };
      if (timeout) {
        cv_.wait_for(lock, *timeout, ready);
      } else {
        cv_.wait(lock, ready);
      }
      if (waiter->granted) {
        result = waiter->granted;
      } else if (waiter->closed) {
        lock.unlock();
        run_hook(expired);
        raise(ErrorCode::kPoolClosed, resource_.str());
      } else {
        // Removal and the TimedOut record happen under the same lock as
        // grants, so a requester is never both granted and timed out.
        std::erase(queue_, waiter);
        log_locked(LockEventKind::kTimedOut, std::nullopt, requester, "");
        timed_out = true;
      }
    }
  }
  run_hook(expired);
  if (timed_out) {
    raise(ErrorCode::kAcquireTimeout,
          resource_.str() + " after " + std::to_string(timeout->count()) + "ms");
  }
  return *result;
}

std::optional<AcquisitionToken> SlotPool::try_acquire(const std::string& requester) {
  std::vector<AcquisitionToken> expired;
  std::optional<AcquisitionToken> result;
  {
    std::lock_guard lock(mu_);
    if (closed_) raise(ErrorCode::kPoolClosed, resource_.str());
    expire_locked(clock_->now(), expired);
    auto slot = lowest_free_locked();
    if (slot && queue_.empty()) {
      log_locked(LockEventKind::kAcquireRequest, std::nullopt, requester, "");
      result = grant_locked(*slot, requester);
    }
  }
  run_hook(expired);
  return result;
}

void SlotPool::release(const AcquisitionToken& token) {
  std::vector<AcquisitionToken> released;
  {
    std::lock_guard lock(mu_);
    if (token.resource != resource_ || token.slot >= num_slots_) {
      raise(ErrorCode::kInvalidToken, "token does not belong to " + resource_.str());
    }
    if (released_.contains(token.token) || expired_.contains(token.token)) {
      raise(ErrorCode::kAlreadyReleased, token.token);
    }
    const auto& h = holders_[token.slot];
    if (!h || h->token != token.token) {
      raise(ErrorCode::kInvalidToken, "token not issued by " + resource_.str());
    }
    released_.insert(token.token);
    log_locked(LockEventKind::kReleased, token.slot, "", token.token);
    released.push_back(*h);
    std::vector<AcquisitionToken> handoffs;
    free_slot_locked(token.slot, handoffs);
  }
  run_hook(released);
}

std::vector<AcquisitionToken> SlotPool::expire_leases(Millis now) {
  std::vector<AcquisitionToken> expired;
  {
    std::lock_guard lock(mu_);
    expire_locked(now, expired);
  }
  run_hook(expired);
  return expired;
}

void SlotPool::check(const AcquisitionToken& token) {
  std::vector<AcquisitionToken> expired;
  std::optional<Error> failure;
  {
    std::lock_guard lock(mu_);
    expire_locked(clock_->now(), expired);
    if (token.resource != resource_ || token.slot >= num_slots_) {
      failure.emplace(ErrorCode::kInvalidToken, "token does not belong to " + resource_.str());
    } else if (released_.contains(token.token)) {
      failure.emplace(ErrorCode::kAlreadyReleased, token.token);
    } else if (expired_.contains(token.token)) {
      failure.emplace(ErrorCode::kInvalidToken, "lease expired for " + token.token);
    } else if (const auto& h = holders_[token.slot]; !h || h->token != token.token) {
      failure.emplace(ErrorCode::kInvalidToken, "token not issued by " + resource_.str());
    }
  }
  run_hook(expired);
  if (failure) throw *failure;
}

bool SlotPool::is_held(const AcquisitionToken& token) const {
  std::lock_guard lock(mu_);
  if (token.slot >= num_slots_) return false;
  const auto& h = holders_[token.slot];
  return h && h->token == token.token;
}

std::optional<AcquisitionToken> SlotPool::find(const std::string& token) const {
  std::lock_guard lock(mu_);
  for (const auto& h : holders_) {
    if (h && h->token == token) return h;
  }
  return std::nullopt;
}

void SlotPool::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  for (auto& w : queue_) w->closed = true;
  queue_.clear();
  cv_.notify_all();
}

void SlotPool::set_release_hook(ReleaseHook hook) {
  std::lock_guard lock(mu_);
  hook_ = std::move(hook);
}

std::vector<AcquisitionToken> SlotPool::holders() const {
  std::lock_guard lock(mu_);
  std::vector<AcquisitionToken> out;
  for (const auto& h : holders_) {
    if (h) out.push_back(*h);
  }
  return out;
}

std::size_t SlotPool::holder_count() const { return holders().size(); }

std::size_t SlotPool::queue_length() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::vector<LockEvent> SlotPool::events() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace qrmi
