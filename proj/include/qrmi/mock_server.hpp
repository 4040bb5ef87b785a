// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qrmi/gateway.hpp"
#include "qrmi/pseudo_qpu.hpp"

namespace qrmi {

struct MockGatewayOptions {
  DeviceSpec device;
  GatewayMode mode = GatewayMode::kDirectAccess;
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  // Expected bearer secret; no auth check when unset.
  std::optional<std::string> secret;
  // Simulated milliseconds per wall millisecond.
  double time_scale = 1.0;
};

/// Embedded vendor service speaking the gateway wire protocol in front of a
/// PseudoQpu. Supports scripted faults for client tests.
class MockGatewayServer {
 public:
  explicit MockGatewayServer(MockGatewayOptions options);
  ~MockGatewayServer();

  MockGatewayServer(const MockGatewayServer&) = delete;
  MockGatewayServer& operator=(const MockGatewayServer&) = delete;

  /// Binds and starts serving in the background. Throws kBindFailed.
  int start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  int port() const;
  std::string url() const;

  /// The next `n` requests fail with `status` before routing.
  void fail_next(int n, int status = 503);
  void force_unauthorized(bool on);

  /// Wire ids in the order their jobs reached a terminal state.
  std::vector<std::string> completion_order() const;
  /// Wire ids in the order the device started running them.
  std::vector<std::string> start_order() const;
  /// Distinct jobs created (idempotent resubmits excluded).
  std::size_t jobs_created() const;
  std::size_t requests_seen() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qrmi
