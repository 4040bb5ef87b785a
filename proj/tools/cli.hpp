// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qrmi/errors.hpp"
#include "qrmi/types.hpp"

namespace qrmi {
class Registry;
}

namespace qrmi::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitAcquireTimeout = 4;
inline constexpr int kExitTaskFailed = 5;
inline constexpr int kExitSpec = 6;
inline constexpr int kExitBind = 7;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInterrupted = 130;

int exit_code_for(ErrorCode code);

struct Io {
  std::ostream& out;
  std::ostream& err;
  EnvLookup env = process_env();
  // Set asynchronously (signal handler); polled by long-running commands.
  const std::atomic<bool>* interrupted = nullptr;
  // Called once the mock gateway is serving, with its port.
  std::function<void(int)> on_listening;
  // When set, `list` and `run` use this registry instead of opening --config.
  Registry* registry = nullptr;
};

/// Parses `args` (args[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, Io io);

}  // namespace qrmi::cli
