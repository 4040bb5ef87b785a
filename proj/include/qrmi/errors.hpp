// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qrmi {

/// Error taxonomy shared by every module. Each value maps onto one failure
/// case of the resource-control contract or one of its plumbing layers.
enum class ErrorCode {
  kUnknownResource,
  kAcquireTimeout,
  kResourceUnavailable,
  kInvalidToken,
  kAlreadyReleased,
  kMalformedPayload,
  kUnknownTask,
  kTaskFailed,
  kTaskCancelled,
  kPoolClosed,
  kAuthFailed,
  kGatewayUnreachable,
  kBindFailed,
  kParseError,
  kValidationError,
  kBackendInitFailed,
  kSecretMissing,
  kInvalidOption,
  kTaskScriptError,
  kSpecError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace qrmi
