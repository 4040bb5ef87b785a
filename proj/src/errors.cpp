// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/errors.hpp"

namespace qrmi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownResource: return "UnknownResource";
    case ErrorCode::kAcquireTimeout: return "AcquireTimeout";
    case ErrorCode::kResourceUnavailable: return "ResourceUnavailable";
    case ErrorCode::kInvalidToken: return "InvalidToken";
    case ErrorCode::kAlreadyReleased: return "AlreadyReleased";
    case ErrorCode::kMalformedPayload: return "MalformedPayload";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kTaskFailed: return "TaskFailed";
    case ErrorCode::kTaskCancelled: return "TaskCancelled";
    case ErrorCode::kPoolClosed: return "PoolClosed";
    case ErrorCode::kAuthFailed: return "AuthFailed";
    case ErrorCode::kGatewayUnreachable: return "GatewayUnreachable";
    case ErrorCode::kBindFailed: return "BindFailed";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kBackendInitFailed: return "BackendInitFailed";
    case ErrorCode::kSecretMissing: return "SecretMissing";
    case ErrorCode::kInvalidOption: return "InvalidOption";
    case ErrorCode::kTaskScriptError: return "TaskScriptError";
    case ErrorCode::kSpecError: return "SpecError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace qrmi
