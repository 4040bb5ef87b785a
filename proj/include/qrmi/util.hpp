// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace qrmi {

// Random identifiers come from the OpenSSL CSPRNG.
std::string random_hex(std::size_t num_bytes);
std::string make_uuid();

std::string base64_encode(std::string_view data);
// Throws Error(kMalformedPayload) on invalid input.
std::string base64_decode(std::string_view text);

}  // namespace qrmi
