// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrmi/types.hpp"

namespace qrmi {

inline constexpr int kMaxQubits = 12;

enum class GateKind { kH, kX, kRz, kCx };

struct Gate {
  GateKind kind = GateKind::kH;
  int target = 0;
  int control = -1;  // kCx only
  double theta = 0.0;  // kRz only
};

/// The `circuit-v1` payload: a gate list over `num_qubits` ending in a single
/// measure_all, with a shot count and optional sampling seed.
struct Circuit {
  int num_qubits = 0;
  std::vector<Gate> ops;
  std::int64_t shots = 0;
  std::optional<std::uint64_t> seed;
};

/// Text format, one statement per line, `#` starts a comment:
///
///   qubits 2
///   h 0
///   cx 0 1
///   rz(0.25) 1
///   measure_all
///   shots 1000
///   seed 42
///
/// `qubits`, `shots` and `seed` may appear anywhere; gates must precede the
/// single measure_all. Throws Error(kMalformedPayload) naming the line.
Circuit parse_circuit(std::string_view text);

std::string to_text(const Circuit& circuit);

/// Throws Error(kMalformedPayload) when an invariant does not hold.
void validate(const Circuit& circuit);

/// xoshiro256** seeded through splitmix64. The sampler uses this exact
/// generator so that seeded counts are portable across platforms.
class Xoshiro256StarStar {
 public:
  explicit Xoshiro256StarStar(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, 1) from the top 53 bits.
  double next_double();

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

class Statevector {
 public:
  explicit Statevector(int num_qubits);

  int num_qubits() const noexcept { return num_qubits_; }
  std::span<const std::complex<double>> amplitudes() const noexcept { return amps_; }

  void apply(const Gate& gate);
  double norm_squared() const;
  std::vector<double> probabilities() const;

 private:
  int num_qubits_;
  std::vector<std::complex<double>> amps_;
};

/// Bitstring for basis index `index`: qubit n-1 is the leftmost character,
/// qubit 0 the rightmost.
std::string basis_label(std::size_t index, int num_qubits);

/// Inverse-CDF sampling of `shots` outcomes from `probabilities`.
Counts sample_counts(std::span<const double> probabilities, int num_qubits,
                     std::int64_t shots, std::uint64_t seed);

/// Runs the circuit from |0...0> and samples. `fallback_seed` is used when the
/// circuit carries no seed of its own.
Counts execute_circuit(const Circuit& circuit, std::uint64_t fallback_seed = 0);

}  // namespace qrmi
