// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrmi/circuit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "qrmi/errors.hpp"

namespace qrmi {
namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  raise(ErrorCode::kMalformedPayload, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

Circuit parse_circuit(std::string_view text) {
  Circuit c;
  bool have_qubits = false;
  bool have_shots = false;
  bool measured = false;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto toks = split_ws(raw);
    if (toks.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string& op = toks[0];
    auto qubit_arg = [&](std::size_t i) {
      if (!have_qubits) malformed(lineno, "gate before 'qubits'");
      auto q = parse_number<int>(toks.at(i));
      if (!q || *q < 0 || *q >= c.num_qubits) malformed(lineno, "qubit index out of range");
      return *q;
    };
    if (op == "qubits") {
      if (have_qubits) malformed(lineno, "duplicate 'qubits'");
      if (toks.size() != 2) malformed(lineno, "expected 'qubits <n>'");
      auto n = parse_number<int>(toks[1]);
      if (!n || *n < 1 || *n > kMaxQubits) {
        malformed(lineno, "qubit count must be in 1.." + std::to_string(kMaxQubits));
      }
      c.num_qubits = *n;
      have_qubits = true;
    } else if (op == "shots") {
      if (have_shots) malformed(lineno, "duplicate 'shots'");
      if (toks.size() != 2) malformed(lineno, "expected 'shots <n>'");
      auto n = parse_number<std::int64_t>(toks[1]);
      if (!n || *n < 1) malformed(lineno, "shots must be >= 1");
      c.shots = *n;
      have_shots = true;
    } else if (op == "seed") {
      if (c.seed) malformed(lineno, "duplicate 'seed'");
      if (toks.size() != 2) malformed(lineno, "expected 'seed <n>'");
      auto n = parse_number<std::uint64_t>(toks[1]);
      if (!n) malformed(lineno, "seed must be an unsigned 64-bit integer");
      c.seed = *n;
    } else if (op == "measure_all") {
      if (toks.size() != 1) malformed(lineno, "measure_all takes no arguments");
      if (measured) malformed(lineno, "duplicate measure_all");
      if (!have_qubits) malformed(lineno, "measure_all before 'qubits'");
      measured = true;
    } else {
      if (measured) malformed(lineno, "gate after measure_all");
      Gate g;
      if (op == "h" || op == "x") {
        if (toks.size() != 2) malformed(lineno, "expected '" + op + " <q>'");
        g.kind = op == "h" ? GateKind::kH : GateKind::kX;
        g.target = qubit_arg(1);
      } else if (op == "cx") {
        if (toks.size() != 3) malformed(lineno, "expected 'cx <control> <target>'");
        g.kind = GateKind::kCx;
        g.control = qubit_arg(1);
        g.target = qubit_arg(2);
        if (g.control == g.target) malformed(lineno, "cx control equals target");
      } else if (op.starts_with("rz(") && op.ends_with(")")) {
        if (toks.size() != 2) malformed(lineno, "expected 'rz(<theta>) <q>'");
        auto theta = parse_double(op.substr(3, op.size() - 4));
        if (!theta) malformed(lineno, "bad rz angle");
        g.kind = GateKind::kRz;
        g.theta = *theta;
        g.target = qubit_arg(1);
      } else {
        malformed(lineno, "unknown statement '" + op + "'");
      }
      c.ops.push_back(g);
    }
    if (end == text.size()) break;
  }
  if (!have_qubits) malformed(lineno, "missing 'qubits'");
  if (!measured) malformed(lineno, "missing trailing measure_all");
  return c;
}

void validate(const Circuit& c) {
  if (c.num_qubits < 1 || c.num_qubits > kMaxQubits) {
    raise(ErrorCode::kMalformedPayload, "qubit count out of range");
  }
  if (c.shots < 1) raise(ErrorCode::kMalformedPayload, "shots must be >= 1");
  for (const auto& g : c.ops) {
    if (g.target < 0 || g.target >= c.num_qubits) {
      raise(ErrorCode::kMalformedPayload, "qubit index out of range");
    }
    if (g.kind == GateKind::kCx &&
        (g.control < 0 || g.control >= c.num_qubits || g.control == g.target)) {
      raise(ErrorCode::kMalformedPayload, "bad cx operands");
    }
  }
}

std::string to_text(const Circuit& c) {
  std::ostringstream out;
  out.precision(17);
  out << "qubits " << c.num_qubits << '\n';
  for (const auto& g : c.ops) {
    switch (g.kind) {
      case GateKind::kH: out << "h " << g.target << '\n'; break;
      case GateKind::kX: out << "x " << g.target << '\n'; break;
      case GateKind::kRz: out << "rz(" << g.theta << ") " << g.target << '\n'; break;
      case GateKind::kCx: out << "cx " << g.control << ' ' << g.target << '\n'; break;
    }
  }
  out << "measure_all\n";
  if (c.shots > 0) out << "shots " << c.shots << '\n';
  if (c.seed) out << "seed " << *c.seed << '\n';
  return out.str();
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Xoshiro256StarStar::Xoshiro256StarStar(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Xoshiro256StarStar::next() {
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256StarStar::next_double() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

Statevector::Statevector(int num_qubits)
    : num_qubits_(num_qubits), amps_(std::size_t{1} << num_qubits) {
  if (num_qubits < 1 || num_qubits > kMaxQubits) {
    raise(ErrorCode::kMalformedPayload, "qubit count out of range");
  }
  amps_[0] = 1.0;
}

void Statevector::apply(const Gate& g) {
  const std::size_t bit = std::size_t{1} << g.target;
  const std::size_t dim = amps_.size();
  switch (g.kind) {
    case GateKind::kH: {
      const double r = 1.0 / std::sqrt(2.0);
      for (std::size_t i = 0; i < dim; ++i) {
        if (i & bit) continue;
        auto a0 = amps_[i];
        auto a1 = amps_[i | bit];
        amps_[i] = r * (a0 + a1);
        amps_[i | bit] = r * (a0 - a1);
      }
      break;
    }
    case GateKind::kX:
      for (std::size_t i = 0; i < dim; ++i) {
        if (!(i & bit)) std::swap(amps_[i], amps_[i | bit]);
      }
      break;
    case GateKind::kRz: {
      const auto lo = std::polar(1.0, -g.theta / 2);
      const auto hi = std::polar(1.0, g.theta / 2);
      for (std::size_t i = 0; i < dim; ++i) amps_[i] *= (i & bit) ? hi : lo;
      break;
    }
    case GateKind::kCx: {
      const std::size_t cbit = std::size_t{1} << g.control;
      for (std::size_t i = 0; i < dim; ++i) {
        if ((i & cbit) && !(i & bit)) std::swap(amps_[i], amps_[i | bit]);
      }
      break;
    }
  }
}

double Statevector::norm_squared() const {
  double s = 0;
  for (const auto& a : amps_) s += std::norm(a);
  return s;
}

std::vector<double> Statevector::probabilities() const {
  std::vector<double> p(amps_.size());
  std::transform(amps_.begin(), amps_.end(), p.begin(),
                 [](const std::complex<double>& a) { return std::norm(a); });
  return p;
}

std::string basis_label(std::size_t index, int num_qubits) {
  std::string s(static_cast<std::size_t>(num_qubits), '0');
  for (int q = 0; q < num_qubits; ++q) {
    if (index & (std::size_t{1} << q)) s[static_cast<std::size_t>(num_qubits - 1 - q)] = '1';
  }
  return s;
}

Counts sample_counts(std::span<const double> probabilities, int num_qubits,
                     std::int64_t shots, std::uint64_t seed) {
  std::vector<double> cdf(probabilities.size());
  double acc = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    cdf[i] = acc;
  }
  // Outcomes with zero probability must never be drawn, so the search
  // below never lands past the last non-zero entry.
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > 0) last_nonzero = i;
  }
  std::vector<std::uint64_t> hist(probabilities.size(), 0);
  Xoshiro256StarStar rng(seed);
  for (std::int64_t s = 0; s < shots; ++s) {
    double u = rng.next_double() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    hist[std::min(idx, last_nonzero)]++;
  }
  Counts out;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (hist[i]) out[basis_label(i, num_qubits)] = hist[i];
  }
  return out;
}

Counts execute_circuit(const Circuit& circuit, std::uint64_t fallback_seed) {
  validate(circuit);
  Statevector sv(circuit.num_qubits);
  for (const auto& g : circuit.ops) sv.apply(g);
  auto probs = sv.probabilities();
  return sample_counts(probs, circuit.num_qubits, circuit.shots,
                       circuit.seed.value_or(fallback_seed));
}

}  // namespace qrmi
