//
// Copyright 2026 The toxcg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Shared plumbing: error taxonomy, seeded RNG, hashing, tokenization and
// small file/string helpers used by every other toxcg header.

#ifndef TOXCG_CORE_HPP_
#define TOXCG_CORE_HPP_

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toxcg {

#ifdef TOXCG_VERSION
inline constexpr std::string_view kVersion = TOXCG_VERSION;
#else
inline constexpr std::string_view kVersion = "0.1.0";
#endif

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  kConfig,       // invalid configuration or arguments
  kSchema,       // input file does not match the concept schema
  kData,         // malformed row / record
  kDependency,   // upstream artifact missing
  kNumeric,      // divergence, non-finite gradient, SVD failure
  kTransport,    // LLM endpoint unreachable after retries
  kFixtureMiss,  // offline fixture has no entry for a prompt
  kParse,        // LLM response could not be parsed
  kRender,       // prompt placeholder unbound
  kDegenerate,   // single-class input, zero vector
  kSizing,       // corpus too small for the request
  kShape,        // dimension mismatch
  kPairing,      // record / prediction missing for a sample
  kEmptyInput,   // empty text, empty corpus, empty score list
  kIo,           // filesystem failure
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDependency: return "dependency";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kFixtureMiss: return "fixture-miss";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kRender: return "render";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kSizing: return "sizing";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kPairing: return "pairing";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit status for the CLI: 2 config, 3 dependency, 4 numeric,
// 5 transport, 1 for everything else.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kDependency:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
    case ErrorKind::kTransport:
    case ErrorKind::kFixtureMiss:
      return 5;
    default:
      return 1;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-stage seed derived from the global seed and a stage name, so each
/// stage is reproducible on its own.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) {
  return splitmix64(global_seed ^ fnv1a64(stage));
}

/// xoshiro256** seeded through splitmix64. The distributions below are
/// written out by hand because the standard ones are implementation-defined,
/// and results must be bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s = splitmix64(s);
      word = s;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
  std::size_t index(std::size_t n) {
    if (n == 0) fail(ErrorKind::kConfig, "Rng::index called with n = 0");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kIo, "SHA-256 digest failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < length; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

/// Fixed-notation rendering with enough digits to round-trip a double.
inline std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << value;
  return out.str();
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

namespace detail {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid
// bytes decode to U+FFFD and consume a single byte.
inline char32_t decode_utf8(std::string_view text, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  const unsigned char lead = byte(i);
  int extra = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++i;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= extra; ++k) {
    if (i + k >= text.size() || (byte(i + k) & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (byte(i + k) & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

// Word characters: ASCII letters and digits, and every non-ASCII code point
// outside the Latin-1 punctuation range, the General Punctuation block, and
// CJK symbols/punctuation.
inline bool is_word_codepoint(char32_t cp) {
  if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
  if (cp >= 0x80 && cp <= 0xBF) return false;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp == 0xFEFF || cp == 0xFFFD) return false;
  return true;
}

}  // namespace detail

/// Splits text into word tokens. A token is a maximal run of word code
/// points; an ASCII apostrophe between two word characters stays inside the
/// token ("don't"). Lowercasing folds ASCII only.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = detail::decode_utf8(text, i);
    if (detail::is_word_codepoint(cp)) {
      if (cp < 0x80 && lowercase) {
        current.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
      } else {
        current.append(text.substr(start, i - start));
      }
      continue;
    }
    if (cp == U'\'' && !current.empty() && i < text.size()) {
      std::size_t peek = i;
      if (detail::is_word_codepoint(detail::decode_utf8(text, peek))) {
        current.push_back('\'');
        continue;
      }
    }
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::kIo, "short write: " + path.string());
}

inline std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

// Minimal RFC-4180 field quoting.
inline std::string csv_field(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace toxcg

#endif  // TOXCG_CORE_HPP_
