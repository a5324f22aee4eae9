#pragma once

// Shared plumbing: error types, deterministic randomness, string and
// delimited-file helpers.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#ifndef TRACEDIAG_VERSION
#define TRACEDIAG_VERSION "0.0.0"
#endif

namespace tracediag {

inline constexpr std::string_view kToolVersion = TRACEDIAG_VERSION;

/// Input data is inconsistent, malformed, or violates a documented contract.
/// The CLI maps this family to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedLineError : public DataError {
 public:
  MalformedLineError(std::size_t line_no, const std::string& what)
      : DataError("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class SchemaError : public DataError {
 public:
  SchemaError(const std::string& file, std::size_t row, const std::string& what)
      : DataError(file + " row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Programming-contract violations (shape mismatch, bad argument domain).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Subsystem seed: splitmix64(seed XOR fnv1a64(name)). Every random stream in
/// the toolkit is keyed this way from the single user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ fnv1a64(name));
}

/// xoshiro256** with its own integer/real mappings, so that sequences do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
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

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound), rejection-sampled.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ContractError("Rng::below: bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % bound;
  }

  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ContractError("Rng::between: empty range");
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::optional<std::int64_t> parse_int64(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  const auto* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest decimal representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string zero_pad(std::uint64_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

// ---------------------------------------------------------------------------
// Delimited files
// ---------------------------------------------------------------------------

/// Escapes backslash, tab, newline and carriage return for a TSV cell.
inline std::string tsv_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tsv_unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == 't') { out += '\t'; ++i; continue; }
      if (n == 'n') { out += '\n'; ++i; continue; }
      if (n == 'r') { out += '\r'; ++i; continue; }
      if (n == '\\') { out += '\\'; ++i; continue; }
    }
    out += s[i];
  }
  return out;
}

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

/// A header-addressed table read from a TSV (escaped cells) or CSV file.
struct DelimitedTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based physical line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    auto c = column(name);
    if (!c) throw SchemaError(source, 1, "missing column '" + std::string(name) + "'");
    return *c;
  }
};

inline DelimitedTable parse_delimited(std::istream& in, const std::string& source) {
  DelimitedTable t;
  t.source = source;
  std::string line;
  std::size_t line_no = 0;
  bool csv = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (t.header.empty()) {
      if (line.empty() || line[0] == '#') continue;
      csv = line.find('\t') == std::string::npos && line.find(',') != std::string::npos;
      t.header = csv ? split_csv_record(line) : split(line, '\t');
      for (auto& h : t.header) h = std::string(trim(h));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    if (csv) {
      cells = split_csv_record(line);
    } else {
      cells = split(line, '\t');
      for (auto& c : cells) c = tsv_unescape(c);
    }
    if (cells.size() != t.header.size())
      throw SchemaError(source, line_no,
                        "expected " + std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw SchemaError(source, 0, "missing header row");
  return t;
}

inline DelimitedTable read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return parse_delimited(in, path.string());
}

/// Writes to `path` through a sibling temporary file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tracediag
