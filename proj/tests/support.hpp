#pragma once

// Small builders shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tracediag/core_model.hpp"

namespace tdtest {

using namespace tracediag;

inline EventRecord ev(const std::string& trace, const std::string& id, std::uint64_t seq, std::int64_t t,
                      const std::string& op = "op", const std::string& desc = "desc") {
  EventRecord e;
  e.event_id = id;
  e.trace_id = trace;
  e.seq = seq;
  e.op_name = op;
  e.description = desc;
  e.start_time = t;
  return e;
}

/// A chain trace "<id>" with events <id>-0..<id>-(n-1) one time unit apart.
inline void add_chain(MasterTables& t, const std::string& id, std::size_t n, TraceLabel label = TraceLabel::normal(),
                      std::int64_t t0 = 100) {
  t.traces.push_back({id, label, id + "_src", ""});
  for (std::size_t i = 0; i < n; ++i) {
    t.events.push_back(ev(id, id + "-" + std::to_string(i), i, t0 + static_cast<std::int64_t>(i)));
    if (i > 0) t.edges.push_back({id, id + "-" + std::to_string(i - 1), id + "-" + std::to_string(i)});
  }
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tracediag-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace tdtest
