// Copyright 2026 The Subsidy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "subsidy/lookup.hpp"

namespace subsidy {

/// Line-delimited lookup service. Besides lookup requests it accepts
///   {"admin":"reload"}                 reload from the startup path
///   {"admin":"reload","path":"..."}    reload from another file
/// Reload builds the new table off to the side and swaps the pointer, so a
/// request sees either the old table or the new one in full.
class LookupServer {
 public:
  /// Loads `dictionary_path`; throws kIo/kParse when it is missing or bad.
  explicit LookupServer(std::string dictionary_path);
  explicit LookupServer(const AllocationDictionary& dictionary);
  ~LookupServer();

  LookupServer(const LookupServer&) = delete;
  LookupServer& operator=(const LookupServer&) = delete;

  std::shared_ptr<const LookupTable> table() const;
  void reload(const AllocationDictionary& dictionary);
  void reload_from(const std::string& path);

  /// Response for one request line (no trailing newline).
  std::string handle_line(std::string_view line);

  /// Serves until EOF on `in`.
  void serve_stream(std::istream& in, std::ostream& out);

  /// Binds and listens; port 0 picks a free port. Returns the bound port.
  int listen(const std::string& host, int port);
  /// Accept loop; returns after stop().
  void run();
  void stop();

 private:
  void serve_connection(int fd);

  std::string path_;
  mutable std::mutex table_mu_;
  std::shared_ptr<const LookupTable> table_;

  std::atomic<bool> stopping_{false};
  int listen_fd_ = -1;
  std::mutex conn_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> workers_;
};

}  // namespace subsidy
