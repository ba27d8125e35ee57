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

#include "subsidy/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxLine = 64 * 1024;

bool write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

LookupServer::LookupServer(std::string dictionary_path) : path_(std::move(dictionary_path)) {
  table_ = std::make_shared<const LookupTable>(AllocationDictionary::load(path_));
}

LookupServer::LookupServer(const AllocationDictionary& dictionary)
    : table_(std::make_shared<const LookupTable>(dictionary)) {}

LookupServer::~LookupServer() { stop(); }

std::shared_ptr<const LookupTable> LookupServer::table() const {
  std::lock_guard lock(table_mu_);
  return table_;
}

void LookupServer::reload(const AllocationDictionary& dictionary) {
  auto fresh = std::make_shared<const LookupTable>(dictionary);
  std::lock_guard lock(table_mu_);
  table_ = std::move(fresh);
}

void LookupServer::reload_from(const std::string& path) { reload(AllocationDictionary::load(path)); }

std::string LookupServer::handle_line(std::string_view line) {
  if (line.find("\"admin\"") != std::string_view::npos) {
    json req = json::parse(line.begin(), line.end(), nullptr, false);
    if (req.is_object() && req.contains("admin")) {
      if (req["admin"] != "reload") return R"({"error":"unknown_admin_command"})";
      const std::string path = req.value("path", path_);
      if (path.empty()) return R"({"error":"reload_failed","detail":"no dictionary path"})";
      try {
        reload_from(path);
      } catch (const Error& e) {
        return json{{"error", "reload_failed"}, {"detail", e.what()}}.dump();
      }
      return json{{"reloaded", true}, {"entries", table()->size()}}.dump();
    }
  }
  return handle_request(*table(), line);
}

void LookupServer::serve_stream(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out << handle_line(line) << '\n';
    out.flush();
  }
}

int LookupServer::listen(const std::string& host, int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::kConfig, "listen address must be an IPv4 literal: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 64) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::kIo, "bind " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

void LookupServer::run() {
  const int lfd = listen_fd_;
  if (lfd < 0) throw Error(ErrorCode::kConfig, "run() before listen()");
  while (!stopping_) {
    const int fd = ::accept(lfd, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(conn_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void LookupServer::serve_connection(int fd) {
  std::string buffer;
  bool discarding = false;  // inside an oversized line already answered
  char chunk[4096];
  for (;;) {
    const auto n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    std::string out;
    for (auto nl = buffer.find('\n', start); nl != std::string::npos; nl = buffer.find('\n', start)) {
      std::string_view line(buffer.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      out += line.size() > kMaxLine ? std::string(R"({"error":"bad_request"})") : handle_line(line);
      out += '\n';
    }
    buffer.erase(0, start);
    if (buffer.size() > kMaxLine) {
      if (!discarding) {
        out += R"({"error":"bad_request"})";
        out += '\n';
      }
      discarding = true;
      buffer.clear();
    }
    if (!out.empty() && !write_all(fd, out)) break;
  }
  std::lock_guard lock(conn_mu_);
  auto it = std::find(conn_fds_.begin(), conn_fds_.end(), fd);
  if (it != conn_fds_.end()) {
    conn_fds_.erase(it);
    ::close(fd);
  }
}

void LookupServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

}  // namespace subsidy
