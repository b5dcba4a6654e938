#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "travelrule/node.hpp"

namespace travelrule {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::pair<std::string, int> split_host_port(const std::string& s) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw TransportError("expected host:port, got " + s);
  return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
}

namespace detail {

inline int connect_to(const std::string& host, int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw TransportError("connect to " + host + ":" + std::to_string(port) +
                         " failed");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

inline bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

// Blocking request/response client for the node's loopback operations
// socket; same length-prefixed framing as the peer wire.
class OpsClient {
 public:
  explicit OpsClient(int port) : port_(port) {}

  json call(const json& request) {
    int fd = detail::connect_to("127.0.0.1", port_);
    std::string frame = encode_frame_payload(canonical_bytes(request));
    if (!detail::write_all(fd, frame)) {
      ::close(fd);
      throw TransportError("ops write failed");
    }
    FrameDecoder dec;
    char buf[4096];
    while (true) {
      if (auto payload = dec.next()) {
        ::close(fd);
        return json::parse(*payload);
      }
      ssize_t n = ::read(fd, buf, sizeof(buf));
      if (n <= 0) {
        ::close(fd);
        throw TransportError("ops connection closed");
      }
      dec.feed(buf, static_cast<std::size_t>(n));
    }
  }

 private:
  int port_;
};

// Runs one Node over real sockets: a peer listener for signed protocol
// frames, a loopback ops listener for CLI commands, persistent outbound
// connections per peer (FIFO per link), and a one-second timer.
class NodeServer {
 public:
  NodeServer(NodeConfig config, const Clock* clock = nullptr)
      : config_(std::move(config)),
        clock_(clock ? clock : &system_clock_),
        node_(Node::from_config(
            config_, clock_,
            [this](const VaspId& to, const Message& m) { deliver(to, m); },
            [this](const json& e) { log_event(e); })) {}

  ~NodeServer() { stop(); }

  Node& node() { return node_; }

  void start() {
    auto [host, port] = split_host_port(config_.listen_address);
    listen_fd_ = listen_on(host, port);
    ops_fd_ = listen_on("127.0.0.1", config_.ops_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(listen_fd_, false); });
    ops_thread_ = std::thread([this] { accept_loop(ops_fd_, true); });
    timer_thread_ = std::thread([this] { timer_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::shutdown(ops_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    ::close(ops_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    if (ops_thread_.joinable()) ops_thread_.join();
    if (timer_thread_.joinable()) timer_thread_.join();
    {
      std::lock_guard<std::mutex> lk(peers_mutex_);
      for (auto& [id, fd] : peer_fds_) ::close(fd);
      peer_fds_.clear();
    }
    std::vector<std::thread> workers;
    {
      std::lock_guard<std::mutex> lk(workers_mutex_);
      workers.swap(workers_);
    }
    for (auto& t : workers)
      if (t.joinable()) t.join();
  }

 private:
  static int listen_on(const std::string& host, int port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw TransportError("bad listen address: " + host);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw TransportError("bind " + host + ":" + std::to_string(port) +
                           " failed");
    if (::listen(fd, 16) != 0) throw TransportError("listen failed");
    return fd;
  }

  void accept_loop(int listen_fd, bool ops) {
    while (running_) {
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) break;
      std::lock_guard<std::mutex> lk(workers_mutex_);
      workers_.emplace_back([this, fd, ops] {
        ops ? ops_connection(fd) : peer_connection(fd);
      });
    }
  }

  void peer_connection(int fd) {
    FrameDecoder dec;
    char buf[16384];
    try {
      while (running_) {
        while (auto payload = dec.next()) {
          std::lock_guard<std::mutex> lk(node_mutex_);
          node_.on_frame(encode_frame_payload(*payload));
        }
        ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n <= 0) break;
        dec.feed(buf, static_cast<std::size_t>(n));
      }
    } catch (const FrameDecodeError&) {
      // hostile length prefix: cut the connection
    }
    ::close(fd);
  }

  void ops_connection(int fd) {
    FrameDecoder dec;
    char buf[16384];
    try {
      while (running_) {
        while (auto payload = dec.next()) {
          json response = handle_ops(json::parse(*payload));
          if (!detail::write_all(
                  fd, encode_frame_payload(canonical_bytes(response))))
            break;
        }
        ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n <= 0) break;
        dec.feed(buf, static_cast<std::size_t>(n));
      }
    } catch (const std::exception&) {
    }
    ::close(fd);
  }

  json handle_ops(const json& request) {
    try {
      const std::string op = request.at("op").get<std::string>();
      std::lock_guard<std::mutex> lk(node_mutex_);
      if (op == "submit_transfer") {
        std::string sid = node_.submit_transfer(
            request.at("customer_id").get<std::string>(),
            request.at("beneficiary_address").get<VirtualAssetAddress>(),
            request.at("asset").get<std::string>(),
            request.at("amount").get<std::string>());
        return json{{"ok", true}, {"session_id", sid}};
      }
      if (op == "session_status") {
        return json{{"ok", true},
                    {"status", node_.get_session_status(
                                   request.at("session_id"))}};
      }
      if (op == "flag") {
        std::string rid = node_.flag_suspicious(
            Digest::parse(request.at("entry_hash").get<std::string>()),
            reason_code_from_string(request.value("reason", "STR")));
        return json{{"ok", true}, {"request_id", rid}};
      }
      if (op == "additional_info") {
        auto info = node_.get_additional_info(
            request.at("request_id").get<std::string>());
        json j{{"ok", true}, {"available", info.has_value()}};
        if (info) j["real_name"] = *info;
        return j;
      }
      return json{{"ok", false}, {"error", "unknown op: " + op}};
    } catch (const std::exception& e) {
      return json{{"ok", false}, {"error", e.what()}};
    }
  }

  // Outbound: one persistent connection per peer, writes serialized so the
  // link stays FIFO. Failures drop the message; the protocol timeout covers
  // the loss.
  void deliver(const VaspId& to, const Message& m) {
    auto it = config_.peers.find(to);
    if (it == config_.peers.end()) return;
    std::string frame = encode_frame(m);
    std::lock_guard<std::mutex> lk(peers_mutex_);
    for (int attempt = 0; attempt < 2; ++attempt) {
      int fd = peer_fd(to, it->second);
      if (fd < 0) return;
      if (detail::write_all(fd, frame)) return;
      ::close(fd);
      peer_fds_.erase(to);  // reconnect once
    }
  }

  int peer_fd(const VaspId& to, const std::string& address) {
    auto it = peer_fds_.find(to);
    if (it != peer_fds_.end()) return it->second;
    try {
      auto [host, port] = split_host_port(address);
      int fd = detail::connect_to(host, port);
      peer_fds_[to] = fd;
      return fd;
    } catch (const TransportError&) {
      return -1;
    }
  }

  void timer_loop() {
    std::int64_t last_refresh = clock_->now_seconds();
    while (running_) {
      std::this_thread::sleep_for(std::chrono::seconds(1));
      std::lock_guard<std::mutex> lk(node_mutex_);
      node_.tick();
      const std::int64_t now = clock_->now_seconds();
      if (now - last_refresh >= config_.registry_refresh_seconds) {
        try {
          node_.reload_registry(config_.registry_path);
        } catch (const std::exception&) {
          // keep the previous snapshot on a bad read
        }
        last_refresh = now;
      }
    }
  }

  // Session-level events, written as JSON lines. Payloads never appear here.
  void log_event(const json& e) {
    std::lock_guard<std::mutex> lk(log_mutex_);
    std::ofstream f(config_.data_dir + "/node.log", std::ios::app);
    f << canonical_bytes(e) << "\n";
  }

  NodeConfig config_;
  SystemClock system_clock_;
  const Clock* clock_;
  std::mutex node_mutex_;
  Node node_;
  int listen_fd_ = -1;
  int ops_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread ops_thread_;
  std::thread timer_thread_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::mutex peers_mutex_;
  std::map<VaspId, int> peer_fds_;
  std::mutex log_mutex_;
};

}  // namespace travelrule
