#include "rtvc/udp_runtime.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

namespace rtvc {

namespace {

std::int64_t wall_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Result<int> open_udp_socket(std::optional<std::uint16_t> bind_port) {
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) return make_error("io-error", "socket() failed");
  if (bind_port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(*bind_port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      return make_error("io-error", "bind() failed on port " + std::to_string(*bind_port));
    }
  }
  return fd;
}

}  // namespace

Result<std::unique_ptr<UdpRuntime>> UdpRuntime::bind_server(const UdpPorts& ports,
                                                            double time_scale) {
  auto rt = std::unique_ptr<UdpRuntime>(new UdpRuntime());
  rt->server_mode_ = true;
  rt->ports_ = ports;
  rt->time_scale_ = time_scale;
  rt->epoch_us_ = wall_us();
  for (std::size_t i = 0; i < kChannelCount; ++i) {
    auto fd = open_udp_socket(ports.port(static_cast<ChannelId>(i)));
    if (!fd.ok()) return fd.error();
    rt->sockets_[i] = fd.value();
  }
  return rt;
}

Result<std::unique_ptr<UdpRuntime>> UdpRuntime::connect_client(const std::string& server_host,
                                                               const UdpPorts& ports,
                                                               double time_scale) {
  auto rt = std::unique_ptr<UdpRuntime>(new UdpRuntime());
  rt->server_mode_ = false;
  rt->ports_ = ports;
  rt->time_scale_ = time_scale;
  rt->epoch_us_ = wall_us();

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(server_host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    return make_error("io-error", "cannot resolve " + server_host);
  }
  rt->server_ip_ = ntohl(reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr.s_addr);
  ::freeaddrinfo(res);

  for (std::size_t i = 0; i < kChannelCount; ++i) {
    auto fd = open_udp_socket(std::nullopt);  // ephemeral local port
    if (!fd.ok()) return fd.error();
    rt->sockets_[i] = fd.value();
  }
  return rt;
}

UdpRuntime::~UdpRuntime() {
  for (int fd : sockets_) {
    if (fd >= 0) ::close(fd);
  }
}

TimeMs UdpRuntime::sim_now() const {
  double real_ms = static_cast<double>(wall_us() - epoch_us_) / 1000.0;
  return static_cast<TimeMs>(real_ms * time_scale_);
}

Addr UdpRuntime::addr_of(const PeerKey& key) {
  auto it = peer_addrs_.find(key);
  if (it != peer_addrs_.end()) return it->second;
  Addr addr = static_cast<Addr>(peers_.size());
  peers_.push_back(key);
  peer_addrs_[key] = addr;
  return addr;
}

void UdpRuntime::send(ChannelId ch, Addr to, Bytes datagram, TimeMs) {
  const std::size_t i = static_cast<std::size_t>(ch);
  sockaddr_in dest{};
  dest.sin_family = AF_INET;
  if (server_mode_) {
    if (to >= peers_.size()) return;  // unknown peer, nothing to do
    dest.sin_addr.s_addr = htonl(peers_[to].ip);
    dest.sin_port = htons(peers_[to].port);
  } else {
    dest.sin_addr.s_addr = htonl(server_ip_);
    dest.sin_port = htons(ports_.port(ch));
  }
  ::sendto(sockets_[i], datagram.data(), datagram.size(), 0,
           reinterpret_cast<sockaddr*>(&dest), sizeof(dest));
}

void UdpRuntime::run(SimParty& party, std::optional<TimeMs> until_sim_ms) {
  Bytes buf(64 * 1024);
  while (!stop_) {
    TimeMs now = sim_now();
    if (until_sim_ms && now >= *until_sim_ms) break;

    party.advance_to(now);

    // Sleep until the party's next event (or a 20 ms heartbeat).
    std::optional<TimeMs> wake = party.next_wakeup();
    int timeout_ms = 20;
    if (wake && *wake > now) {
      double real = static_cast<double>(*wake - now) / time_scale_;
      timeout_ms = static_cast<int>(real) + 1;
      if (timeout_ms > 20) timeout_ms = 20;
    } else if (wake && *wake <= now) {
      timeout_ms = 0;
    }

    pollfd fds[kChannelCount];
    for (std::size_t i = 0; i < kChannelCount; ++i) {
      fds[i].fd = sockets_[i];
      fds[i].events = POLLIN;
      fds[i].revents = 0;
    }
    int ready = ::poll(fds, kChannelCount, timeout_ms);
    if (ready <= 0) continue;

    for (std::size_t i = 0; i < kChannelCount; ++i) {
      if (!(fds[i].revents & POLLIN)) continue;
      sockaddr_in from{};
      socklen_t from_len = sizeof(from);
      ssize_t n = ::recvfrom(sockets_[i], buf.data(), buf.size(), 0,
                             reinterpret_cast<sockaddr*>(&from), &from_len);
      if (n <= 0) continue;
      PeerKey key{ntohl(from.sin_addr.s_addr), ntohs(from.sin_port)};
      Bytes datagram(buf.begin(), buf.begin() + n);
      party.deliver(static_cast<ChannelId>(i), datagram, addr_of(key), sim_now());
    }
  }
  party.advance_to(sim_now());
}

}  // namespace rtvc
