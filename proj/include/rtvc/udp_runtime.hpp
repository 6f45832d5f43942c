#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "rtvc/netsim.hpp"
#include "rtvc/protocol.hpp"

namespace rtvc {

// Real-socket counterpart of the in-process net. One instance drives one
// party: it owns up to five UDP sockets (the server binds all of them,
// clients bind one ephemeral socket per channel), maps peer socket
// addresses onto the Addr handles the cores already use, and converts
// wall-clock time to the logical clock through time_scale.
struct UdpPorts {
  std::uint16_t control = 7000;
  std::uint16_t vehicle_video = 7001;
  std::uint16_t vehicle_data = 7002;
  std::uint16_t user_video = 7003;
  std::uint16_t user_data = 7004;

  std::uint16_t port(ChannelId ch) const {
    switch (ch) {
      case ChannelId::control: return control;
      case ChannelId::vehicle_video_in: return vehicle_video;
      case ChannelId::vehicle_data_in: return vehicle_data;
      case ChannelId::user_video_out: return user_video;
      case ChannelId::user_data_out: return user_data;
    }
    return control;
  }
};

class UdpRuntime : public NetworkHandle {
 public:
  // Server mode: bind all five channel ports on 0.0.0.0.
  static Result<std::unique_ptr<UdpRuntime>> bind_server(const UdpPorts& ports,
                                                         double time_scale);
  // Client mode: one unbound socket per channel, peer = server address.
  static Result<std::unique_ptr<UdpRuntime>> connect_client(const std::string& server_host,
                                                            const UdpPorts& ports,
                                                            double time_scale);
  ~UdpRuntime() override;

  // NetworkHandle; `to` is ignored for clients (everything goes to the
  // server) and must be a previously learned peer for the server.
  void send(ChannelId ch, Addr to, Bytes datagram, TimeMs now) override;

  // Polls sockets and feeds the party until `until_sim_ms` of logical
  // time has elapsed (or forever when nullopt and stop() is never hit).
  void run(SimParty& party, std::optional<TimeMs> until_sim_ms);
  void request_stop() { stop_ = true; }

  TimeMs sim_now() const;

 private:
  UdpRuntime() = default;

  struct PeerKey {
    std::uint32_t ip;
    std::uint16_t port;
    bool operator<(const PeerKey& o) const {
      return ip != o.ip ? ip < o.ip : port < o.port;
    }
  };

  Addr addr_of(const PeerKey& key);

  int sockets_[kChannelCount] = {-1, -1, -1, -1, -1};
  bool server_mode_ = false;
  std::uint32_t server_ip_ = 0;
  UdpPorts ports_{};
  double time_scale_ = 1.0;
  std::int64_t epoch_us_ = 0;
  bool stop_ = false;

  std::map<PeerKey, Addr> peer_addrs_;
  std::vector<PeerKey> peers_;
};

}  // namespace rtvc
