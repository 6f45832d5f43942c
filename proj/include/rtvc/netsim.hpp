#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "rtvc/bytes.hpp"
#include "rtvc/protocol.hpp"

namespace rtvc {

// Party handle. The in-process net maps it to a registered party; the UDP
// runtime maps it to a socket address.
using Addr = std::uint32_t;

using TraceFn = std::function<void(const std::string& line)>;

// Outbound side handed to an agent; bound to the sending party.
class NetworkHandle {
 public:
  virtual ~NetworkHandle() = default;
  virtual void send(ChannelId ch, Addr to, Bytes datagram, TimeMs now) = 0;
};

// Inbound side plus the logical-clock hooks the scenario runner drives.
class SimParty {
 public:
  virtual ~SimParty() = default;
  virtual void deliver(ChannelId ch, const Bytes& datagram, Addr from, TimeMs now) = 0;
  virtual void advance_to(TimeMs now) = 0;
  virtual std::optional<TimeMs> next_wakeup() const = 0;
};

struct ChannelNetParams {
  double loss_rate = 0.0;
  double duplicate_rate = 0.0;
  double reorder_rate = 0.0;
  TimeMs delay_min_ms = 0;
  TimeMs delay_max_ms = 0;       // uniform in [min, max]; equal = fixed
  TimeMs reorder_extra_ms = 50;  // extra delay drawn for a reordered copy
};

struct NetConfig {
  std::array<ChannelNetParams, kChannelCount> channel{};
  std::uint64_t seed = 1;

  void set_all(const ChannelNetParams& p) { channel.fill(p); }
  const ChannelNetParams& params(ChannelId ch) const {
    return channel[static_cast<std::size_t>(ch)];
  }
};

// Deterministic in-process transport. Every datagram is delivered exactly
// once, dropped, or duplicated according to fates drawn from the seeded
// generator; nothing is created out of thin air. Delivery order is
// (deliver_at, send order), so equal-time cascades stay stable.
class SimNet {
 public:
  SimNet(NetConfig cfg, TraceFn trace);

  // Two-phase registration: reserve an address (its send handle works
  // immediately), then attach the party once constructed.
  Addr reserve_party(std::string name);
  void attach(Addr addr, SimParty* party);
  Addr add_party(SimParty* party, std::string name);
  NetworkHandle* handle_for(Addr self);

  void deliver_due(TimeMs now);
  std::optional<TimeMs> next_delivery_at() const;

  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t duplicated() const { return duplicated_; }

  // Used by the bound per-party handles.
  void send_from(Addr from, ChannelId ch, Addr to, Bytes bytes, TimeMs now);

 private:
  struct Pending {
    TimeMs at;
    std::uint64_t order;
    ChannelId ch;
    Addr from;
    Addr to;
    Bytes bytes;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.at != b.at ? a.at > b.at : a.order > b.order;
    }
  };

  TimeMs draw_delay(const ChannelNetParams& p, bool reordered);

  NetConfig cfg_;
  TraceFn trace_;
  std::mt19937_64 rng_;
  std::vector<SimParty*> parties_;
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<NetworkHandle>> handles_;
  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  std::uint64_t order_ = 0;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t duplicated_ = 0;
};

}  // namespace rtvc
