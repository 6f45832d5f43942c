#include "rtvc/netsim.hpp"

#include <memory>

namespace rtvc {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class BoundHandle : public NetworkHandle {
 public:
  BoundHandle(SimNet* net, Addr self) : net_(net), self_(self) {}
  void send(ChannelId ch, Addr to, Bytes datagram, TimeMs now) override;

 private:
  SimNet* net_;
  Addr self_;
};

}  // namespace

SimNet::SimNet(NetConfig cfg, TraceFn trace)
    : cfg_(cfg), trace_(std::move(trace)), rng_(cfg.seed) {}

Addr SimNet::reserve_party(std::string name) {
  parties_.push_back(nullptr);
  names_.push_back(std::move(name));
  Addr addr = static_cast<Addr>(parties_.size() - 1);
  handles_.push_back(std::make_unique<BoundHandle>(this, addr));
  return addr;
}

void SimNet::attach(Addr addr, SimParty* party) { parties_[addr] = party; }

Addr SimNet::add_party(SimParty* party, std::string name) {
  Addr addr = reserve_party(std::move(name));
  attach(addr, party);
  return addr;
}

NetworkHandle* SimNet::handle_for(Addr self) { return handles_[self].get(); }

void BoundHandle::send(ChannelId ch, Addr to, Bytes datagram, TimeMs now) {
  net_->send_from(self_, ch, to, std::move(datagram), now);
}

TimeMs SimNet::draw_delay(const ChannelNetParams& p, bool reordered) {
  TimeMs d = p.delay_min_ms;
  if (p.delay_max_ms > p.delay_min_ms) {
    TimeMs span = p.delay_max_ms - p.delay_min_ms;
    d += static_cast<TimeMs>(rng_() % (span + 1));
  }
  if (reordered && p.reorder_extra_ms > 0) {
    d += 1 + static_cast<TimeMs>(rng_() % p.reorder_extra_ms);
  }
  return d;
}

void SimNet::send_from(Addr from, ChannelId ch, Addr to, Bytes bytes, TimeMs now) {
  ++sent_;
  const ChannelNetParams& p = cfg_.params(ch);
  if (trace_) {
    trace_("t=" + std::to_string(now) + " send ch=" + channel_name(ch) + " " +
           names_[from] + "->" + names_[to] + " len=" + std::to_string(bytes.size()));
  }
  if (uniform01(rng_) < p.loss_rate) {
    ++dropped_;
    if (trace_) trace_("t=" + std::to_string(now) + " drop ch=" + std::string(channel_name(ch)));
    return;
  }
  bool duplicate = uniform01(rng_) < p.duplicate_rate;
  bool reordered = uniform01(rng_) < p.reorder_rate;
  queue_.push(Pending{now + draw_delay(p, reordered), order_++, ch, from, to, bytes});
  if (duplicate) {
    ++duplicated_;
    queue_.push(Pending{now + draw_delay(p, false), order_++, ch, from, to, std::move(bytes)});
  }
}

void SimNet::deliver_due(TimeMs now) {
  while (!queue_.empty() && queue_.top().at <= now) {
    Pending d = queue_.top();
    queue_.pop();
    ++delivered_;
    if (trace_) {
      trace_("t=" + std::to_string(d.at) + " deliver ch=" + channel_name(d.ch) + " " +
             names_[d.from] + "->" + names_[d.to] + " len=" + std::to_string(d.bytes.size()));
    }
    // Deliveries use the party clock `now`, not the queued time, so a
    // datagram due earlier than the current step is seen "late".
    if (parties_[d.to] != nullptr) {
      parties_[d.to]->deliver(d.ch, d.bytes, d.from, now);
    }
  }
}

std::optional<TimeMs> SimNet::next_delivery_at() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().at;
}

}  // namespace rtvc
