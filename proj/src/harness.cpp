#include "rtvc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace rtvc {

Result<std::unique_ptr<ScenarioRun>> ScenarioRun::create(const Scenario& sc) {
  if (sc.duration_ms == 0) return make_error("bad-config", "duration must be positive");
  auto run = std::unique_ptr<ScenarioRun>(new ScenarioRun());
  run->sc_ = sc;
  auto& trace = run->trace_;
  TraceFn sink = [&trace](const std::string& line) { trace.push_back(line); };

  run->net_ = std::make_unique<SimNet>(sc.net, sink);
  SimNet& net = *run->net_;

  ServerConfig server_cfg = sc.server;
  if (!sc.out_dir.empty()) {
    if (server_cfg.store_dir.empty()) server_cfg.store_dir = sc.out_dir + "/server";
    if (server_cfg.registry_path.empty()) {
      server_cfg.registry_path = sc.out_dir + "/server/registry.txt";
    }
  }
  Addr server_addr = net.reserve_party("server");
  auto server = ItsServer::create(server_cfg, net.handle_for(server_addr), sink);
  if (!server.ok()) return server.error();
  run->server_ = server.take();
  net.attach(server_addr, run->server_.get());

  for (const ScenarioVehicle& v : sc.vehicles) {
    AgentConfig cfg = v.agent;
    cfg.server = server_addr;
    if (!sc.out_dir.empty() && cfg.out_dir.empty()) {
      cfg.out_dir = sc.out_dir + "/vehicle_" + std::to_string(cfg.vehicle_id);
    }
    Addr addr = net.reserve_party("vehicle:" + std::to_string(cfg.vehicle_id));
    auto agent = VehicleAgent::create(cfg, net.handle_for(addr), sink);
    if (!agent.ok()) return agent.error();
    net.attach(addr, agent.value().get());
    run->vehicles_.push_back(agent.take());
    if (v.registered) {
      if (auto r = run->server_->register_vehicle(cfg.vehicle_id, cfg.credentials); !r.ok()) {
        return r.error();
      }
    }
    if (v.stop_at) {
      run->stops_.emplace_back(*v.stop_at, run->vehicles_.size() - 1);
    }
  }
  run->stop_done_.assign(run->vehicles_.size(), false);

  for (const ScenarioUser& u : sc.users) {
    UserConfig cfg = u.user;
    cfg.server = server_addr;
    if (!sc.out_dir.empty() && cfg.out_dir.empty()) {
      cfg.out_dir = sc.out_dir + "/user_" + std::to_string(cfg.user_id);
    }
    Addr addr = net.reserve_party("user:" + std::to_string(cfg.user_id));
    auto client = UserClient::create(cfg, net.handle_for(addr), sink);
    if (!client.ok()) return client.error();
    net.attach(addr, client.value().get());
    run->users_.push_back(client.take());
    if (u.registered) {
      if (auto r = run->server_->register_user(cfg.user_id, cfg.credentials,
                                               {cfg.vehicle_id});
          !r.ok()) {
        return r.error();
      }
    }
    for (const UserAction& a : u.actions) {
      run->actions_.push_back(TimedAction{a.at, run->users_.size() - 1, a.enable});
    }
  }
  std::stable_sort(run->actions_.begin(), run->actions_.end(),
                   [](const TimedAction& a, const TimedAction& b) { return a.at < b.at; });
  std::stable_sort(run->stops_.begin(), run->stops_.end());
  return run;
}

VehicleAgent& ScenarioRun::vehicle(std::uint32_t vehicle_id) {
  for (auto& v : vehicles_) {
    if (v->config().vehicle_id == vehicle_id) return *v;
  }
  throw std::out_of_range("no such vehicle in scenario");
}

UserClient& ScenarioRun::user(std::uint32_t user_id) {
  for (auto& u : users_) {
    if (u->config().user_id == user_id) return *u;
  }
  throw std::out_of_range("no such user in scenario");
}

void ScenarioRun::run_actions_at(TimeMs t) {
  while (actions_done_ < actions_.size() && actions_[actions_done_].at <= t) {
    const TimedAction& a = actions_[actions_done_];
    UserClient& u = *users_[a.user_index];
    if (a.enable) {
      (void)u.enable(a.at);
    } else {
      u.disable(a.at);
    }
    ++actions_done_;
  }
  for (std::size_t i = 0; i < stops_.size(); ++i) {
    auto [at, idx] = stops_[i];
    if (at <= t && !stop_done_[idx]) {
      vehicles_[idx]->stop(at);
      stop_done_[idx] = true;
    }
  }
}

void ScenarioRun::settle(TimeMs t) {
  // Drain same-time cascades: a delivery can trigger sends due at the
  // same logical instant.
  for (int guard = 0; guard < 64; ++guard) {
    run_actions_at(t);
    net_->deliver_due(t);
    server_->advance_to(t);
    for (auto& v : vehicles_) v->advance_to(t);
    for (auto& u : users_) u->advance_to(t);
    auto nd = net_->next_delivery_at();
    if (!nd || *nd > t) break;
  }
}

std::optional<TimeMs> ScenarioRun::next_event_after(TimeMs t) const {
  std::optional<TimeMs> next;
  auto consider = [&next, t](std::optional<TimeMs> c) {
    if (c && *c > t && (!next || *c < *next)) next = c;
  };
  consider(net_->next_delivery_at());
  consider(server_->next_wakeup());
  for (const auto& v : vehicles_) consider(v->next_wakeup());
  for (const auto& u : users_) consider(u->next_wakeup());
  if (actions_done_ < actions_.size()) consider(actions_[actions_done_].at);
  for (std::size_t i = 0; i < stops_.size(); ++i) {
    if (!stop_done_[stops_[i].second]) consider(stops_[i].first);
  }
  return next;
}

void ScenarioRun::run() {
  TimeMs t = 0;
  for (auto& v : vehicles_) {
    if (v->config().start_at == 0) (void)v->start(0);
  }
  settle(0);
  while (true) {
    // Delayed vehicle starts behave like scheduled events.
    for (auto& v : vehicles_) {
      if (!v->started() && v->config().start_at <= t) (void)v->start(v->config().start_at);
    }
    std::optional<TimeMs> next = next_event_after(t);
    for (const auto& v : vehicles_) {
      if (!v->started() && v->config().start_at > t &&
          (!next || v->config().start_at < *next)) {
        next = v->config().start_at;
      }
    }
    if (!next || *next >= sc_.duration_ms) break;
    t = *next;
    settle(t);
  }
  settle(sc_.duration_ms);
}

std::uint64_t ScenarioRun::trace_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& line : trace_) {
    h = fnv1a64(line, h);
    h = fnv1a64(std::string("\n"), h);
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace {
const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::full_time: return "full_time";
    case Scheme::dual_segment: return "dual_segment";
    case Scheme::vdvrs_reference: return "vdvrs_reference";
  }
  return "?";
}
}  // namespace

std::string StorageReport::to_csv() const {
  std::string out = "scheme,duration_min,T_min,max_bytes,min_bytes,final_bytes,payload_bytes\n";
  for (const StorageReportRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,%llu,%llu,%llu,%llu\n",
                  scheme_name(r.scheme), r.duration_min, r.segment_min,
                  static_cast<unsigned long long>(r.max_bytes),
                  static_cast<unsigned long long>(r.min_bytes),
                  static_cast<unsigned long long>(r.final_bytes),
                  static_cast<unsigned long long>(r.payload_bytes));
    out += buf;
  }
  return out;
}

Result<StorageReport> storage_report(const std::vector<Scheme>& schemes,
                                     const std::vector<double>& durations_min,
                                     const std::vector<double>& segment_minutes,
                                     std::uint64_t rate_bytes_per_min) {
  if (rate_bytes_per_min == 0 || rate_bytes_per_min % 1800 != 0) {
    return make_error("bad-rate", "rate must be a positive multiple of 1800 (30 fps)");
  }
  const std::uint32_t fps = 30;
  const std::size_t frame_bytes = rate_bytes_per_min / 1800;

  StorageReport report;
  report.rate_bytes_per_min = rate_bytes_per_min;

  for (Scheme scheme : schemes) {
    for (double duration_min : durations_min) {
      const auto duration_ms = static_cast<TimeMs>(duration_min * 60000.0);
      const std::uint64_t frames_total = (duration_ms * fps) / 1000;

      if (scheme == Scheme::vdvrs_reference) {
        std::uint64_t bytes =
            static_cast<std::uint64_t>(duration_min * static_cast<double>(kVdvrsBytesPerMin));
        report.rows.push_back(StorageReportRow{scheme, duration_min, 0, bytes, bytes, bytes,
                                               bytes});
        continue;
      }

      if (scheme == Scheme::full_time) {
        FullTimeRecorder rec(0, std::make_unique<MemorySegmentStorage>(), std::nullopt, 0);
        SensorSimulator sim(SimConfig{});
        for (std::uint64_t i = 0; i < frames_total; ++i) {
          (void)rec.append_frame(sim.make_frame(frame_bytes, fps));
        }
        report.rows.push_back(StorageReportRow{scheme, duration_min, 0, rec.storage_used(),
                                               rec.storage_used(), rec.storage_used(),
                                               rec.payload_bytes()});
        continue;
      }

      for (double seg_min : segment_minutes) {
        RecorderConfig rc;
        rc.segment_duration_ms = static_cast<TimeMs>(seg_min * 60000.0);
        rc.variant = RecorderVariant::stop_on_accident;
        rc.fps = fps;
        rc.frame_bytes = frame_bytes;
        auto rec = SegmentRecorder::create_in_memory(rc, 0);
        if (!rec.ok()) return rec.error();
        SegmentRecorder& r = rec.value();
        SensorSimulator sim(SimConfig{});

        std::uint64_t max_bytes = r.storage_used();
        std::uint64_t min_after_warmup = ~std::uint64_t{0};
        bool warmed = false;
        for (std::uint64_t i = 0; i < frames_total; ++i) {
          FrameChunk f = sim.make_frame(frame_bytes, fps);
          while (r.timer_enabled() && r.next_tick_at() <= f.t) {
            r.on_tick(f.t);
            warmed = true;
            min_after_warmup = std::min(min_after_warmup, r.storage_used());
          }
          (void)r.append_frame(f);
          max_bytes = std::max(max_bytes, r.storage_used());
        }
        if (!warmed) min_after_warmup = r.storage_used();
        report.rows.push_back(StorageReportRow{scheme, duration_min, seg_min, max_bytes,
                                               min_after_warmup, r.storage_used(),
                                               r.payload_bytes()});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string DiffReport::to_string() const {
  return "missing_on_b=" + std::to_string(missing_on_b) +
         " extra_on_b=" + std::to_string(extra_on_b) +
         " mismatched=" + std::to_string(mismatched);
}

std::vector<ContainerRecord> merge_container_records(
    const std::vector<ParsedContainer>& containers) {
  std::vector<ContainerRecord> out;
  for (const ParsedContainer& c : containers) {
    out.insert(out.end(), c.records.begin(), c.records.end());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ContainerRecord& a, const ContainerRecord& b) { return a.t < b.t; });
  return out;
}

DiffReport diff_records(const std::vector<ContainerRecord>& a,
                        const std::vector<ContainerRecord>& b,
                        std::optional<TimeMs> from, std::optional<TimeMs> to) {
  auto in_window = [&](const ContainerRecord& r) {
    if (from && r.t < *from) return false;
    if (to && r.t >= *to) return false;
    return true;
  };
  // (type, t) identifies a record within one stream; duplicates are
  // matched pairwise in order.
  using Key = std::pair<std::uint8_t, TimeMs>;
  std::map<Key, std::vector<const Bytes*>> map_a, map_b;
  for (const ContainerRecord& r : a) {
    if (in_window(r)) map_a[{r.type, r.t}].push_back(&r.payload);
  }
  for (const ContainerRecord& r : b) {
    if (in_window(r)) map_b[{r.type, r.t}].push_back(&r.payload);
  }

  DiffReport report;
  for (const auto& [key, pa] : map_a) {
    auto it = map_b.find(key);
    std::size_t nb = it == map_b.end() ? 0 : it->second.size();
    std::size_t common = std::min(pa.size(), nb);
    for (std::size_t i = 0; i < common; ++i) {
      if (*pa[i] != *it->second[i]) {
        report.entries.push_back(DiffEntry{DiffKind::mismatched, key.first, key.second});
        ++report.mismatched;
      }
    }
    for (std::size_t i = common; i < pa.size(); ++i) {
      report.entries.push_back(DiffEntry{DiffKind::missing_on_b, key.first, key.second});
      ++report.missing_on_b;
    }
  }
  for (const auto& [key, pb] : map_b) {
    auto it = map_a.find(key);
    std::size_t na = it == map_a.end() ? 0 : it->second.size();
    for (std::size_t i = na; i < pb.size(); ++i) {
      report.entries.push_back(DiffEntry{DiffKind::extra_on_b, key.first, key.second});
      ++report.extra_on_b;
    }
  }
  return report;
}

Result<DiffReport> container_diff(std::span<const std::uint8_t> a,
                                  std::span<const std::uint8_t> b,
                                  std::optional<TimeMs> from, std::optional<TimeMs> to) {
  auto pa = parse_container(a);
  if (!pa.ok()) return make_error(pa.error().code, "container a: " + pa.error().detail);
  auto pb = parse_container(b);
  if (!pb.ok()) return make_error(pb.error().code, "container b: " + pb.error().detail);
  return diff_records(pa.value().records, pb.value().records, from, to);
}

Result<DiffReport> container_diff_files(const std::string& a, const std::string& b,
                                        std::optional<TimeMs> from,
                                        std::optional<TimeMs> to) {
  auto pa = read_container_file(a);
  if (!pa.ok()) return make_error(pa.error().code, a + ": " + pa.error().detail);
  auto pb = read_container_file(b);
  if (!pb.ok()) return make_error(pb.error().code, b + ": " + pb.error().detail);
  return diff_records(pa.value().records, pb.value().records, from, to);
}

}  // namespace rtvc
