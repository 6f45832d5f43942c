#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "rtvc/container.hpp"
#include "rtvc/harness.hpp"

using namespace rtvc;

namespace {

// Desk-scale defaults: tiny frames, seconds-long segments, so a whole
// three-party run finishes in milliseconds.
AgentConfig desk_vehicle(std::uint32_t id, TimeMs segment_ms = 5000) {
  AgentConfig cfg;
  cfg.vehicle_id = id;
  cfg.credentials = "secret-" + std::to_string(id);
  cfg.recorder.segment_duration_ms = segment_ms;
  cfg.recorder.fps = 30;
  cfg.recorder.frame_bytes = 13;
  cfg.sim.seed = 42 + id;
  cfg.sim.sample_period_ms = 200;
  cfg.video_send_period_ms = 33;
  return cfg;
}

Scenario desk_scenario(TimeMs duration, TimeMs segment_ms = 5000) {
  Scenario sc;
  sc.duration_ms = duration;
  sc.server.segment_duration_ms = segment_ms;
  sc.server.fps = 30;
  sc.server.frame_bytes = 13;
  return sc;
}

}  // namespace

TEST_CASE("login + stream request: server registry tracks the running vehicle") {
  Scenario sc = desk_scenario(60001);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.stop_at = 60000;  // exactly one simulated minute of streaming
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  const VehicleRegistryEntry* entry = run.value()->server().vehicle(7);
  REQUIRE(entry != nullptr);
  CHECK(entry->status == VehicleStatus::stopped);  // terminate received
  CHECK(entry->frames_recorded == 1800);           // 30 fps for one minute, zero loss
  CHECK(entry->chunks_dropped == 0);

  VehicleAgent& agent = run.value()->vehicle(7);
  CHECK(agent.phase() == AgentPhase::terminated);
  CHECK(agent.video_chunks_sent() == 1800);
  CHECK(agent.terminate_reports_sent() == 1);
  CHECK_FALSE(agent.accident_terminated());
}

TEST_CASE("server unreachable: local recording is unconditional") {
  Scenario sc = desk_scenario(20000);
  ChannelNetParams dead;
  dead.loss_rate = 1.0;
  sc.net.set_all(dead);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  VehicleAgent& agent = run.value()->vehicle(7);
  CHECK(agent.phase() == AgentPhase::awaiting_request);  // still retrying
  CHECK(agent.video_chunks_sent() == 0);
  CHECK(agent.recorder().segment(1).frame_count + agent.recorder().segment(2).frame_count > 0);
  const VehicleRegistryEntry* entry = run.value()->server().vehicle(7);
  REQUIRE(entry != nullptr);
  CHECK(entry->status == VehicleStatus::registered);  // nothing ever arrived
}

TEST_CASE("unregistered vehicle is rejected and stops retrying") {
  Scenario sc = desk_scenario(10000);
  ScenarioVehicle v;
  v.agent = desk_vehicle(9);
  v.registered = false;
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  CHECK(run.value()->server().vehicle(9) == nullptr);
  CHECK(run.value()->vehicle(9).video_chunks_sent() == 0);
  bool saw_reject = false;
  for (const auto& line : run.value()->trace()) {
    if (line.find("rejected") != std::string::npos) saw_reject = true;
  }
  CHECK(saw_reject);
}

TEST_CASE("duplicate start is refused") {
  Scenario sc = desk_scenario(1000);
  sc.vehicles.push_back(ScenarioVehicle{desk_vehicle(7), true, std::nullopt});
  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  auto again = run.value()->vehicle(7).start(500);
  CHECK_FALSE(again.ok());
  CHECK(again.error().code == "already-started");
}

TEST_CASE("accident flow, turnover, stop-on-accident variant") {
  Scenario sc = desk_scenario(20000);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.agent.recorder.variant = RecorderVariant::stop_on_accident;
  v.agent.sim.accident = AccidentScript{AccidentKind::turnover, 7200};
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  VehicleAgent& agent = run.value()->vehicle(7);
  CHECK(agent.phase() == AgentPhase::terminated);
  CHECK(agent.accident_terminated());
  REQUIRE(agent.sms_log().size() == 1);

  const auto& log = run.value()->server().accident_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].vehicle_id == 7);
  CHECK(log[0].kind == AccidentKind::turnover);
  CHECK(log[0].lat == agent.sms_log()[0].lat);
  CHECK(log[0].lon == agent.sms_log()[0].lon);

  // detection lands on the sample grid, during the scripted ramp
  CHECK(log[0].t > 7200);
  CHECK(log[0].t <= 8200);

  // variant 1 seals at the accident: history = detection time (t < 2T here)
  const SegmentRecorder& rec = agent.recorder();
  CHECK(rec.stopped());
  CHECK(rec.recoverable_history(log[0].t) == log[0].t);

  // the terminate report is the final control message for this vehicle
  const VehicleRegistryEntry* entry = run.value()->server().vehicle(7);
  REQUIRE(entry != nullptr);
  CHECK(entry->status == VehicleStatus::stopped);
}

TEST_CASE("accident flow, crash detection carries the airbag kind") {
  Scenario sc = desk_scenario(20000);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.agent.sim.accident = AccidentScript{AccidentKind::crash, 5000};
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  const auto& log = run.value()->server().accident_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].kind == AccidentKind::crash);
  CHECK(log[0].t == 5000);  // sample grid hits the script time exactly
}

TEST_CASE("accident with the control channel dead still seals and logs SMS locally") {
  Scenario sc = desk_scenario(20000);
  ChannelNetParams dead;
  dead.loss_rate = 1.0;
  sc.net.channel[static_cast<std::size_t>(ChannelId::control)] = dead;
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.agent.sim.accident = AccidentScript{AccidentKind::turnover, 7200};
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  VehicleAgent& agent = run.value()->vehicle(7);
  CHECK(agent.sms_log().size() == 1);
  CHECK(agent.recorder().stopped());
  CHECK(run.value()->server().accident_log().empty());
}

TEST_CASE("record-through variant streams until the sealing tick") {
  const TimeMs T = 5000;
  Scenario sc = desk_scenario(20000, T);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7, T);
  v.agent.recorder.variant = RecorderVariant::record_through_accident;
  v.agent.sim.accident = AccidentScript{AccidentKind::crash, 7200};
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  VehicleAgent& agent = run.value()->vehicle(7);
  const SegmentRecorder& rec = agent.recorder();
  CHECK(rec.stopped());
  CHECK(agent.phase() == AgentPhase::terminated);
  // detection at 7200 (crash script on the sample grid); footage runs to 10000
  CHECK(rec.segment(1).start_t == 0);
  CHECK(*rec.segment(1).end_t == T);
  CHECK(rec.segment(2).start_t == T);
  CHECK(*rec.segment(2).end_t == 2 * T);
  CHECK(rec.recoverable_history(2 * T) == 2 * T);

  // post-accident frames exist in the local segment
  auto parsed = parse_container(rec.segment_bytes(2).value());
  REQUIRE(parsed.ok());
  bool post_accident_frame = false;
  for (const auto& r : parsed.value().records) {
    if (r.type == kRecordFrame && r.t > 7200) post_accident_frame = true;
  }
  CHECK(post_accident_frame);
}

TEST_CASE("zero-loss mirroring: server segments equal vehicle segments") {
  const TimeMs T = 5000;
  Scenario sc = desk_scenario(12001, T);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7, T);
  v.stop_at = 12000;
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  auto va = parse_container(run.value()->vehicle(7).recorder().segment_bytes(1).value());
  auto vb = parse_container(run.value()->vehicle(7).recorder().segment_bytes(2).value());
  auto sa = parse_container(run.value()->server().vehicle_segment_bytes(7, 1).value());
  auto sb = parse_container(run.value()->server().vehicle_segment_bytes(7, 2).value());
  REQUIRE(va.ok());
  REQUIRE(vb.ok());
  REQUIRE(sa.ok());
  REQUIRE(sb.ok());

  auto vehicle_records = merge_container_records({va.value(), vb.value()});
  auto server_records = merge_container_records({sa.value(), sb.value()});
  DiffReport diff = diff_records(vehicle_records, server_records, TimeMs{T}, TimeMs{12000});
  CHECK(diff.empty());
}

TEST_CASE("seeded loss: every divergence is a server-side miss") {
  const TimeMs T = 5000;
  Scenario sc = desk_scenario(12001, T);
  ChannelNetParams lossy;
  lossy.loss_rate = 0.05;
  sc.net.channel[static_cast<std::size_t>(ChannelId::vehicle_video_in)] = lossy;
  sc.net.channel[static_cast<std::size_t>(ChannelId::vehicle_data_in)] = lossy;
  sc.net.seed = 77;
  ScenarioVehicle v;
  v.agent = desk_vehicle(7, T);
  v.stop_at = 12000;
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  auto va = parse_container(run.value()->vehicle(7).recorder().segment_bytes(1).value());
  auto vb = parse_container(run.value()->vehicle(7).recorder().segment_bytes(2).value());
  auto sa = parse_container(run.value()->server().vehicle_segment_bytes(7, 1).value());
  auto sb = parse_container(run.value()->server().vehicle_segment_bytes(7, 2).value());
  auto vehicle_records = merge_container_records({va.value(), vb.value()});
  auto server_records = merge_container_records({sa.value(), sb.value()});
  DiffReport diff = diff_records(vehicle_records, server_records, TimeMs{T}, TimeMs{12000});

  CHECK(diff.missing_on_b > 0);  // losses leave holes on the server side
  CHECK(diff.extra_on_b == 0);
  CHECK(diff.mismatched == 0);
}

TEST_CASE("live subscription: enabled user receives the forwarded stream") {
  Scenario sc = desk_scenario(30000);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.stop_at = 25000;
  sc.vehicles.push_back(v);
  ScenarioUser u;
  u.user.user_id = 100;
  u.user.credentials = "pw";
  u.user.vehicle_id = 7;
  u.actions = {UserAction{5000, true}, UserAction{20000, false}};
  sc.users.push_back(u);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  const UserRegistryEntry* entry = run.value()->server().user(100);
  REQUIRE(entry != nullptr);
  CHECK_FALSE(entry->enabled);  // disabled at 20000
  CHECK(entry->forwarded_video > 0);

  UserClient& client = run.value()->user(100);
  UserCounters counters = client.counters();
  CHECK(counters.video_chunks == entry->forwarded_video);
  CHECK(counters.data_lines == entry->forwarded_data);
  CHECK(counters.gaps == 0);

  // all persisted records fall inside the enabled window and are ordered
  auto parsed = parse_container(client.container_bytes().value());
  REQUIRE(parsed.ok());
  TimeMs last = 0;
  for (const auto& r : parsed.value().records) {
    CHECK(r.t >= last);
    last = r.t;
  }

  // after the disable was processed, the forward counters stay frozen
  std::uint64_t frozen = entry->forwarded_video;
  CHECK(frozen == counters.video_chunks);
}

TEST_CASE("enable on a stopped vehicle replays the last segments byte-identically") {
  const TimeMs T = 5000;
  Scenario sc = desk_scenario(30000, T);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7, T);
  v.stop_at = 12000;
  sc.vehicles.push_back(v);
  ScenarioUser u;
  u.user.user_id = 100;
  u.user.credentials = "pw";
  u.user.vehicle_id = 7;
  u.actions = {UserAction{15000, true}, UserAction{29000, false}};
  sc.users.push_back(u);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();

  auto sa = parse_container(run.value()->server().vehicle_segment_bytes(7, 1).value());
  auto sb = parse_container(run.value()->server().vehicle_segment_bytes(7, 2).value());
  auto last_records = merge_container_records({sa.value(), sb.value()});

  UserClient& client = run.value()->user(100);
  auto user_container = parse_container(client.container_bytes().value());
  REQUIRE(user_container.ok());
  DiffReport diff = diff_records(last_records, user_container.value().records);
  CHECK(diff.empty());
}

TEST_CASE("enable from an unregistered user is rejected") {
  Scenario sc = desk_scenario(10000);
  sc.vehicles.push_back(ScenarioVehicle{desk_vehicle(7), true, std::nullopt});
  ScenarioUser u;
  u.user.user_id = 100;
  u.user.vehicle_id = 7;
  u.registered = false;
  u.actions = {UserAction{2000, true}};
  sc.users.push_back(u);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  UserClient& client = run.value()->user(100);
  CHECK(client.rejected());
  CHECK(client.counters().video_chunks == 0);
}

TEST_CASE("enable-disable-enable resumes forwarding") {
  Scenario sc = desk_scenario(30000);
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  sc.vehicles.push_back(v);
  ScenarioUser u;
  u.user.user_id = 100;
  u.user.credentials = "pw";
  u.user.vehicle_id = 7;
  u.actions = {UserAction{2000, true}, UserAction{10000, false}, UserAction{20000, true}};
  sc.users.push_back(u);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  const UserRegistryEntry* entry = run.value()->server().user(100);
  REQUIRE(entry != nullptr);
  CHECK(entry->enabled);
  CHECK(entry->forwarded_video > 0);
}

TEST_CASE("proximity: crossing routes warn exactly once") {
  Scenario sc = desk_scenario(40000);
  sc.server.proximity_dcrit_m = 10.0;

  ScenarioVehicle a;
  a.agent = desk_vehicle(1);
  a.agent.sim.route = {{15.0, 44.0}};  // parked at the crossing point
  a.agent.sim.mu_speed_kmh = 0;
  a.agent.sim.sigma_speed_kmh = 0;
  a.agent.sim.sample_period_ms = 100;
  sc.vehicles.push_back(a);

  ScenarioVehicle b;
  b.agent = desk_vehicle(2);
  b.agent.sim.route = {{15.0, 43.995}, {15.0, 44.005}};  // drives through it
  b.agent.sim.mu_speed_kmh = 216.0;                      // 60 m/s
  b.agent.sim.sigma_speed_kmh = 0;
  b.agent.sim.sample_period_ms = 100;
  sc.vehicles.push_back(b);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  const auto& warnings = run.value()->server().proximity_warnings();
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].vehicle_a == 1);
  CHECK(warnings[0].vehicle_b == 2);
  CHECK(warnings[0].distance_m <= 10.0);
}

TEST_CASE("vehicles far apart never warn") {
  Scenario sc = desk_scenario(10000);
  ScenarioVehicle a;
  a.agent = desk_vehicle(1);
  a.agent.sim.route = {{15.0, 44.0}};
  sc.vehicles.push_back(a);
  ScenarioVehicle b;
  b.agent = desk_vehicle(2);
  b.agent.sim.route = {{15.01, 44.0}};  // ~1.1 km away
  sc.vehicles.push_back(b);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  CHECK(run.value()->server().proximity_warnings().empty());
}

TEST_CASE("registry persists registrations across a server restart") {
  auto dir = std::filesystem::temp_directory_path() / "rtvc_registry_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::string path = (dir / "registry.txt").string();

  {
    ServerConfig cfg;
    cfg.registry_path = path;
    auto server = ItsServer::create(cfg, nullptr, {});
    REQUIRE(server.ok());
    REQUIRE(server.value()->register_vehicle(7, "secret").ok());
    REQUIRE(server.value()->register_user(100, "pw", {7}).ok());
    auto dup = server.value()->register_vehicle(7, "other");
    CHECK_FALSE(dup.ok());
    CHECK(dup.error().code == "already-registered");
  }
  {
    ServerConfig cfg;
    cfg.registry_path = path;
    auto server = ItsServer::create(cfg, nullptr, {});
    REQUIRE(server.ok());
    const VehicleRegistryEntry* v = server.value()->vehicle(7);
    REQUIRE(v != nullptr);
    CHECK(v->status == VehicleStatus::registered);  // running state resets
    const UserRegistryEntry* u = server.value()->user(100);
    REQUIRE(u != nullptr);
    REQUIRE(u->vehicle_ids.size() == 1);
    CHECK(u->vehicle_ids[0] == 7);
    CHECK(v->owner_user_ids == std::vector<std::uint32_t>{100});
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("fault injector conserves datagrams") {
  Scenario sc = desk_scenario(15000);
  ChannelNetParams noisy;
  noisy.loss_rate = 0.1;
  noisy.duplicate_rate = 0.1;
  noisy.reorder_rate = 0.2;
  noisy.delay_min_ms = 1;
  noisy.delay_max_ms = 5;
  sc.net.set_all(noisy);
  sc.net.seed = 5;
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.stop_at = 14000;
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  SimNet& net = run.value()->net();
  CHECK(net.delivered() == net.sent() - net.dropped() + net.duplicated());
}

TEST_CASE("determinism: identical seeds give identical traces") {
  auto make = [] {
    Scenario sc = desk_scenario(15000);
    ChannelNetParams noisy;
    noisy.loss_rate = 0.05;
    noisy.duplicate_rate = 0.05;
    noisy.reorder_rate = 0.2;
    noisy.delay_min_ms = 0;
    noisy.delay_max_ms = 7;
    sc.net.set_all(noisy);
    sc.net.seed = 99;
    ScenarioVehicle v;
    v.agent = desk_vehicle(7);
    v.agent.sim.accident = AccidentScript{AccidentKind::turnover, 9000};
    sc.vehicles.push_back(v);
    ScenarioUser u;
    u.user.user_id = 100;
    u.user.credentials = "pw";
    u.user.vehicle_id = 7;
    u.actions = {UserAction{3000, true}};
    sc.users.push_back(u);
    return sc;
  };

  auto r1 = ScenarioRun::create(make());
  auto r2 = ScenarioRun::create(make());
  REQUIRE(r1.ok());
  REQUIRE(r2.ok());
  r1.value()->run();
  r2.value()->run();
  CHECK(r1.value()->trace_hash() == r2.value()->trace_hash());
  CHECK(r1.value()->trace().size() == r2.value()->trace().size());
  CHECK(r1.value()->vehicle(7).recorder().segment_bytes(1).value() ==
        r2.value()->vehicle(7).recorder().segment_bytes(1).value());
  CHECK(r1.value()->user(100).container_bytes().value() ==
        r2.value()->user(100).container_bytes().value());
}

TEST_CASE("total stream loss: server records nothing, vehicle keeps everything") {
  Scenario sc = desk_scenario(15000);
  ChannelNetParams dead;
  dead.loss_rate = 1.0;
  sc.net.channel[static_cast<std::size_t>(ChannelId::vehicle_video_in)] = dead;
  sc.net.channel[static_cast<std::size_t>(ChannelId::vehicle_data_in)] = dead;
  ScenarioVehicle v;
  v.agent = desk_vehicle(7);
  v.stop_at = 14000;
  sc.vehicles.push_back(v);

  auto run = ScenarioRun::create(sc);
  REQUIRE(run.ok());
  run.value()->run();
  const VehicleRegistryEntry* entry = run.value()->server().vehicle(7);
  REQUIRE(entry != nullptr);
  CHECK(entry->frames_recorded == 0);
  CHECK(run.value()->vehicle(7).recorder().segment(1).frame_count +
            run.value()->vehicle(7).recorder().segment(2).frame_count >
        0);
}
