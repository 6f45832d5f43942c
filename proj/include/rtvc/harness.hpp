#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtvc/container.hpp"
#include "rtvc/its_server.hpp"
#include "rtvc/netsim.hpp"
#include "rtvc/user_client.hpp"
#include "rtvc/vehicle_agent.hpp"

namespace rtvc {

// A user action in a scenario script.
struct UserAction {
  TimeMs at = 0;
  bool enable = true;  // false = disable
};

struct ScenarioVehicle {
  AgentConfig agent;
  bool registered = true;
  std::optional<TimeMs> stop_at;  // normal stop (clean shutdown) if set
};

struct ScenarioUser {
  UserConfig user;
  bool registered = true;
  std::vector<UserAction> actions;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<ScenarioVehicle> vehicles;
  std::vector<ScenarioUser> users;
  ServerConfig server;
  NetConfig net;
  TimeMs duration_ms = 60000;
  std::string out_dir;  // empty = everything in memory
};

// Owns all three parties plus the simulated network and drives them on a
// shared logical clock. Fully deterministic: (scenario, seed) fixes the
// trace, the trace hash and every produced file.
class ScenarioRun {
 public:
  static Result<std::unique_ptr<ScenarioRun>> create(const Scenario& sc);

  void run();  // to sc.duration_ms

  const std::vector<std::string>& trace() const { return trace_; }
  std::uint64_t trace_hash() const;

  ItsServer& server() { return *server_; }
  VehicleAgent& vehicle(std::uint32_t vehicle_id);
  UserClient& user(std::uint32_t user_id);
  SimNet& net() { return *net_; }

 private:
  ScenarioRun() = default;

  struct TimedAction {
    TimeMs at;
    std::size_t user_index;
    bool enable;
  };

  void settle(TimeMs t);
  std::optional<TimeMs> next_event_after(TimeMs t) const;
  void run_actions_at(TimeMs t);

  Scenario sc_;
  std::vector<std::string> trace_;
  std::unique_ptr<SimNet> net_;
  std::unique_ptr<ItsServer> server_;
  std::vector<std::unique_ptr<VehicleAgent>> vehicles_;
  std::vector<std::unique_ptr<UserClient>> users_;
  std::vector<TimedAction> actions_;
  std::vector<std::pair<TimeMs, std::size_t>> stops_;
  std::size_t actions_done_ = 0;
  std::vector<bool> stop_done_;
};

// ---------------------------------------------------------------------------
// Storage report (scheme comparison)

enum class Scheme : std::uint8_t { full_time, dual_segment, vdvrs_reference };

struct StorageReportRow {
  Scheme scheme;
  double duration_min = 0;
  double segment_min = 0;  // T; 0 for schemes without a timer
  std::uint64_t max_bytes = 0;
  std::uint64_t min_bytes = 0;
  std::uint64_t final_bytes = 0;
  std::uint64_t payload_bytes = 0;
};

struct StorageReport {
  std::uint64_t rate_bytes_per_min = 0;
  std::vector<StorageReportRow> rows;
  std::string to_csv() const;
};

// Runs the recorders on synthetic frame input at `rate` bytes/min (30 fps;
// rate must be an exact multiple of 1800 so per-frame sizes stay integral).
// vdvrs_reference rows are the analytic 1.87 GB/min line, not simulated.
Result<StorageReport> storage_report(const std::vector<Scheme>& schemes,
                                     const std::vector<double>& durations_min,
                                     const std::vector<double>& segment_minutes,
                                     std::uint64_t rate_bytes_per_min);

constexpr std::uint64_t kVdvrsBytesPerMin = 1870000000ull;  // 1.87 GB/min reference
constexpr std::uint64_t kPaperRateBytesPerMin = 22899600ull;  // 22.9 MB/min at 30 fps

// ---------------------------------------------------------------------------
// Container diff

enum class DiffKind : std::uint8_t { missing_on_b, extra_on_b, mismatched };

struct DiffEntry {
  DiffKind kind;
  std::uint8_t type;
  TimeMs t;
};

struct DiffReport {
  std::vector<DiffEntry> entries;
  std::uint64_t missing_on_b = 0;
  std::uint64_t extra_on_b = 0;
  std::uint64_t mismatched = 0;
  bool empty() const { return entries.empty(); }
  std::string to_string() const;
};

// Compares record sequences restricted to [from, to). Records are keyed
// by (type, timestamp); both sides may span multiple container files.
DiffReport diff_records(const std::vector<ContainerRecord>& a,
                        const std::vector<ContainerRecord>& b,
                        std::optional<TimeMs> from = std::nullopt,
                        std::optional<TimeMs> to = std::nullopt);

Result<DiffReport> container_diff(std::span<const std::uint8_t> a,
                                  std::span<const std::uint8_t> b,
                                  std::optional<TimeMs> from = std::nullopt,
                                  std::optional<TimeMs> to = std::nullopt);

Result<DiffReport> container_diff_files(const std::string& a, const std::string& b,
                                        std::optional<TimeMs> from = std::nullopt,
                                        std::optional<TimeMs> to = std::nullopt);

// All records of several containers merged in (t, input order).
std::vector<ContainerRecord> merge_container_records(
    const std::vector<ParsedContainer>& containers);

}  // namespace rtvc
