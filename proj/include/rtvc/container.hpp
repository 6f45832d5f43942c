#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtvc/bytes.hpp"
#include "rtvc/result.hpp"

namespace rtvc {

// Segment container layout (bit-exact):
//   header  = magic "IVSG" | version u8=1 | vehicle_id u32 BE | start_t u64 BE
//   record  = type u8 (0x01 frame, 0x02 telemetry) | t u64 BE
//           | payload_len u32 BE | payload
// Header is 17 bytes, per-record overhead 13 bytes.

constexpr std::size_t kContainerHeaderSize = 17;
constexpr std::size_t kRecordOverhead = 13;
constexpr std::uint8_t kContainerVersion = 1;
constexpr std::uint8_t kRecordFrame = 0x01;
constexpr std::uint8_t kRecordTelemetry = 0x02;

struct ContainerHeader {
  std::uint32_t vehicle_id = 0;
  TimeMs start_t = 0;
};

struct ContainerRecord {
  std::uint8_t type = 0;
  TimeMs t = 0;
  Bytes payload;
};

struct ParsedContainer {
  ContainerHeader header;
  std::vector<ContainerRecord> records;
};

Bytes encode_container_header(const ContainerHeader& h);
Bytes encode_record(std::uint8_t type, TimeMs t, std::span<const std::uint8_t> payload);

// Parses a whole container. Errors carry the byte offset of the fault in
// the detail field.
Result<ParsedContainer> parse_container(std::span<const std::uint8_t> data);
Result<ParsedContainer> read_container_file(const std::string& path);

}  // namespace rtvc
