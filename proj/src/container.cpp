#include "rtvc/container.hpp"

#include <fstream>

namespace rtvc {

namespace {
constexpr std::uint8_t kMagic[4] = {'I', 'V', 'S', 'G'};
}

Bytes encode_container_header(const ContainerHeader& h) {
  Bytes out;
  out.reserve(kContainerHeaderSize);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, kContainerVersion);
  put_u32be(out, h.vehicle_id);
  put_u64be(out, h.start_t);
  return out;
}

Bytes encode_record(std::uint8_t type, TimeMs t, std::span<const std::uint8_t> payload) {
  Bytes out;
  out.reserve(kRecordOverhead + payload.size());
  put_u8(out, type);
  put_u64be(out, t);
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Result<ParsedContainer> parse_container(std::span<const std::uint8_t> data) {
  if (data.size() < kContainerHeaderSize) {
    return make_error("truncated", "header needs 17 bytes, offset 0");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (data[i] != kMagic[i]) {
      return make_error("bad-magic", "offset " + std::to_string(i));
    }
  }
  if (data[4] != kContainerVersion) {
    return make_error("bad-version", "offset 4");
  }

  ParsedContainer pc;
  pc.header.vehicle_id = get_u32be(data, 5);
  pc.header.start_t = get_u64be(data, 9);

  std::size_t off = kContainerHeaderSize;
  while (off < data.size()) {
    if (data.size() - off < kRecordOverhead) {
      return make_error("truncated", "record header at offset " + std::to_string(off));
    }
    ContainerRecord rec;
    rec.type = get_u8(data, off);
    if (rec.type != kRecordFrame && rec.type != kRecordTelemetry) {
      return make_error("unknown-type", "offset " + std::to_string(off));
    }
    rec.t = get_u64be(data, off + 1);
    std::uint32_t len = get_u32be(data, off + 9);
    if (data.size() - off - kRecordOverhead < len) {
      return make_error("truncated", "record payload at offset " + std::to_string(off));
    }
    auto begin = data.begin() + static_cast<std::ptrdiff_t>(off + kRecordOverhead);
    rec.payload.assign(begin, begin + len);
    pc.records.push_back(std::move(rec));
    off += kRecordOverhead + len;
  }
  return pc;
}

Result<ParsedContainer> read_container_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return make_error("io-error", "cannot open " + path);
  }
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(data);
}

}  // namespace rtvc
