#include "evpose/events.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "evpose/error.hpp"

namespace evpose {

namespace {

static_assert(std::endian::native == std::endian::little, "event format assumes a little-endian host");

template <typename T>
std::uint8_t* put(std::uint8_t* out, T value) {
  std::memcpy(out, &value, sizeof(T));
  return out + sizeof(T);
}

template <typename T>
T get(const std::uint8_t* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

}  // namespace

EventFrame::EventFrame(int channels, int height, int width, std::uint64_t t_start, std::uint64_t t_end)
    : channels_(channels),
      height_(height),
      width_(width),
      t_start_(t_start),
      t_end_(t_end),
      data_(static_cast<std::size_t>(channels) * height * width, 0.0) {}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> EventFrame::channel(int c) {
  return {data_.data() + static_cast<std::size_t>(c) * height_ * width_, height_, width_};
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> EventFrame::channel(
    int c) const {
  return {data_.data() + static_cast<std::size_t>(c) * height_ * width_, height_, width_};
}

double EventFrame::sum() const {
  double total = 0.0;
  for (double v : data_) total += v;
  return total;
}

EventStream parse_event_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEvtHeaderSize || std::memcmp(bytes.data(), "EVT0", 4) != 0)
    throw Error(Errc::BadMagic, "missing EVT0 header");
  const auto version = get<std::uint32_t>(bytes.data() + 4);
  if (version != kEvtVersion) throw Error(Errc::BadMagic, "unsupported version " + std::to_string(version));

  EventStream stream;
  stream.width = get<std::uint32_t>(bytes.data() + 8);
  stream.height = get<std::uint32_t>(bytes.data() + 12);

  const std::size_t payload = bytes.size() - kEvtHeaderSize;
  if (payload % kEvtRecordSize != 0)
    throw Error(Errc::TruncatedRecord, "payload of " + std::to_string(payload) + " bytes is not record-aligned");

  const std::size_t count = payload / kEvtRecordSize;
  stream.events.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* rec = bytes.data() + kEvtHeaderSize + i * kEvtRecordSize;
    Event e;
    e.x = get<std::uint16_t>(rec);
    e.y = get<std::uint16_t>(rec + 2);
    e.p = get<std::int16_t>(rec + 6);
    e.t = get<std::uint64_t>(rec + 8);
    if (e.p != 1 && e.p != -1)
      throw Error(Errc::PolarityOutOfRange, "record " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    if (e.x >= stream.width || e.y >= stream.height)
      throw Error(Errc::EventOutOfRaster, "record " + std::to_string(i) + " outside the sensor raster");
    stream.events.push_back(e);
  }
  return stream;
}

std::vector<std::uint8_t> write_event_stream(std::span<const Event> events, std::uint32_t width,
                                             std::uint32_t height) {
  std::vector<std::uint8_t> out(kEvtHeaderSize + events.size() * kEvtRecordSize);
  std::uint8_t* p = out.data();
  std::memcpy(p, "EVT0", 4);
  p = put<std::uint32_t>(p + 4, kEvtVersion);
  p = put<std::uint32_t>(p, width);
  p = put<std::uint32_t>(p, height);
  for (const Event& e : events) {
    p = put<std::uint16_t>(p, e.x);
    p = put<std::uint16_t>(p, e.y);
    p = put<std::uint16_t>(p, 0);
    p = put<std::int16_t>(p, e.p);
    p = put<std::uint64_t>(p, e.t);
  }
  return out;
}

EventStream read_event_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return parse_event_stream(bytes);
}

void write_event_file(const std::filesystem::path& path, std::span<const Event> events, std::uint32_t width,
                      std::uint32_t height) {
  const auto bytes = write_event_stream(events, width, height);
  write_bytes(path, bytes.data(), bytes.size());
}

std::vector<EventPacket> packetize(std::span<const Event> events, std::span<const std::uint64_t> boundaries) {
  if (boundaries.size() < 2) throw Error(Errc::EmptyBoundaries, "need at least two boundaries");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw Error(Errc::UnsortedInput, "boundaries must be strictly increasing");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].t < events[i - 1].t) throw Error(Errc::UnsortedInput, "events must be sorted by timestamp");

  std::vector<EventPacket> packets(boundaries.size() - 1);
  auto by_time = [](const Event& e, std::uint64_t t) { return e.t < t; };
  auto cursor = std::lower_bound(events.begin(), events.end(), boundaries.front(), by_time);
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    EventPacket& packet = packets[i];
    packet.t_start = boundaries[i];
    packet.t_end = boundaries[i + 1];
    auto end = std::lower_bound(cursor, events.end(), packet.t_end, by_time);
    packet.events.assign(cursor, end);
    cursor = end;
  }
  return packets;
}

EventFrame aggregate_frame(const EventPacket& packet, int channels, int height, int width, AggregationMode mode) {
  if (channels < 1) throw Error(Errc::DimensionMismatch, "channel count must be >= 1");
  if (packet.t_end <= packet.t_start) throw Error(Errc::ZeroDuration, "packet interval has no duration");

  EventFrame frame(channels, height, width, packet.t_start, packet.t_end);
  const std::uint64_t duration = packet.t_end - packet.t_start;
  const std::uint64_t sub = duration / static_cast<std::uint64_t>(channels);
  for (const Event& e : packet.events) {
    if (e.x >= width || e.y >= height) throw Error(Errc::EventOutOfRaster, "event outside the frame raster");
    if (e.t < packet.t_start || e.t >= packet.t_end)
      throw Error(Errc::InvariantViolation, "event timestamp outside its packet interval");
    const std::uint64_t offset = e.t - packet.t_start;
    int c = channels - 1;
    if (sub > 0) c = static_cast<int>(std::min<std::uint64_t>(offset / sub, channels - 1));
    frame.at(c, e.y, e.x) += (mode == AggregationMode::Count) ? 1.0 : static_cast<double>(e.p);
  }
  return frame;
}

EventFrame normalize_frame(const EventFrame& frame) {
  EventFrame out = frame;
  for (int c = 0; c < frame.channels(); ++c) {
    auto ch = out.channel(c);
    const double peak = ch.cwiseAbs().maxCoeff();
    if (peak > 0.0) ch /= peak;
  }
  return out;
}

EventFrame sum_pool(const EventFrame& frame, int factor) {
  if (factor < 1 || frame.height() % factor != 0 || frame.width() % factor != 0)
    throw Error(Errc::DimensionMismatch, "pool factor must divide the raster");
  EventFrame out(frame.channels(), frame.height() / factor, frame.width() / factor, frame.t_start(), frame.t_end());
  for (int c = 0; c < frame.channels(); ++c)
    for (int y = 0; y < frame.height(); ++y)
      for (int x = 0; x < frame.width(); ++x) out.at(c, y / factor, x / factor) += frame.at(c, y, x);
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  p.replace_extension(".json");
  return p;
}

void write_frame(const std::filesystem::path& bin_path, const EventFrame& frame) {
  std::vector<float> buf(frame.data().begin(), frame.data().end());
  write_bytes(bin_path, buf.data(), buf.size() * sizeof(float));
  nlohmann::ordered_json meta = {{"channels", frame.channels()},
                                 {"height", frame.height()},
                                 {"width", frame.width()},
                                 {"t_start", frame.t_start()},
                                 {"t_end", frame.t_end()}};
  const std::string text = meta.dump(2) + "\n";
  write_bytes(sidecar_path(bin_path), text.data(), text.size());
}

EventFrame read_frame(const std::filesystem::path& bin_path) {
  std::ifstream side(sidecar_path(bin_path));
  if (!side) throw Error(Errc::IoError, "missing sidecar for " + bin_path.string());
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("frame sidecar: ") + e.what());
  }
  for (const char* key : {"channels", "height", "width", "t_start", "t_end"})
    if (!meta.contains(key)) throw Error(Errc::SchemaViolation, std::string("frame sidecar missing ") + key);
  EventFrame frame(meta["channels"].get<int>(), meta["height"].get<int>(), meta["width"].get<int>(),
                   meta["t_start"].get<std::uint64_t>(), meta["t_end"].get<std::uint64_t>());
  const auto bytes = read_bytes(bin_path);
  if (bytes.size() != frame.data().size() * sizeof(float))
    throw Error(Errc::SchemaViolation, "frame payload size does not match its sidecar");
  for (std::size_t i = 0; i < frame.data().size(); ++i) frame.data()[i] = get<float>(bytes.data() + i * sizeof(float));
  return frame;
}

}  // namespace evpose
