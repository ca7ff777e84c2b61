#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace evpose {

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint64_t t = 0;  // microseconds
  std::int16_t p = 1;   // -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

/// Events collected over the half-open interval [t_start, t_end).
struct EventPacket {
  std::vector<Event> events;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;
};

/// Decoded `.evt` file: header raster size plus records in file order.
struct EventStream {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<Event> events;
};

enum class AggregationMode { Count, Polarity };

/// M temporal channels over an H x W raster. Channel m is stored as a
/// contiguous H*W block, row-major.
class EventFrame {
 public:
  EventFrame() = default;
  EventFrame(int channels, int height, int width, std::uint64_t t_start = 0, std::uint64_t t_end = 0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::uint64_t t_start() const { return t_start_; }
  std::uint64_t t_end() const { return t_end_; }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  /// Channel c as an H x W row-major map.
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> channel(int c);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> channel(int c) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  double sum() const;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::uint64_t t_start_ = 0;
  std::uint64_t t_end_ = 0;
  std::vector<double> data_;
};

inline constexpr std::size_t kEvtHeaderSize = 16;
inline constexpr std::size_t kEvtRecordSize = 16;
inline constexpr std::uint32_t kEvtVersion = 1;

EventStream parse_event_stream(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_event_stream(std::span<const Event> events, std::uint32_t width,
                                             std::uint32_t height);

EventStream read_event_file(const std::filesystem::path& path);
void write_event_file(const std::filesystem::path& path, std::span<const Event> events, std::uint32_t width,
                      std::uint32_t height);

/// Splits time-sorted events into packets [boundaries[i], boundaries[i+1]).
std::vector<EventPacket> packetize(std::span<const Event> events, std::span<const std::uint64_t> boundaries);

/// Accumulates a packet into M equal-duration temporal channels. Integer
/// sub-interval length is floor(duration / M); the last channel absorbs the
/// remainder.
EventFrame aggregate_frame(const EventPacket& packet, int channels, int height, int width,
                           AggregationMode mode = AggregationMode::Count);

/// Per-channel max normalization to [0, 1]; all-zero channels stay zero.
EventFrame normalize_frame(const EventFrame& frame);

/// Sum-pools each channel by an integer factor in both directions.
EventFrame sum_pool(const EventFrame& frame, int factor);

/// Flat float32 M*H*W dump plus a JSON sidecar {channels, height, width, t_start, t_end}.
void write_frame(const std::filesystem::path& bin_path, const EventFrame& frame);
EventFrame read_frame(const std::filesystem::path& bin_path);

/// Sidecar path for a binary payload: foo.bin -> foo.json.
std::filesystem::path sidecar_path(const std::filesystem::path& bin_path);

}  // namespace evpose
