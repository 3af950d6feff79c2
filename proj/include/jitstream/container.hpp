#pragma once

// "LVSS" frame containers. Little-endian:
//   magic "LVSS" | version u32 | width u32 | height u32 | channels u8 | frame_count u64 |
//   frame_count x (height * width * channels) raw u8, interleaved.
// channels is 3 for RGB frames and 1 for class-id label maps (255 = ignore).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <vector>

#include "jitstream/teacher.hpp"

namespace jitstream {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderBytes = 25;

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ContainerHeader {
  std::uint32_t version = kContainerVersion;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t channels = 3;
  std::uint64_t frame_count = 0;

  std::size_t frame_bytes() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
};

/// Appends frames; the frame count in the header is patched on close().
class ContainerWriter {
 public:
  ContainerWriter(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
                  std::uint8_t channels);
  ~ContainerWriter();
  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  void write(std::span<const std::uint8_t> frame);
  void write(const Frame& frame);
  void write(const LabelMap& labels);
  void close();

  std::uint64_t frames_written() const { return header_.frame_count; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  ContainerHeader header_;
};

/// Random-access reader. The header and total file length are validated on open.
class ContainerReader {
 public:
  explicit ContainerReader(const std::filesystem::path& path);

  const ContainerHeader& header() const { return header_; }
  std::vector<std::uint8_t> read(std::size_t index);
  Frame read_frame(std::size_t index);
  LabelMap read_labels(std::size_t index);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  ContainerHeader header_;
};

class ContainerFrameSource : public FrameSource {
 public:
  explicit ContainerFrameSource(const std::filesystem::path& path);

  std::optional<IndexedFrame> next() override;
  void rewind() override { cursor_ = 0; }
  std::optional<std::size_t> length() const override {
    return static_cast<std::size_t>(reader_.header().frame_count);
  }
  const ContainerHeader& header() const { return reader_.header(); }

 private:
  ContainerReader reader_;
  std::size_t cursor_ = 0;
};

}  // namespace jitstream
