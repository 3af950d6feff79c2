#include "jitstream/container.hpp"

#include <cstring>

#include "jitstream/detail/le_io.hpp"

namespace jitstream {

namespace {

constexpr char kMagic[4] = {'L', 'V', 'S', 'S'};
constexpr std::streamoff kCountOffset = 17;

std::string where(const std::filesystem::path& path) { return path.string() + ": "; }

}  // namespace

ContainerWriter::ContainerWriter(const std::filesystem::path& path, std::uint32_t width,
                                 std::uint32_t height, std::uint8_t channels)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (width == 0 || height == 0) throw ContainerError(where(path) + "zero frame extent");
  if (channels != 1 && channels != 3) {
    throw ContainerError(where(path) + "channels must be 1 or 3");
  }
  if (!out_) throw ContainerError(where(path) + "cannot open for writing");
  header_.width = width;
  header_.height = height;
  header_.channels = channels;
  out_.write(kMagic, 4);
  detail::write_le(out_, header_.version);
  detail::write_le(out_, header_.width);
  detail::write_le(out_, header_.height);
  detail::write_le(out_, header_.channels);
  detail::write_le(out_, header_.frame_count);
}

ContainerWriter::~ContainerWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ContainerWriter::write(std::span<const std::uint8_t> frame) {
  if (!out_.is_open()) throw ContainerError(where(path_) + "write after close");
  if (frame.size() != header_.frame_bytes()) {
    throw ContainerError(where(path_) + "frame " + std::to_string(header_.frame_count) + " has " +
                         std::to_string(frame.size()) + " bytes, expected " +
                         std::to_string(header_.frame_bytes()));
  }
  out_.write(reinterpret_cast<const char*>(frame.data()),
             static_cast<std::streamsize>(frame.size()));
  if (!out_) throw ContainerError(where(path_) + "write failed");
  ++header_.frame_count;
}

void ContainerWriter::write(const Frame& frame) {
  if (header_.channels != 3 || frame.width != header_.width || frame.height != header_.height) {
    throw ContainerError(where(path_) + "RGB frame does not match container extent");
  }
  write(std::span<const std::uint8_t>(frame.rgb));
}

void ContainerWriter::write(const LabelMap& labels) {
  if (header_.channels != 1 || labels.width != header_.width || labels.height != header_.height) {
    throw ContainerError(where(path_) + "label map does not match container extent");
  }
  write(std::span<const std::uint8_t>(labels.labels));
}

void ContainerWriter::close() {
  if (!out_.is_open()) return;
  out_.seekp(kCountOffset);
  detail::write_le(out_, header_.frame_count);
  out_.close();
  if (out_.fail()) throw ContainerError(where(path_) + "failed to finalize");
}

ContainerReader::ContainerReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw ContainerError(where(path) + "cannot open");
  char magic[4];
  if (!in_.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ContainerError(where(path) + "bad magic at byte offset 0 (expected \"LVSS\")");
  }
  using detail::read_le;
  header_.version = read_le<std::uint32_t, ContainerError>(in_, "version");
  if (header_.version != kContainerVersion) {
    throw ContainerError(where(path) + "unsupported version " + std::to_string(header_.version) +
                         " at byte offset 4");
  }
  header_.width = read_le<std::uint32_t, ContainerError>(in_, "width");
  header_.height = read_le<std::uint32_t, ContainerError>(in_, "height");
  header_.channels = read_le<std::uint8_t, ContainerError>(in_, "channels");
  header_.frame_count = read_le<std::uint64_t, ContainerError>(in_, "frame_count");
  if (header_.width == 0 || header_.height == 0) {
    throw ContainerError(where(path) + "zero frame extent in header at byte offset 8");
  }
  if (header_.channels != 1 && header_.channels != 3) {
    throw ContainerError(where(path) + "channels " + std::to_string(header_.channels) +
                         " at byte offset 16 (expected 1 or 3)");
  }
  const std::uintmax_t size = std::filesystem::file_size(path);
  const std::uintmax_t payload = size - kContainerHeaderBytes;
  const std::uintmax_t fb = header_.frame_bytes();
  if (payload / fb < header_.frame_count) {
    const std::uintmax_t complete = payload / fb;
    throw ContainerError(where(path) + "truncated payload: header declares " +
                         std::to_string(header_.frame_count) + " frames but frame " +
                         std::to_string(complete) + " is incomplete at byte offset " +
                         std::to_string(kContainerHeaderBytes + complete * fb) + " (file has " +
                         std::to_string(size) + " bytes)");
  }
  if (payload != header_.frame_count * fb) {
    throw ContainerError(where(path) + "extent mismatch: " +
                         std::to_string(payload - header_.frame_count * fb) +
                         " unexpected bytes after the last frame at byte offset " +
                         std::to_string(kContainerHeaderBytes + header_.frame_count * fb));
  }
}

std::vector<std::uint8_t> ContainerReader::read(std::size_t index) {
  if (index >= header_.frame_count) {
    throw ContainerError(where(path_) + "frame " + std::to_string(index) + " out of range");
  }
  const std::size_t fb = header_.frame_bytes();
  std::vector<std::uint8_t> out(fb);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kContainerHeaderBytes + index * fb));
  if (!in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(fb))) {
    throw ContainerError(where(path_) + "short read of frame " + std::to_string(index));
  }
  return out;
}

Frame ContainerReader::read_frame(std::size_t index) {
  if (header_.channels != 3) throw ContainerError(where(path_) + "not an RGB container");
  Frame f;
  f.width = header_.width;
  f.height = header_.height;
  f.rgb = read(index);
  return f;
}

LabelMap ContainerReader::read_labels(std::size_t index) {
  if (header_.channels != 1) throw ContainerError(where(path_) + "not a label container");
  LabelMap m;
  m.width = header_.width;
  m.height = header_.height;
  m.labels = read(index);
  return m;
}

ContainerFrameSource::ContainerFrameSource(const std::filesystem::path& path) : reader_(path) {
  if (reader_.header().channels != 3) {
    throw ContainerError(where(path) + "frame source needs a 3-channel container");
  }
}

std::optional<IndexedFrame> ContainerFrameSource::next() {
  if (cursor_ >= reader_.header().frame_count) return std::nullopt;
  IndexedFrame f{cursor_, reader_.read_frame(cursor_)};
  ++cursor_;
  return f;
}

}  // namespace jitstream
