#include "jitstream/recorded_teacher.hpp"

#include <json.hpp>

namespace jitstream {

std::vector<std::uint32_t> encode_rle(std::span<const std::uint8_t> mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t count = 0;
  for (std::uint8_t v : mask) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      runs.push_back(count);
      current = bit;
      count = 0;
    }
    ++count;
  }
  runs.push_back(count);
  return runs;
}

std::vector<std::uint8_t> decode_rle(std::span<const std::uint32_t> runs) {
  std::vector<std::uint8_t> out;
  std::uint8_t bit = 0;
  for (std::uint32_t r : runs) {
    out.insert(out.end(), r, bit);
    bit ^= 1;
  }
  return out;
}

RecordedTeacher RecordedTeacher::load(const std::filesystem::path& path, std::size_t width,
                                      std::size_t height, double cost_ms) {
  std::ifstream in(path);
  if (!in) throw RecordedTeacherError(path.string() + ": cannot open");
  return parse(in, width, height, path.string(), cost_ms);
}

RecordedTeacher RecordedTeacher::parse(std::istream& in, std::size_t width, std::size_t height,
                                       const std::string& origin, double cost_ms) {
  std::map<std::size_t, TeacherOutput> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) -> RecordedTeacherError {
      return RecordedTeacherError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    try {
      const auto j = nlohmann::json::parse(line);
      const auto frame = j.at("frame").get<std::int64_t>();
      if (frame < 0) throw fail("negative frame index");
      if (frames.count(static_cast<std::size_t>(frame))) {
        throw fail("duplicate frame " + std::to_string(frame));
      }
      TeacherOutput out;
      for (const auto& ji : j.at("instances")) {
        const auto cls = ji.at("class").get<int>();
        const auto conf = ji.at("conf").get<double>();
        const auto bbox = ji.at("bbox").get<std::vector<int>>();
        const auto runs = ji.at("rle").get<std::vector<std::uint32_t>>();
        if (cls < 0 || cls > 254) throw fail("class id " + std::to_string(cls) + " out of range");
        if (!(conf >= 0.0 && conf <= 1.0)) throw fail("confidence outside [0, 1]");
        if (bbox.size() != 4) throw fail("bbox must have four entries");
        TeacherInstance inst;
        inst.class_id = static_cast<std::uint8_t>(cls);
        inst.confidence = static_cast<float>(conf);
        inst.box = {bbox[0], bbox[1], bbox[2], bbox[3]};
        if (inst.box.empty()) throw fail("bbox requires x0 < x1 and y0 < y1");
        auto mask = decode_rle(runs);
        const auto box_area = static_cast<std::size_t>(inst.box.width()) *
                              static_cast<std::size_t>(inst.box.height());
        if (mask.size() == box_area) {
          inst.mask = std::move(mask);
        } else if (mask.size() == width * height) {
          // Full-frame mask: keep only the part inside the box.
          inst.mask.assign(box_area, 0);
          for (int y = inst.box.y0; y < inst.box.y1; ++y) {
            for (int x = inst.box.x0; x < inst.box.x1; ++x) {
              if (x < 0 || y < 0 || x >= static_cast<int>(width) || y >= static_cast<int>(height))
                continue;
              inst.mask[static_cast<std::size_t>((y - inst.box.y0) * inst.box.width() +
                                                 (x - inst.box.x0))] =
                  mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
            }
          }
        } else {
          throw fail("rle covers " + std::to_string(mask.size()) + " pixels; expected " +
                     std::to_string(box_area) + " (box) or " + std::to_string(width * height) +
                     " (frame)");
        }
        if (inst.clamp_to(width, height)) out.push_back(std::move(inst));
      }
      frames.emplace(static_cast<std::size_t>(frame), std::move(out));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return RecordedTeacher(std::move(frames), cost_ms);
}

std::optional<TeacherOutput> RecordedTeacher::predict(std::size_t frame_index, const Frame&) {
  auto it = frames_.find(frame_index);
  if (it == frames_.end()) return std::nullopt;
  return it->second;
}

RecordedTeacherWriter::RecordedTeacherWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw RecordedTeacherError(path.string() + ": cannot open for writing");
}

void RecordedTeacherWriter::append(std::size_t frame_index, const TeacherOutput& instances) {
  nlohmann::json j;
  j["frame"] = frame_index;
  j["instances"] = nlohmann::json::array();
  for (const auto& inst : instances) {
    j["instances"].push_back({{"class", inst.class_id},
                              {"conf", static_cast<double>(inst.confidence)},
                              {"bbox", {inst.box.x0, inst.box.y0, inst.box.x1, inst.box.y1}},
                              {"rle", encode_rle(inst.mask)}});
  }
  out_ << j.dump() << '\n';
  if (!out_) throw RecordedTeacherError("write failed");
}

}  // namespace jitstream
