#include "swarmdiff/diffusion/model.hpp"

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"

namespace swarmdiff::diffusion {

std::vector<char> encode_checkpoint(const DiffusionModel& model) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& t : parameter_layout(model.denoiser)) {
    layout.push_back({{"name", t.name}, {"offset", t.offset}, {"rows", t.rows}, {"cols", t.cols}});
  }
  if (model.params.size() != parameter_count(model.denoiser)) {
    throw DomainError("checkpoint parameter count does not match the architecture");
  }
  const nlohmann::json header = {{"format", "swarmdiff-checkpoint"},
                                 {"version", kCheckpointVersion},
                                 {"denoiser", model.denoiser},
                                 {"normalizer", model.normalizer},
                                 {"schedule", model.schedule},
                                 {"horizon", model.horizon},
                                 {"dt", model.dt},
                                 {"step", model.step},
                                 {"config_hash", model.config_hash},
                                 {"param_count", model.params.size()},
                                 {"layout", layout}};
  binio::Writer w;
  w.put_raw(header.dump());
  w.put_raw("\n");
  w.put_all(std::span<const float>(model.params));
  return w.release();
}

DiffusionModel decode_checkpoint(const std::vector<char>& bytes) {
  const auto head = binio::parse_header_line(bytes);
  const auto& h = head.header;
  if (h.value("format", "") != "swarmdiff-checkpoint") throw IoError("not a swarmdiff checkpoint (byte offset 0)");
  if (h.value("version", 0) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  DiffusionModel m;
  try {
    m.denoiser = h.at("denoiser").get<DenoiserConfig>();
    m.normalizer = h.at("normalizer").get<Normalizer>();
    m.schedule = schedule_from_json(h.at("schedule"));
    m.horizon = h.at("horizon").get<int>();
    m.dt = h.at("dt").get<double>();
    m.step = h.at("step").get<std::uint64_t>();
    m.config_hash = h.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header field error: ") + e.what());
  }
  const auto count = h.at("param_count").get<std::size_t>();
  if (count != parameter_count(m.denoiser)) throw IoError("checkpoint param_count does not match the architecture");
  binio::Reader r(std::span<const char>(bytes).subspan(head.payload_offset), head.payload_offset);
  m.params.resize(count);
  r.get_all(std::span<float>(m.params));
  if (r.remaining() != 0) {
    throw IoError("trailing bytes after checkpoint payload at byte offset " + std::to_string(r.offset()));
  }
  return m;
}

void write_checkpoint(const std::string& path, const DiffusionModel& model) {
  binio::write_file(path, encode_checkpoint(model));
}

DiffusionModel read_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace swarmdiff::diffusion
