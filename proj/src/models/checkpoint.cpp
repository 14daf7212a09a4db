#include "sckd/models/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sckd::models {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'C', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  return {{"encoder_kind", std::string(to_string(spec.encoder_kind))},
          {"scale", std::string(to_string(spec.scale))},
          {"mid_channels", spec.mid_channels},
          {"window", spec.window},
          {"out_channels", spec.out_channels},
          {"width", spec.width},
          {"variational", spec.variational},
          {"temporal_stride_total", NetworkSpec::temporal_stride_total}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  if (!j.is_object()) throw std::invalid_argument("network spec must be a JSON object");
  if (j.contains("encoder_kind")) s.encoder_kind = parse_encoder_kind(j.at("encoder_kind").get<std::string>());
  if (j.contains("scale")) s.scale = parse_scale(j.at("scale").get<std::string>());
  s.mid_channels = j.value("mid_channels", s.mid_channels);
  s.window = j.value("window", s.window);
  s.out_channels = j.value("out_channels", s.out_channels);
  s.width = j.value("width", s.width);
  s.variational = j.value("variational", s.variational);
  validate(s);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, Network& net, const CheckpointMeta& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto params = net.parameters();
  std::size_t count = 0;
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    count += p->value.size();
  }
  const nlohmann::json header{{"spec", spec_to_json(net.spec())},
                              {"seed", meta.seed},
                              {"epoch", meta.epoch},
                              {"parameter_count", count},
                              {"dtype", "f32le"},
                              {"tensors", tensors},
                              {"extra", meta.extra}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) {
    os.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed while writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint (bad magic)");
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = read_u32(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) throw std::runtime_error("truncated checkpoint header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header: " + std::string(e.what()));
  }

  LoadedCheckpoint out;
  out.meta.spec = spec_from_json(header.at("spec"));
  out.meta.seed = header.value("seed", std::uint64_t{0});
  out.meta.epoch = header.value("epoch", 0);
  out.meta.extra = header.value("extra", nlohmann::json::object());
  out.network = std::make_unique<Network>(out.meta.spec, out.meta.seed);

  const auto params = out.network->parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(tensors.size()) + " tensors, network expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = tensors[i].at("shape").get<Shape>();
    if (tensors[i].at("name").get<std::string>() != params[i]->name || shape != params[i]->value.shape()) {
      throw std::runtime_error("checkpoint tensor " + std::to_string(i) + " (" + tensors[i].at("name").get<std::string>() +
                               ") does not match network layout");
    }
    is.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(params[i]->value.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint weights in " + path.string());
  }
  return out;
}

}  // namespace sckd::models
