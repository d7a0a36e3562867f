#include "lano/checkpoint.hpp"

#include "binary_io.hpp"
#include "lano/error.hpp"

namespace lano {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<float>& params,
                     const KeyValue& train_config) {
  detail::ByteWriter w;
  w.bytes("POBW", 4);
  w.u32(kCheckpointVersion);
  w.str(config.to_keyvalue().to_text());
  w.str(train_config.to_text());
  const auto named = params.named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t->rank()));
    for (auto e : t->shape()) w.u32(static_cast<std::uint32_t>(e));
    for (float v : t->values()) w.f32(v);
  }
  detail::write_file_bytes(path.string(), w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  const std::string what = "checkpoint '" + path.string() + "'";
  detail::ByteReader r(bytes.data(), bytes.size(), what);
  r.expect_magic("POBW");
  r.expect_version(kCheckpointVersion);
  Checkpoint ck;
  ck.config = ModelConfig::from_keyvalue(KeyValue::parse(r.str()));
  ck.train_config = KeyValue::parse(r.str());
  // Initialization fixes which tensors exist and their shapes; the stored
  // values then overwrite them in order.
  ck.params = init_params<float>(ck.config, 0);
  auto named = ck.params.named();
  const auto count = r.u32();
  if (count != named.size()) {
    throw FormatError(what + ": holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(named.size()));
  }
  for (auto& [name, t] : named) {
    const auto stored = r.str();
    if (stored != name) throw FormatError(what + ": expected tensor '" + name + "', found '" + stored + "'");
    Shape shape(r.u8());
    for (auto& e : shape) e = r.u32();
    if (shape != t->shape()) {
      throw FormatError(what + ": tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                        shape_string(t->shape()));
    }
    r.need(4 * t->numel());
    for (auto& v : t->values()) v = r.f32();
  }
  if (!r.done()) throw FormatError(what + ": trailing bytes");
  return ck;
}

}  // namespace lano
