#include "emtune/checkpoint.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "emtune/error.hpp"

namespace emtune {
namespace {

using nlohmann::json;
constexpr std::string_view kMagic = "EMTN";

json metadata_json(const Checkpoint& ckpt) {
  const auto& ec = ckpt.encoder.config;
  json meta;
  meta["encoder"] = {{"input_dim", ec.input_dim},
                     {"hidden_dims", ec.hidden_dims},
                     {"bottleneck_dim", ec.bottleneck_dim},
                     {"seed", ec.seed}};
  if (ckpt.adapter) {
    const auto& s = ckpt.adapter->shape;
    meta["adapter"] = {
        {"input_dim", s.input_dim}, {"hidden_dim", s.hidden_dim}, {"num_classes", s.num_classes}};
  } else {
    meta["adapter"] = nullptr;
  }
  meta["training"] = {{"loss_mode", ckpt.metadata.loss_mode},
                      {"epoch", ckpt.metadata.epoch},
                      {"seed", ckpt.metadata.seed}};
  return meta;
}

std::vector<std::size_t> encoder_widths(const EncoderConfig& c) {
  std::vector<std::size_t> w{c.input_dim};
  w.insert(w.end(), c.hidden_dims.begin(), c.hidden_dims.end());
  w.push_back(c.bottleneck_dim);
  return w;
}

void write_layers(detail::ByteWriter& w, const Mlp& net) {
  for (const Matrix* p : net.parameters())
    for (double v : p->values()) w.f64(v);
}

Mlp read_layers(detail::ByteReader& r, const std::vector<std::size_t>& widths) {
  std::vector<AffineParams> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    AffineParams layer{Matrix(widths[i], widths[i + 1]), Matrix(1, widths[i + 1])};
    for (auto& v : layer.weight.values()) v = r.f64();
    for (auto& v : layer.bias.values()) v = r.f64();
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::string meta = metadata_json(ckpt).dump();
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.le<std::uint16_t>(ckpt.format_version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  write_layers(w, ckpt.encoder.net);
  if (ckpt.adapter) write_layers(w, ckpt.adapter->net);
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(kMagic.size()) != kMagic) throw ParseError("checkpoint: bad magic bytes", 0);
  Checkpoint ckpt;
  ckpt.format_version = r.le<std::uint16_t>();
  if (ckpt.format_version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " +
                      std::to_string(ckpt.format_version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = r.le<std::uint32_t>();
  const std::size_t meta_offset = r.offset();
  const auto meta_text = r.bytes(meta_len);

  std::vector<std::size_t> enc_widths;
  std::optional<AdapterShape> adapter_shape;
  try {
    const json meta = json::parse(meta_text);
    const auto& e = meta.at("encoder");
    auto& ec = ckpt.encoder.config;
    ec.input_dim = e.at("input_dim").get<std::size_t>();
    ec.hidden_dims = e.at("hidden_dims").get<std::vector<std::size_t>>();
    ec.bottleneck_dim = e.at("bottleneck_dim").get<std::size_t>();
    ec.seed = e.at("seed").get<std::uint64_t>();
    enc_widths = encoder_widths(ec);
    const auto& a = meta.at("adapter");
    if (!a.is_null()) {
      adapter_shape = AdapterShape{a.at("input_dim").get<std::size_t>(),
                                   a.at("hidden_dim").get<std::size_t>(),
                                   a.at("num_classes").get<std::size_t>()};
    }
    const auto& t = meta.at("training");
    ckpt.metadata.loss_mode = t.at("loss_mode").get<std::string>();
    ckpt.metadata.epoch = t.at("epoch").get<std::uint64_t>();
    ckpt.metadata.seed = t.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw ParseError(std::string("checkpoint: invalid metadata: ") + ex.what(), meta_offset);
  }

  ckpt.encoder.net = read_layers(r, enc_widths);
  if (adapter_shape) {
    const std::vector<std::size_t> widths{adapter_shape->input_dim, adapter_shape->hidden_dim,
                                          adapter_shape->num_classes};
    ckpt.adapter = Adapter{*adapter_shape, read_layers(r, widths)};
  }
  if (r.remaining() != 0) {
    throw ParseError("checkpoint: " + std::to_string(r.remaining()) + " trailing byte(s)",
                     r.offset());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), serialize_checkpoint(ckpt), "checkpoint");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path.string(), "checkpoint");
  try {
    return parse_checkpoint(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace emtune
