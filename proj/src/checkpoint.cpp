#include "fuselm/checkpoint.hpp"

#include <cmath>
#include <limits>

#include "fuselm/binary_io.hpp"
#include "fuselm/error.hpp"

namespace fuselm {
namespace {

constexpr std::string_view kMagic = "FLMC";
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_config(binary::Writer& w, const ModelConfig& c) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.type));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.vocab_size));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.embed_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.hidden_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.artefact_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.ffn_width));
  w.put<std::uint64_t>(c.seed);
}

ModelConfig get_config(binary::Reader& r) {
  ModelConfig c;
  const auto type = r.get<std::uint8_t>();
  const auto mode = r.get<std::uint8_t>();
  if (type > 1) throw FormatError(r.what() + ": unknown model type " + std::to_string(type));
  if (mode > 6) throw FormatError(r.what() + ": unknown fusion mode " + std::to_string(mode));
  c.type = static_cast<ModelType>(type);
  c.mode = static_cast<FusionMode>(mode);
  const auto dim = [&](const char* what) {
    const auto v = r.get<std::uint32_t>();
    if (v > kMaxDim) throw FormatError(r.what() + ": implausible " + what + " " + std::to_string(v));
    return static_cast<std::size_t>(v);
  };
  c.vocab_size = dim("vocab_size");
  c.embed_dim = dim("embed_dim");
  c.hidden_dim = dim("hidden_dim");
  c.artefact_dim = dim("artefact_dim");
  c.ffn_width = dim("ffn_width");
  c.seed = r.get<std::uint64_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(r.what() + ": " + e.what());
  }
  return c;
}

void put_tensors(binary::Writer& w, const Model& model) {
  std::uint32_t count = 0;
  model.for_each([&](const char*, const auto&) { ++count; });
  w.put<std::uint32_t>(count);
  model.for_each([&](const char* name, const auto& t) {
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.put<float>(static_cast<float>(t.data()[i]));
  });
}

// Fills a zero-initialised model of the right shape; names, order and
// shapes must match exactly.
void get_tensors(binary::Reader& r, Model& model) {
  std::uint32_t expected = 0;
  model.for_each([&](const char*, const auto&) { ++expected; });
  const auto count = r.get<std::uint32_t>();
  if (count != expected) {
    throw FormatError(r.what() + ": expected " + std::to_string(expected) + " tensors, found " + std::to_string(count));
  }
  model.for_each([&](const char* name, auto& t) {
    const auto got = r.get_string(64);
    if (got != name) throw FormatError(r.what() + ": expected tensor '" + name + "', found '" + got + "'");
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rows != t.rows() || cols != t.cols()) {
      throw FormatError(r.what() + ": tensor '" + got + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", config implies " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    }
    const auto raw = r.take(static_cast<std::size_t>(t.size()) * sizeof(float));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      float v;
      std::memcpy(&v, raw.data() + i * sizeof(float), sizeof(float));
      if (!std::isfinite(v)) throw FormatError(r.what() + ": non-finite value in tensor '" + got + "'");
      t.data()[i] = v;
    }
  });
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  binary::Writer w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(Checkpoint::kVersion);
  put_config(w, ckpt.model.config());
  w.put<std::uint64_t>(ckpt.epochs_completed);
  put_tensors(w, ckpt.model);
  w.put<std::uint8_t>(ckpt.adam ? 1 : 0);
  if (ckpt.adam) {
    w.put<std::uint64_t>(ckpt.adam->step);
    put_tensors(w, ckpt.adam->m);
    put_tensors(w, ckpt.adam->v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  binary::Reader r(bytes, "checkpoint " + origin);
  if (r.take(4) != kMagic) throw FormatError("checkpoint " + origin + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint " + origin + ": unsupported version " + std::to_string(version));
  }
  const auto config = get_config(r);
  Checkpoint ckpt{Model::zeros(config), std::nullopt, r.get<std::uint64_t>()};
  get_tensors(r, ckpt.model);
  const auto has_adam = r.get<std::uint8_t>();
  if (has_adam > 1) throw FormatError(r.what() + ": bad optimizer flag");
  if (has_adam == 1) {
    auto state = ModelAdamState::fresh(ckpt.model);
    state.step = r.get<std::uint64_t>();
    get_tensors(r, state.m);
    get_tensors(r, state.v);
    ckpt.adam = std::move(state);
  }
  if (r.remaining() != 0) throw FormatError(r.what() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binary::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binary::read_file(path), path.string());
}

}  // namespace fuselm
