// Copyright 2026 The lid-crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lid/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "lid/audio_io.hpp"
#include "lid/error.hpp"

namespace lid {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'I', 'D', 'C', 'R', 'N', 'N', '\0'};
constexpr std::uint8_t kKindParameter = 0;
constexpr std::uint8_t kKindBuffer = 1;
constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void floats(std::span<const float> values) { bytes(values.data(), values.size() * sizeof(float)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  std::string string(std::size_t n, const char* what) {
    const auto* p = take(n, what);
    return {reinterpret_cast<const char*>(p), n};
  }
  void floats(std::span<float> out, const char* what) {
    std::memcpy(out.data(), take(out.size() * sizeof(float), what), out.size() * sizeof(float));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint: truncated while reading ") + what);
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_tensor_header(Writer& w, const std::string& name, std::uint8_t kind, const Tensor& t) {
  w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.put<std::uint8_t>(kind);
  w.put<std::uint8_t>(kDtypeF32);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const CrnnModel& model, std::int64_t optimizer_step) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string config = nlohmann::json(model.config()).dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.bytes(config.data(), config.size());
  w.put<std::int64_t>(optimizer_step);

  const auto params = model.parameters();
  const auto buffers = model.buffers();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto* p : params) {
    write_tensor_header(w, p->name, kKindParameter, p->tensor);
    w.floats(p->tensor.data());
    w.floats(p->m);
    w.floats(p->v);
  }
  for (const auto& [name, t] : buffers) {
    write_tensor_header(w, name, kKindBuffer, *t);
    w.floats(t->data());
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.string(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto config_len = r.get<std::uint32_t>("config length");
  CrnnConfig config;
  try {
    config = nlohmann::json::parse(r.string(config_len, "config")).get<CrnnConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: config is not valid JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  Checkpoint ck{CrnnModel(config), r.get<std::int64_t>("optimizer step")};

  std::map<std::string, Parameter*> params;
  for (auto* p : ck.model.parameters()) params[p->name] = p;
  std::map<std::string, Tensor*> buffers;
  for (auto& [name, t] : ck.model.buffers()) buffers[name] = t;
  const std::size_t expected = params.size() + buffers.size();

  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != expected) {
    throw FormatError("checkpoint: holds " + std::to_string(count) + " tensors, model needs " +
                      std::to_string(expected));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.string(r.get<std::uint16_t>("name length"), "tensor name");
    const auto kind = r.get<std::uint8_t>("tensor kind");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32) throw FormatError("checkpoint: tensor '" + name + "' has unknown dtype tag");
    Shape shape(r.get<std::uint8_t>("rank"));
    for (auto& d : shape) d = r.get<std::uint64_t>("dimension");

    Tensor* target = nullptr;
    Parameter* param = nullptr;
    if (kind == kKindParameter && params.count(name)) {
      param = params[name];
      target = &param->tensor;
      params.erase(name);
    } else if (kind == kKindBuffer && buffers.count(name)) {
      target = buffers[name];
      buffers.erase(name);
    } else {
      throw FormatError("checkpoint: unexpected or duplicate tensor '" + name + "'");
    }
    if (target->shape() != shape) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                        shape_string(target->shape()));
    }
    r.floats(target->data(), "tensor data");
    if (param != nullptr) {
      r.floats(param->m, "first moment");
      r.floats(param->v, "second moment");
    }
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after the last tensor");
  return ck;
}

void save_checkpoint(const CrnnModel& model, const std::filesystem::path& path, std::int64_t optimizer_step) {
  const auto bytes = serialize_checkpoint(model, optimizer_step);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lid
