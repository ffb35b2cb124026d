// Copyright 2026 The lgmnet Authors.
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

#include "lgmnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace lgmnet {
namespace {

constexpr char kMagic[4] = {'L', 'G', 'M', 'N'};
constexpr std::size_t kMaxRank = 8;

struct Record {
  std::vector<std::uint64_t> extents;
  std::vector<float> data;
};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void tensor(const std::string& name, std::vector<std::uint64_t> extents, const float* data, std::size_t n) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(extents.size()));
    for (auto e : extents) u64(e);
    for (std::size_t i = 0; i < n; ++i) f32(data[i]);
    ++count_;
  }
  void matrix(const std::string& name, const Matrix<float>& m) {
    tensor(name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, m.data(),
           static_cast<std::size_t>(m.size()));
  }
  void vector(const std::string& name, const std::vector<float>& v) { tensor(name, {v.size()}, v.data(), v.size()); }

  std::vector<std::uint8_t>& buffer() { return out_; }
  std::uint64_t count() const { return count_; }

 private:
  std::vector<std::uint8_t> out_;
  std::uint64_t count_ = 0;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<float> limbs(std::uint64_t v) {
  std::vector<float> out(4);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<float>((v >> (16 * i)) & 0xffffu);
  return out;
}

std::uint64_t from_limbs(const std::vector<float>& v, std::size_t at) {
  std::uint64_t out = 0;
  for (int i = 0; i < 4; ++i) {
    const float limb = v.at(at + i);
    if (limb < 0.0f || limb > 65535.0f || limb != static_cast<float>(static_cast<std::uint32_t>(limb))) {
      throw CheckpointError("checkpoint: malformed counter limb");
    }
    out |= static_cast<std::uint64_t>(limb) << (16 * i);
  }
  return out;
}

int as_int(float v) {
  if (v != static_cast<float>(static_cast<int>(v))) throw CheckpointError("checkpoint: malformed integer field");
  return static_cast<int>(v);
}

const Record& require(const std::map<std::string, Record>& table, const std::string& name) {
  auto it = table.find(name);
  if (it == table.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

Matrix<float> as_matrix(const Record& r, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (r.extents.size() != 2 || r.extents[0] != static_cast<std::uint64_t>(rows) ||
      r.extents[1] != static_cast<std::uint64_t>(cols)) {
    throw CheckpointError("checkpoint: tensor '" + name + "' has unexpected shape");
  }
  Matrix<float> m(rows, cols);
  std::memcpy(m.data(), r.data.data(), r.data.size() * sizeof(float));
  return m;
}

Eigen::RowVectorXf as_row(const Record& r, const std::string& name, Eigen::Index width) {
  if (r.extents.size() != 1 || r.extents[0] != static_cast<std::uint64_t>(width)) {
    throw CheckpointError("checkpoint: tensor '" + name + "' has unexpected shape");
  }
  return Eigen::Map<const Eigen::RowVectorXf>(r.data.data(), width);
}

std::vector<float> ints_to_floats(const std::vector<int>& v) { return {v.begin(), v.end()}; }

std::vector<int> floats_to_ints(const std::vector<float>& v) {
  std::vector<int> out;
  for (float f : v) out.push_back(as_int(f));
  return out;
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const TrainingState& state) {
  const auto& cfg = state.config;
  const auto& m = cfg.model;
  Writer body;
  body.vector("meta/train", {static_cast<float>(cfg.dataset), static_cast<float>(cfg.n_way),
                             static_cast<float>(cfg.k_shot), static_cast<float>(cfg.n_query),
                             static_cast<float>(cfg.tasks_per_batch)});
  body.vector("meta/model", {static_cast<float>(m.input_dim), static_cast<float>(m.context_dim),
                             m.use_encoder ? 1.0f : 0.0f, m.weight_norm ? 1.0f : 0.0f, m.use_itn ? 1.0f : 0.0f,
                             m.deterministic_context ? 1.0f : 0.0f, m.itn_momentum});
  body.vector("meta/encoder_hidden", ints_to_floats(m.encoder_hidden));
  body.vector("meta/target_widths", ints_to_floats(m.target_widths));
  std::vector<float> counters;
  for (std::uint64_t v : {cfg.seed, static_cast<std::uint64_t>(cfg.total_batches),
                          static_cast<std::uint64_t>(state.batch), state.adam.step}) {
    const auto l = limbs(v);
    counters.insert(counters.end(), l.begin(), l.end());
  }
  body.vector("meta/counters", counters);

  const auto& params = state.net.params.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    body.matrix("param/" + params[i].name, params[i].value);
    body.matrix("adam/m/" + params[i].name, state.adam.first_moment.at(i));
    body.matrix("adam/v/" + params[i].name, state.adam.second_moment.at(i));
  }
  for (std::size_t i = 0; i < state.net.itn.size(); ++i) {
    const auto& layer = state.net.itn[i];
    const std::string prefix = "itn" + std::to_string(i);
    body.tensor(prefix + "/running_mean", {static_cast<std::uint64_t>(layer.width())}, layer.running_mean.data(),
                static_cast<std::size_t>(layer.width()));
    body.tensor(prefix + "/running_var", {static_cast<std::uint64_t>(layer.width())}, layer.running_var.data(),
                static_cast<std::size_t>(layer.width()));
  }

  Writer out;
  out.bytes(kMagic, 4);
  out.u32(kCheckpointVersion);
  out.u64(body.count());
  out.bytes(body.buffer().data(), body.buffer().size());
  const auto checksum = fnv1a64(out.buffer().data(), out.buffer().size());
  out.u64(checksum);
  return std::move(out.buffer());
}

TrainingState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8) throw CheckpointError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const std::size_t body_end = bytes.size() - 8;
  Reader trailer(bytes.data() + body_end, 8);
  const auto stored = trailer.u64();

  Reader in(bytes.data(), body_end);
  in.str(4);
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (fnv1a64(bytes.data(), body_end) != stored) throw CheckpointError("checkpoint checksum mismatch");

  const auto count = in.u64();
  std::map<std::string, Record> table;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name = in.str(in.u32());
    const auto rank = in.u32();
    if (rank > kMaxRank) throw CheckpointError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    Record r;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.extents.push_back(in.u64());
      if (r.extents.back() > body_end) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
      n *= r.extents.back();
      if (n > body_end) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
    }
    in.need(n * 4);
    r.data.resize(n);
    for (auto& v : r.data) v = in.f32();
    if (!table.emplace(name, std::move(r)).second) throw CheckpointError("checkpoint: duplicate tensor '" + name + "'");
  }
  if (in.pos() != body_end) throw CheckpointError("checkpoint: trailing bytes before checksum");

  TrainingState state;
  auto& cfg = state.config;
  const auto& train = require(table, "meta/train").data;
  const auto& model = require(table, "meta/model").data;
  const auto& counters = require(table, "meta/counters").data;
  if (train.size() != 5 || model.size() != 7 || counters.size() != 16) {
    throw CheckpointError("checkpoint: malformed meta records");
  }
  const int kind = as_int(train[0]);
  if (kind < 0 || kind > static_cast<int>(DatasetKind::kCircles)) throw CheckpointError("checkpoint: bad dataset kind");
  cfg.dataset = static_cast<DatasetKind>(kind);
  cfg.n_way = as_int(train[1]);
  cfg.k_shot = as_int(train[2]);
  cfg.n_query = as_int(train[3]);
  cfg.tasks_per_batch = as_int(train[4]);
  cfg.model.input_dim = as_int(model[0]);
  cfg.model.context_dim = as_int(model[1]);
  cfg.model.use_encoder = model[2] != 0.0f;
  cfg.model.weight_norm = model[3] != 0.0f;
  cfg.model.use_itn = model[4] != 0.0f;
  cfg.model.deterministic_context = model[5] != 0.0f;
  cfg.model.itn_momentum = model[6];
  cfg.model.encoder_hidden = floats_to_ints(require(table, "meta/encoder_hidden").data);
  cfg.model.target_widths = floats_to_ints(require(table, "meta/target_widths").data);
  cfg.seed = from_limbs(counters, 0);
  cfg.total_batches = static_cast<std::int64_t>(from_limbs(counters, 4));
  state.batch = static_cast<std::int64_t>(from_limbs(counters, 8));

  try {
    state.net = init_metanet(cfg.model, 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid model configuration: ") + e.what());
  }
  state.adam = AdamState::zeros_like(state.net.params);
  state.adam.step = from_limbs(counters, 12);
  auto& params = state.net.params.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto rows = p.value.rows(), cols = p.value.cols();
    for (const auto& [prefix, target] :
         {std::pair<std::string, Matrix<float>*>{"param/", &p.value}, {"adam/m/", &state.adam.first_moment[i]},
          {"adam/v/", &state.adam.second_moment[i]}}) {
      const auto name = prefix + p.name;
      *target = as_matrix(require(table, name), name, rows, cols);
    }
  }
  for (std::size_t i = 0; i < state.net.itn.size(); ++i) {
    auto& layer = state.net.itn[i];
    const std::string prefix = "itn" + std::to_string(i);
    layer.running_mean = as_row(require(table, prefix + "/running_mean"), prefix + "/running_mean", layer.width());
    layer.running_var = as_row(require(table, prefix + "/running_var"), prefix + "/running_var", layer.width());
  }
  return state;
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace lgmnet
