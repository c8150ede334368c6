#include "layerprobe/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <algorithm>

#include "layerprobe/error.hpp"

namespace layerprobe {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'R', 'B'};

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v & 0xFFU));
    out_.push_back(static_cast<std::uint8_t>(v >> 8U));
  }
  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
      out_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFU));
    }
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > in_.size()) {
      throw Error(std::string("corrupt header: file ends inside ") + what);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8U));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void check_finite(std::span<const float> data, const std::string& id) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error("recording '" + id + "': non-finite embedding value at flat index " +
                  std::to_string(i));
    }
  }
}

}  // namespace

EmbeddingSequence::EmbeddingSequence(std::string recording_id,
                                     std::uint32_t layer_index, std::size_t dim,
                                     float frame_hz, std::vector<float> data)
    : recording_id_(std::move(recording_id)),
      layer_index_(layer_index),
      dim_(dim),
      frame_hz_(frame_hz),
      data_(std::move(data)) {
  if (dim_ == 0) throw Error("embedding dim must be >= 1");
  if (data_.empty() || data_.size() % dim_ != 0) {
    throw Error("embedding data size " + std::to_string(data_.size()) +
                " is not a positive multiple of dim " + std::to_string(dim_));
  }
  if (!(frame_hz_ > 0.0F) || !std::isfinite(frame_hz_)) {
    throw Error("frame_hz must be positive and finite");
  }
  check_finite(data_, recording_id_);
}

std::size_t embedding_header_size(const std::string& recording_id) {
  return kEmbeddingFixedHeaderBytes + recording_id.size();
}

std::string embedding_file_name(const std::string& recording_id,
                                std::uint32_t layer_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02u", layer_index);
  return recording_id + ".layer" + buf + ".lpb";
}

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq) {
  if (seq.dim() == 0) throw Error("cannot encode an empty embedding sequence");
  check_finite(seq.data(), seq.recording_id());
  if (seq.layer_index() > 0xFFFFU) throw Error("layer_index does not fit in u16");
  if (seq.recording_id().size() > 0xFFFFU) throw Error("recording_id too long");
  if (seq.dim() > 0xFFFFFFFFU || seq.n_frames() > 0xFFFFFFFFU) {
    throw Error("embedding shape does not fit in u32");
  }

  std::vector<std::uint8_t> out;
  out.reserve(embedding_header_size(seq.recording_id()) + 4 * seq.data().size());
  ByteWriter w(out);
  w.bytes(kMagic, sizeof(kMagic));
  w.u16(kEmbeddingFormatVersion);
  w.u16(static_cast<std::uint16_t>(seq.layer_index()));
  w.u32(static_cast<std::uint32_t>(seq.dim()));
  w.u32(static_cast<std::uint32_t>(seq.n_frames()));
  w.f32(seq.frame_hz());
  w.u16(static_cast<std::uint16_t>(seq.recording_id().size()));
  w.bytes(seq.recording_id().data(), seq.recording_id().size());
  for (float v : seq.data()) w.f32(v);
  return out;
}

EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error("bad magic: not an LPRB embedding file");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kEmbeddingFormatVersion) {
    throw Error("unsupported version " + std::to_string(version));
  }
  const std::uint16_t layer = r.u16("layer_index");
  const std::uint32_t dim = r.u32("dim");
  const std::uint32_t n_frames = r.u32("n_frames");
  const float frame_hz = r.f32("frame_hz");
  const std::uint16_t id_len = r.u16("recording_id length");
  auto id_bytes = r.take(id_len, "recording_id");
  std::string id(id_bytes.begin(), id_bytes.end());

  if (dim == 0 || n_frames == 0) {
    throw Error("corrupt header: dim and n_frames must be >= 1");
  }
  const std::uint64_t expected = 4ULL * dim * n_frames;
  if (r.remaining() != expected) {
    throw Error("truncated payload: expected " + std::to_string(expected) +
                " bytes, found " + std::to_string(r.remaining()));
  }
  std::vector<float> data(static_cast<std::size_t>(dim) * n_frames);
  for (auto& v : data) v = r.f32("payload");
  return {std::move(id), layer, dim, frame_hz, std::move(data)};
}

void write_embedding_file(const EmbeddingSequence& seq,
                          const std::filesystem::path& path) {
  const auto bytes = encode_embedding(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

EmbeddingSequence read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_embedding(bytes);
  } catch (const Error& e) {
    throw Error(path.filename().string() + ": " + e.what());
  }
}

EmbeddingStore::EmbeddingStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path EmbeddingStore::path_for(const std::string& recording_id,
                                               std::uint32_t layer) const {
  return root_ / embedding_file_name(recording_id, layer);
}

bool EmbeddingStore::contains(const std::string& recording_id,
                              std::uint32_t layer) const {
  return std::filesystem::is_regular_file(path_for(recording_id, layer));
}

std::shared_ptr<const EmbeddingSequence> EmbeddingStore::load(
    const std::string& recording_id, std::uint32_t layer) const {
  const auto key = std::make_pair(recording_id, layer);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto seq = std::make_shared<const EmbeddingSequence>(
      read_embedding_file(path_for(recording_id, layer)));
  if (seq->recording_id() != recording_id || seq->layer_index() != layer) {
    throw Error("file " + path_for(recording_id, layer).filename().string() +
                " declares recording '" + seq->recording_id() + "' layer " +
                std::to_string(seq->layer_index()));
  }
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(seq)).first->second;
}

std::vector<std::uint32_t> EmbeddingStore::layers_for(
    const std::string& recording_id) const {
  std::vector<std::uint32_t> layers;
  if (!std::filesystem::is_directory(root_)) return layers;
  const std::string prefix = recording_id + ".layer";
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= prefix.size() + 4 || name.compare(0, prefix.size(), prefix) != 0 ||
        name.substr(name.size() - 4) != ".lpb") {
      continue;
    }
    const std::string digits =
        name.substr(prefix.size(), name.size() - prefix.size() - 4);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos) {
      continue;
    }
    layers.push_back(static_cast<std::uint32_t>(std::stoul(digits)));
  }
  std::sort(layers.begin(), layers.end());
  return layers;
}

}  // namespace layerprobe
