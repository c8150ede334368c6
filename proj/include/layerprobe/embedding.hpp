#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace layerprobe {

// Frame-level encoder output for one (recording, layer) pair.
//
// On-disk layout (little-endian):
//   "LPRB" | u16 version (=1) | u16 layer_index | u32 dim | u32 n_frames
//   | f32 frame_hz | u16 id_length | id bytes (UTF-8)
//   | n_frames * dim f32, row-major
class EmbeddingSequence {
 public:
  EmbeddingSequence() = default;

  // Throws Error if the shape is inconsistent, frame_hz <= 0, or any entry is
  // non-finite.
  EmbeddingSequence(std::string recording_id, std::uint32_t layer_index,
                    std::size_t dim, float frame_hz, std::vector<float> data);

  const std::string& recording_id() const { return recording_id_; }
  std::uint32_t layer_index() const { return layer_index_; }
  std::size_t dim() const { return dim_; }
  std::size_t n_frames() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  float frame_hz() const { return frame_hz_; }
  double duration_s() const {
    return static_cast<double>(n_frames()) / static_cast<double>(frame_hz_);
  }

  std::span<const float> frame(std::size_t f) const {
    return {data_.data() + f * dim_, dim_};
  }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const EmbeddingSequence&,
                         const EmbeddingSequence&) = default;

 private:
  std::string recording_id_;
  std::uint32_t layer_index_ = 0;
  std::size_t dim_ = 0;
  float frame_hz_ = 0.0F;
  std::vector<float> data_;
};

inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingFixedHeaderBytes = 22;

// Header bytes for a given recording id (fixed part plus the id string).
std::size_t embedding_header_size(const std::string& recording_id);

// `<recording_id>.layer<NN>.lpb`, NN zero-padded to at least two digits.
std::string embedding_file_name(const std::string& recording_id,
                                std::uint32_t layer_index);

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq);
EmbeddingSequence decode_embedding(std::span<const std::uint8_t> bytes);

void write_embedding_file(const EmbeddingSequence& seq,
                          const std::filesystem::path& path);
EmbeddingSequence read_embedding_file(const std::filesystem::path& path);

// Directory of embedding files. Loaded sequences are memoized; lookups are
// safe from multiple threads.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(const std::string& recording_id,
                                 std::uint32_t layer) const;
  bool contains(const std::string& recording_id, std::uint32_t layer) const;

  std::shared_ptr<const EmbeddingSequence> load(const std::string& recording_id,
                                                std::uint32_t layer) const;

  // Layer indices present on disk for a recording, ascending.
  std::vector<std::uint32_t> layers_for(const std::string& recording_id) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::string, std::uint32_t>,
                   std::shared_ptr<const EmbeddingSequence>>
      cache_;
};

}  // namespace layerprobe
