#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mcanet/model.hpp"
#include "mcanet/tensor.hpp"

namespace mcanet {

// Layout (little-endian):
//   "MCAN" u16 version u32 count
//   per entry: u16 name_len, name, u8 dtype (0 f32, 1 f64), u8 rank, rank x u32 dims, payload
//   u32 CRC32 of every byte between the header and the CRC
inline constexpr std::uint16_t kArchiveVersion = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct ArchiveEntry {
  std::string name;
  AnyTensor tensor;
};

class TensorArchive {
 public:
  template <typename T>
  void add(std::string name, Tensor<T> tensor) {
    entries_.push_back({std::move(name), AnyTensor(std::move(tensor))});
  }
  const ArchiveEntry* find(std::string_view name) const;

  // Throws FormatError when the entry is missing or stored with another dtype.
  template <typename T>
  const Tensor<T>& get(std::string_view name) const;

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  std::vector<ArchiveEntry>& entries() { return entries_; }

 private:
  std::vector<ArchiveEntry> entries_;
};

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::span<const std::uint8_t> bytes);

void write_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_archive(const std::filesystem::path& path);

struct CheckpointMeta {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // global optimizer steps taken
  std::uint64_t seed = 0;
  std::string config_text;
};

// Entries: param/<name>, momentum/<name>, buffer/<name>, meta/epoch,
// meta/step, meta/seed, meta/config.
template <typename T>
TensorArchive make_checkpoint(Model<T>& model, const CheckpointMeta& meta);

// Copies every tensor into the model; FormatError on a missing entry or a
// shape mismatch. Returns the stored metadata.
template <typename T>
CheckpointMeta restore_checkpoint(Model<T>& model, const TensorArchive& archive);

CheckpointMeta read_checkpoint_meta(const TensorArchive& archive);

template <typename T>
void save_checkpoint(Model<T>& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  write_archive(make_checkpoint(model, meta), path);
}

template <typename T>
CheckpointMeta load_checkpoint(Model<T>& model, const std::filesystem::path& path) {
  return restore_checkpoint(model, read_archive(path));
}

}  // namespace mcanet
