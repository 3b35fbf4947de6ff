#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mrdn/params.hpp"

namespace mrdn {

/// Named, shaped parameter store.
///
/// Binary layout, little-endian throughout:
///   "MRDN" | u32 version (1) | u32 entry count
///   per entry: u32 name length | name (utf-8) | u8 dtype (1 = f32)
///              | u32 rank | rank x u32 dims | prod(dims) x f32
///   u32 CRC-32 of every preceding byte
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint8_t kFloat32 = 1;

  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
  };

  // Throws CheckpointError on duplicate names or a payload/dims mismatch.
  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> values);
  const Entry* find(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

  // Writes to a temporary sibling and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  // CRC-32 over the serialized payload of a single entry's values, used to
  // compare parameter sets without holding both in memory.
  static std::uint32_t values_checksum(std::span<const float> values);

 private:
  std::vector<Entry> entries_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// Writes bytes to `path` through a temporary file and rename.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const ParamList<T>& params);

// Appends params to an existing checkpoint.
template <typename T>
void append_to_checkpoint(Checkpoint& ckpt, const ParamList<T>& params);

/// Copies checkpoint values into `params` by name. Entries whose names start
/// with one of `ignored_prefixes` may be present without a matching parameter.
/// Any missing, misshapen or unexpected name raises CheckpointError listing the
/// first five offenders.
template <typename T>
void load_params(const ParamList<T>& params, const Checkpoint& ckpt,
                 std::span<const std::string> ignored_prefixes = {});

}  // namespace mrdn
