#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lrc/tensor.hpp"

namespace lrc {

enum class Role { ConvWeight, Bias, Other, SvdFactor };

const char* to_string(Role role);
Role role_from_string(std::string_view s);

struct StoreEntry {
  std::string name;
  Tensor tensor;
  Role role = Role::Other;
  // Per-entry attributes; svd factors record "factor", "orig_shape", "reshape".
  std::map<std::string, std::string> attrs;
};

/// Ordered named-tensor collection backing the .wstore container.
class WeightStore {
 public:
  // Throws NameCollision on duplicate names, InvalidArgument on empty names,
  // names with control characters, or a conv-weight that is not rank 4.
  void add(std::string name, Tensor tensor, Role role = Role::Other,
           std::map<std::string, std::string> attrs = {});

  const std::vector<StoreEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const StoreEntry* find(std::string_view name) const;
  StoreEntry* find(std::string_view name);
  bool remove(std::string_view name);

  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  friend bool bitwise_equal(const WeightStore& a, const WeightStore& b) noexcept;

 private:
  std::vector<StoreEntry> entries_;
  std::map<std::string, std::string> metadata_;
};

void validate_entry_name(std::string_view name);

std::vector<std::uint8_t> serialize_store(const WeightStore& store);
WeightStore deserialize_store(std::span<const std::uint8_t> bytes);

/// Writes the container and returns the number of bytes written.
std::uint64_t save_store(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_store(const std::filesystem::path& path);

}  // namespace lrc
