#include "lrc/store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

namespace {

using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32_le(std::uint8_t* dst, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(dst, values.data(), values.size_bytes());
  } else {
    for (float v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) *dst++ = static_cast<std::uint8_t>(bits >> (8 * i));
    }
  }
}

void get_f32_le(std::span<float> dst, const std::uint8_t* src) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!dst.empty()) std::memcpy(dst.data(), src, dst.size_bytes());
  } else {
    for (auto& v : dst) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(*src++) << (8 * i);
      v = std::bit_cast<float>(bits);
    }
  }
}

[[noreturn]] void bad_manifest(const std::string& detail) {
  throw Error(ErrorKind::MalformedManifest, "malformed manifest: " + detail);
}

template <typename T>
T require(const ordered_json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end()) bad_manifest("entry " + std::to_string(index) + " missing \"" + key + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_manifest("entry " + std::to_string(index) + " has invalid \"" + key + "\"");
  }
}

}  // namespace

const char* to_string(Role role) {
  switch (role) {
    case Role::ConvWeight: return "conv-weight";
    case Role::Bias: return "bias";
    case Role::Other: return "other";
    case Role::SvdFactor: return "svd-factor";
  }
  return "other";
}

Role role_from_string(std::string_view s) {
  if (s == "conv-weight") return Role::ConvWeight;
  if (s == "bias") return Role::Bias;
  if (s == "other") return Role::Other;
  if (s == "svd-factor") return Role::SvdFactor;
  throw Error(ErrorKind::InvalidArgument, "unknown role \"" + std::string(s) + "\"");
}

void validate_entry_name(std::string_view name) {
  if (name.empty()) throw Error(ErrorKind::InvalidArgument, "tensor name must be nonempty");
  for (unsigned char c : name) {
    if (c < 0x20 || c == 0x7f)
      throw Error(ErrorKind::InvalidArgument, "tensor name contains a control character");
  }
}

void WeightStore::add(std::string name, Tensor tensor, Role role,
                      std::map<std::string, std::string> attrs) {
  validate_entry_name(name);
  if (tensor.rank() == 0) throw Error(ErrorKind::ShapeMismatch, "tensor \"" + name + "\" has no shape");
  if (role == Role::ConvWeight && tensor.rank() != 4)
    throw Error(ErrorKind::ShapeMismatch, "conv-weight \"" + name + "\" must be rank 4, got " +
                                              shape_to_string(tensor.shape()));
  if (find(name)) throw Error(ErrorKind::NameCollision, "duplicate tensor name \"" + name + "\"");
  entries_.push_back({std::move(name), std::move(tensor), role, std::move(attrs)});
}

const StoreEntry* WeightStore::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

StoreEntry* WeightStore::find(std::string_view name) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

bool WeightStore::remove(std::string_view name) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

bool bitwise_equal(const WeightStore& a, const WeightStore& b) noexcept {
  if (a.metadata_ != b.metadata_ || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.role != y.role || x.attrs != y.attrs || !bitwise_equal(x.tensor, y.tensor))
      return false;
  }
  return true;
}

std::vector<std::uint8_t> serialize_store(const WeightStore& store) {
  ordered_json manifest;
  manifest["entries"] = ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& e : store.entries()) {
    ordered_json j;
    j["name"] = e.name;
    j["shape"] = e.tensor.shape();
    j["dtype"] = "f32";
    j["role"] = to_string(e.role);
    j["offset"] = offset;
    const std::uint64_t nbytes = static_cast<std::uint64_t>(e.tensor.numel()) * sizeof(float);
    j["nbytes"] = nbytes;
    if (!e.attrs.empty()) j["attrs"] = e.attrs;
    manifest["entries"].push_back(std::move(j));
    offset += nbytes;
  }
  manifest["metadata"] = ordered_json::object();
  for (const auto& [k, v] : store.metadata()) manifest["metadata"][k] = v;

  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t blob_start = out.size();
  out.resize(blob_start + offset);
  std::uint8_t* dst = out.data() + blob_start;
  for (const auto& e : store.entries()) {
    put_f32_le(dst, e.tensor.data());
    dst += e.tensor.data().size_bytes();
  }
  return out;
}

WeightStore deserialize_store(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::TruncatedHeader, "truncated header: file shorter than 8 bytes");
  const std::uint64_t manifest_len = get_u64_le(bytes.data());
  if (manifest_len > bytes.size() - 8)
    throw Error(ErrorKind::TruncatedManifest, "truncated manifest: header declares " +
                                                  std::to_string(manifest_len) + " bytes, " +
                                                  std::to_string(bytes.size() - 8) + " available");
  const auto* text_begin = reinterpret_cast<const char*>(bytes.data() + 8);
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(text_begin, text_begin + manifest_len);
  } catch (const nlohmann::json::parse_error& e) {
    bad_manifest(std::string("invalid JSON: ") + e.what());
  }
  if (!manifest.is_object()) bad_manifest("top level is not an object");
  auto entries_it = manifest.find("entries");
  if (entries_it == manifest.end() || !entries_it->is_array()) bad_manifest("missing \"entries\" array");

  const std::span<const std::uint8_t> blob = bytes.subspan(8 + manifest_len);
  WeightStore store;
  std::uint64_t expected_offset = 0;
  std::size_t index = 0;
  for (const auto& j : *entries_it) {
    if (!j.is_object()) bad_manifest("entry " + std::to_string(index) + " is not an object");
    auto name = require<std::string>(j, "name", index);
    auto shape = require<Shape>(j, "shape", index);
    auto dtype = require<std::string>(j, "dtype", index);
    auto role_text = require<std::string>(j, "role", index);
    auto offset = require<std::uint64_t>(j, "offset", index);
    auto nbytes = require<std::uint64_t>(j, "nbytes", index);
    if (dtype != "f32")
      throw Error(ErrorKind::UnsupportedDtype, "unsupported dtype \"" + dtype + "\" for \"" + name + "\"");
    Role role;
    try {
      role = role_from_string(role_text);
    } catch (const Error&) {
      bad_manifest("entry \"" + name + "\" has unknown role \"" + role_text + "\"");
    }
    std::map<std::string, std::string> attrs;
    if (auto a = j.find("attrs"); a != j.end()) {
      try {
        attrs = a->get<std::map<std::string, std::string>>();
      } catch (const nlohmann::json::exception&) {
        bad_manifest("entry \"" + name + "\" has invalid \"attrs\"");
      }
    }
    std::int64_t numel = 0;
    try {
      numel = shape_numel(shape);
    } catch (const Error& e) {
      bad_manifest("entry \"" + name + "\": " + e.what());
    }
    if (nbytes != static_cast<std::uint64_t>(numel) * sizeof(float))
      throw Error(ErrorKind::LengthMismatch, "length mismatch: \"" + name + "\" declares " +
                                                 std::to_string(nbytes) + " bytes for shape " +
                                                 shape_to_string(shape));
    if (offset != expected_offset)
      throw Error(ErrorKind::LengthMismatch, "length mismatch: \"" + name + "\" offset " +
                                                 std::to_string(offset) + ", expected " +
                                                 std::to_string(expected_offset));
    if (offset + nbytes > blob.size())
      throw Error(ErrorKind::TruncatedBlob, "truncated blob: \"" + name + "\" needs bytes up to " +
                                                std::to_string(offset + nbytes) + ", blob has " +
                                                std::to_string(blob.size()));
    std::vector<float> data(static_cast<std::size_t>(numel));
    get_f32_le(data, blob.data() + offset);
    try {
      store.add(std::move(name), Tensor(std::move(shape), std::move(data)), role, std::move(attrs));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NameCollision) throw;
      bad_manifest(e.what());
    }
    expected_offset += nbytes;
    ++index;
  }
  if (expected_offset != blob.size())
    throw Error(ErrorKind::LengthMismatch, "length mismatch: blob has " + std::to_string(blob.size()) +
                                               " bytes, manifest accounts for " +
                                               std::to_string(expected_offset));
  if (auto m = manifest.find("metadata"); m != manifest.end()) {
    try {
      store.metadata() = m->get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception&) {
      bad_manifest("\"metadata\" must map strings to strings");
    }
  }
  return store;
}

std::uint64_t save_store(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_store(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
  return bytes.size();
}

WeightStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "failed reading " + path.string());
  return deserialize_store(bytes);
}

}  // namespace lrc
