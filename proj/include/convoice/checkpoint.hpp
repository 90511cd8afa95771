// convoice/checkpoint.hpp
//
// CVCK tensor files. Little-endian layout:
//
//   "CVCK" | u32 version | u32 entry count | entries...
//   entry: u16 name length | name bytes | u8 dtype | u8 ndim | u32 dims[ndim] | payload
//
// dtype 0 is float32 (4 * prod(dims) bytes). dtype 1 is raw bytes and is
// used only for the "__config__" entry, which holds the model configuration
// as JSON text.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convoice/params.hpp"

namespace convoice {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigEntry = "__config__";

class CheckpointError : public FormatError {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kDuplicateName, kBadEntry };

  CheckpointError(Kind kind, const std::string& what) : FormatError("checkpoint: " + what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct TensorFile {
  ParamStore<float> tensors;
  std::optional<std::string> config;  // JSON text of "__config__"

  bool operator==(const TensorFile&) const = default;
};

std::vector<unsigned char> EncodeTensorFile(const TensorFile& file);
TensorFile DecodeTensorFile(std::span<const unsigned char> bytes);

void WriteTensorFile(const TensorFile& file, const std::filesystem::path& path);
TensorFile ReadTensorFile(const std::filesystem::path& path);

std::vector<unsigned char> ReadBytes(const std::filesystem::path& path);
void WriteBytes(std::span<const unsigned char> bytes, const std::filesystem::path& path);

}  // namespace convoice
