// convoice/checkpoint.cpp

#include "convoice/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

namespace convoice {
namespace {

static_assert(std::endian::native == std::endian::little, "CVCK I/O assumes a little-endian host");

constexpr std::uint8_t kFloat32 = 0;
constexpr std::uint8_t kBytes = 1;

template <typename U>
void Put(std::vector<unsigned char>& out, U v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename U>
  U Get(const std::string& what) {
    U v;
    std::memcpy(&v, Take(sizeof(U), what), sizeof(U));
    return v;
  }
  const unsigned char* Take(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            "file truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

void PutEntryHeader(std::vector<unsigned char>& out, const std::string& name, std::uint8_t dtype,
                    const Dims& dims) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw CheckpointError(CheckpointError::Kind::kBadEntry, "tensor name too long: " + name.substr(0, 32));
  }
  if (dims.size() > 255) throw CheckpointError(CheckpointError::Kind::kBadEntry, name + ": too many dims");
  Put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  Put<std::uint8_t>(out, dtype);
  Put<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
  for (std::size_t d : dims) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw CheckpointError(CheckpointError::Kind::kBadEntry, name + ": dimension too large");
    }
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
}

}  // namespace

std::vector<unsigned char> EncodeTensorFile(const TensorFile& file) {
  std::vector<unsigned char> out{'C', 'V', 'C', 'K'};
  Put<std::uint32_t>(out, kCheckpointVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size() + (file.config ? 1 : 0)));
  if (file.config) {
    PutEntryHeader(out, kConfigEntry, kBytes, {file.config->size()});
    out.insert(out.end(), file.config->begin(), file.config->end());
  }
  for (const auto& [name, t] : file.tensors) {
    if (name == kConfigEntry) {
      throw CheckpointError(CheckpointError::Kind::kBadEntry, "tensor may not be named __config__");
    }
    PutEntryHeader(out, name, kFloat32, t.dims());
    const auto* p = reinterpret_cast<const unsigned char*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  return out;
}

TensorFile DecodeTensorFile(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "CVCK", 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic, "bad magic (not a CVCK file)");
  }
  r.Take(4, "magic");
  const auto version = r.Get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersionMismatch,
                          "format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.Get<std::uint32_t>("entry count");
  TensorFile file;
  std::set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string where = "entry " + std::to_string(e);
    const auto name_len = r.Get<std::uint16_t>(where + " name length");
    const unsigned char* np = r.Take(name_len, where + " name");
    std::string name(reinterpret_cast<const char*>(np), name_len);
    if (!seen.insert(name).second) {
      throw CheckpointError(CheckpointError::Kind::kDuplicateName, "duplicate tensor name '" + name + "'");
    }
    const auto dtype = r.Get<std::uint8_t>(name + " dtype");
    const auto ndim = r.Get<std::uint8_t>(name + " ndim");
    Dims dims(ndim);
    std::size_t count_elems = 1;
    for (auto& d : dims) {
      d = r.Get<std::uint32_t>(name + " dims");
      if (d == 0) throw CheckpointError(CheckpointError::Kind::kBadEntry, name + ": zero-length dimension");
      count_elems *= d;
    }
    if (dtype == kBytes) {
      if (name != kConfigEntry || ndim != 1) {
        throw CheckpointError(CheckpointError::Kind::kBadEntry, name + ": byte entries are reserved for __config__");
      }
      const unsigned char* p = r.Take(count_elems, name + " payload");
      file.config = std::string(reinterpret_cast<const char*>(p), count_elems);
    } else if (dtype == kFloat32) {
      if (name == kConfigEntry) throw CheckpointError(CheckpointError::Kind::kBadEntry, "__config__ must be bytes");
      if (count_elems > r.remaining() / sizeof(float)) {
        throw CheckpointError(CheckpointError::Kind::kTruncated, "file truncated in payload of '" + name + "'");
      }
      const unsigned char* p = r.Take(count_elems * sizeof(float), name + " payload");
      std::vector<float> values(count_elems);
      std::memcpy(values.data(), p, count_elems * sizeof(float));
      file.tensors.emplace(name, Tensor<float>(dims, std::move(values)));
    } else {
      throw CheckpointError(CheckpointError::Kind::kBadEntry,
                            name + ": unknown dtype " + std::to_string(static_cast<int>(dtype)));
    }
  }
  if (r.remaining() != 0) {
    throw CheckpointError(CheckpointError::Kind::kBadEntry,
                          std::to_string(r.remaining()) + " trailing bytes after the last entry");
  }
  return file;
}

std::vector<unsigned char> ReadBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void WriteBytes(std::span<const unsigned char> bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

void WriteTensorFile(const TensorFile& file, const std::filesystem::path& path) {
  WriteBytes(EncodeTensorFile(file), path);
}

TensorFile ReadTensorFile(const std::filesystem::path& path) { return DecodeTensorFile(ReadBytes(path)); }

}  // namespace convoice
