#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moescore/errors.hpp"
#include "moescore/tensor.hpp"

// MFV1 feature files.
//
//   offset 0      4 bytes   magic "MFV1"
//   offset 4      1 byte    rank R, 1 <= R <= 3
//   offset 5      4*R bytes dims, uint32 little-endian, each >= 1
//   offset 5+4R   4*N bytes payload, N = prod(dims), float32 little-endian,
//                           row-major
//
// The file ends exactly after the payload. Values are held as double in
// memory; writing rounds to float32, which is the only lossy step.
namespace moescore {

enum class MfvErrorKind {
  kBadMagic,
  kBadRank,
  kZeroDim,
  kTruncatedHeader,
  kTruncatedPayload,
  kTrailingBytes,
};

class MfvFormatError : public Error {
 public:
  MfvFormatError(MfvErrorKind kind, std::size_t offset, const std::string& what);
  MfvErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  MfvErrorKind kind_;
  std::size_t offset_;
};

inline constexpr std::size_t kMfvMaxRank = 3;

std::size_t mfv_encoded_size(const Shape& shape);

std::vector<std::uint8_t> encode_mfv(const Tensor& tensor);
// `source` is only used in error messages.
Tensor decode_mfv(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

void write_mfv(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_mfv(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace moescore
