#include "moescore/mfv.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <iterator>

namespace moescore {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'M', 'F', 'V', '1'};
constexpr std::size_t kHeaderFixed = 5;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}

std::string kind_name(MfvErrorKind kind) {
  switch (kind) {
    case MfvErrorKind::kBadMagic: return "bad magic";
    case MfvErrorKind::kBadRank: return "bad rank";
    case MfvErrorKind::kZeroDim: return "zero dimension";
    case MfvErrorKind::kTruncatedHeader: return "truncated header";
    case MfvErrorKind::kTruncatedPayload: return "truncated payload";
    case MfvErrorKind::kTrailingBytes: return "trailing bytes";
  }
  return "format error";
}

}  // namespace

MfvFormatError::MfvFormatError(MfvErrorKind kind, std::size_t offset, const std::string& what)
    : Error("MFV1 " + kind_name(kind) + " at byte offset " + std::to_string(offset) + ": " + what),
      kind_(kind),
      offset_(offset) {}

std::size_t mfv_encoded_size(const Shape& shape) {
  return kHeaderFixed + 4 * shape.size() + 4 * shape_numel(shape);
}

std::vector<std::uint8_t> encode_mfv(const Tensor& tensor) {
  const Shape& shape = tensor.shape();
  if (shape.empty() || shape.size() > kMfvMaxRank) {
    throw DimensionError("MFV1 supports rank 1..3, got " + shape_to_string(shape));
  }
  std::vector<std::uint8_t> out;
  out.reserve(mfv_encoded_size(shape));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) {
    if (d > UINT32_MAX) throw DimensionError("MFV1 extent exceeds uint32: " + shape_to_string(shape));
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_mfv(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < kMagic.size()) {
    throw MfvFormatError(MfvErrorKind::kTruncatedHeader, bytes.size(), source);
  }
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (bytes[i] != kMagic[i]) throw MfvFormatError(MfvErrorKind::kBadMagic, 0, source);
  }
  if (bytes.size() < kHeaderFixed) {
    throw MfvFormatError(MfvErrorKind::kTruncatedHeader, bytes.size(), source);
  }
  const std::size_t rank = bytes[4];
  if (rank < 1 || rank > kMfvMaxRank) {
    throw MfvFormatError(MfvErrorKind::kBadRank, 4,
                         source + " (rank " + std::to_string(rank) + ")");
  }
  const std::size_t header = kHeaderFixed + 4 * rank;
  if (bytes.size() < header) {
    throw MfvFormatError(MfvErrorKind::kTruncatedHeader, bytes.size(), source);
  }
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t at = kHeaderFixed + 4 * i;
    shape[i] = get_u32(bytes, at);
    if (shape[i] == 0) throw MfvFormatError(MfvErrorKind::kZeroDim, at, source);
  }
  const std::size_t expected = header + 4 * shape_numel(shape);
  if (bytes.size() < expected) {
    throw MfvFormatError(MfvErrorKind::kTruncatedPayload, bytes.size(),
                         source + " (expected " + std::to_string(expected) + " bytes for " +
                             shape_to_string(shape) + ")");
  }
  if (bytes.size() > expected) {
    throw MfvFormatError(MfvErrorKind::kTrailingBytes, expected,
                         source + " (" + std::to_string(bytes.size() - expected) +
                             " extra bytes)");
  }
  std::vector<double> values(shape_numel(shape));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  }
  return Tensor(std::move(shape), std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_mfv(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_bytes(path, encode_mfv(tensor));
}

Tensor read_mfv(const std::filesystem::path& path) {
  return decode_mfv(read_file_bytes(path), path.string());
}

}  // namespace moescore
