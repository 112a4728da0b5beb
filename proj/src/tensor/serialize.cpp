#include "imn/tensor/serialize.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>
#include <string>

namespace imn {
namespace {

std::array<char, 4> to_le_bytes(std::uint32_t v) {
  return {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF), static_cast<char>((v >> 16) & 0xFF),
          static_cast<char>((v >> 24) & 0xFF)};
}

std::uint32_t from_le_bytes(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void write_u32_le(std::ostream& out, std::uint32_t value) {
  const auto bytes = to_le_bytes(value);
  out.write(bytes.data(), bytes.size());
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (in.gcount() != 4) {
    throw SerializationError("truncated stream: expected 4 bytes, got " + std::to_string(in.gcount()));
  }
  return from_le_bytes(bytes);
}

void write_f32_le(std::ostream& out, std::span<const float> values) {
  std::vector<char> buffer(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bytes = to_le_bytes(std::bit_cast<std::uint32_t>(values[i]));
    std::copy(bytes.begin(), bytes.end(), buffer.begin() + static_cast<std::ptrdiff_t>(i * 4));
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count) {
  std::vector<unsigned char> buffer(count * 4);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != buffer.size()) {
    throw SerializationError("truncated tensor data: expected " + std::to_string(buffer.size()) + " bytes, got " +
                             std::to_string(got));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(from_le_bytes(buffer.data() + i * 4));
  return values;
}

void write_tensor(std::ostream& out, const Tensor<float>& tensor) {
  write_u32_le(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto e : tensor.shape()) write_u32_le(out, static_cast<std::uint32_t>(e));
  write_f32_le(out, tensor.data());
}

Tensor<float> read_tensor(std::istream& in) {
  const auto rank = read_u32_le(in);
  if (rank == 0 || rank > kMaxRank) {
    throw SerializationError("tensor header declares unsupported rank " + std::to_string(rank));
  }
  Shape shape(rank);
  for (auto& e : shape) {
    e = read_u32_le(in);
    if (e == 0) throw SerializationError("tensor header declares a zero extent");
  }
  auto data = read_f32_le(in, numel(shape));
  return Tensor<float>(std::move(shape), std::move(data));
}

std::size_t serialized_size(const Shape& shape) { return 4 * (1 + shape.size()) + 4 * numel(shape); }

}  // namespace imn
