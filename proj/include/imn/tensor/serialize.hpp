#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "imn/tensor/tensor.hpp"

// Binary tensor layout (all fields little-endian):
//   uint32 rank
//   uint32 extent[rank]
//   float32 data[prod(extent)]   row-major

namespace imn {

class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_f32_le(std::ostream& out, std::span<const float> values);

/// Reads exactly `count` floats; throws SerializationError naming expected and
/// actual byte counts on a short read.
std::vector<float> read_f32_le(std::istream& in, std::size_t count);

void write_u32_le(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32_le(std::istream& in);

void write_tensor(std::ostream& out, const Tensor<float>& tensor);
Tensor<float> read_tensor(std::istream& in);

/// Size in bytes of `write_tensor` output for a tensor of this shape.
std::size_t serialized_size(const Shape& shape);

}  // namespace imn
