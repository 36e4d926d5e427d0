#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mcanet {

// Dense row-major 0/1 matrix, [rows = samples, cols = classes].
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> values;

  LabelMatrix() = default;
  LabelMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  bool operator==(const LabelMatrix&) const = default;
};

}  // namespace mcanet
