#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "balsel/errors.hpp"

namespace balsel {

namespace detail {
inline std::size_t checked_extent(std::int32_t height, std::int32_t width) {
  if (height <= 0 || width <= 0) {
    throw ShapeError("grid dimensions must be strictly positive");
  }
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}
}  // namespace detail

// Dense row-major H x W grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::int32_t height, std::int32_t width, T fill = T{})
      : height_(height), width_(width), data_(detail::checked_extent(height, width), fill) {}

  std::int32_t height() const { return height_; }
  std::int32_t width() const { return width_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::int32_t row, std::int32_t col) { return data_[index(row, col)]; }
  const T& operator()(std::int32_t row, std::int32_t col) const { return data_[index(row, col)]; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(std::int32_t row, std::int32_t col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  std::int32_t height_ = 0;
  std::int32_t width_ = 0;
  std::vector<T> data_;
};

}  // namespace balsel
