#include "balgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "balgan/errors.hpp"

namespace balgan {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin > end || end > static_cast<std::size_t>(shape_[0])) {
    throw ShapeError("row slice out of range for shape " + shape_to_string(shape_));
  }
  Shape s = shape_;
  s[0] = static_cast<int>(end - begin);
  const std::size_t row = shape_[0] == 0 ? 0 : data_.size() / static_cast<std::size_t>(shape_[0]);
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                         data_.begin() + static_cast<std::ptrdiff_t>(end * row));
  return Tensor(std::move(s), std::move(out));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape s{static_cast<int>(items.size())};
  const Shape& inner = items.front().shape();
  s.insert(s.end(), inner.begin(), inner.end());
  Tensor out(s);
  const std::size_t n = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != inner) {
      throw ShapeError("stack: shape " + shape_to_string(items[i].shape()) + " differs from " +
                       shape_to_string(inner));
    }
    std::memcpy(out.ptr() + i * n, items[i].ptr(), n * sizeof(float));
  }
  return out;
}

}  // namespace balgan
