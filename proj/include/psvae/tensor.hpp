#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace psvae {

// Raised when a loss component or gradient stops being finite; training
// halts on it and keeps the last good checkpoint.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Scalars use shape {1}.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s)
      : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}
  Tensor(std::vector<int> s, T fill)
      : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

  static Tensor scalar(T v) { return Tensor({1}, v); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool allocated() const { return !data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  void release() {
    data.clear();
    data.shrink_to_fit();
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <class T>
void check_shape(const Tensor<T>& t, const std::vector<int>& expect, const char* where) {
  if (t.shape != expect) {
    throw std::invalid_argument(std::string(where) + ": expected shape " + shape_str(expect) +
                                ", got " + shape_str(t.shape));
  }
}

}  // namespace psvae
