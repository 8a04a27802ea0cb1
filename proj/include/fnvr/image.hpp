#pragma once

#include <cstdint>
#include <vector>

namespace fnvr {

// Dense interleaved image, row-major, origin top-left.
template <class T>
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c) {
    data.assign(static_cast<size_t>(w) * h * c, T(0));
  }

  T& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  T at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
};

}  // namespace fnvr
