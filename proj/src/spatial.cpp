// Copyright 2026 The darklight Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Spatial ops on [C, H, W] tensors. Convolution lowers to tiled im2col + GEMM;
// the backward pass rebuilds the column tiles instead of storing them.

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>

#include "darklight/tensor.hpp"

namespace darklight {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected [C,H,W], got " +
                                shape_to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, h_out, w_out;
  int stride, pad;
  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return h_out * w_out; }
};

// Columns for output rows [oy0, oy1); `cols` is [rows(), (oy1 - oy0) * w_out].
void im2col(const double* in, const ConvGeometry& g, std::size_t oy0, std::size_t oy1, double* cols) {
  const std::size_t ncols = (oy1 - oy0) * g.w_out;
  const auto ih = static_cast<std::ptrdiff_t>(g.h);
  const auto iw = static_cast<std::ptrdiff_t>(g.w);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* plane = in + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++r) {
        double* dst = cols + r * ncols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy) * g.stride + static_cast<std::ptrdiff_t>(ky) - g.pad;
          double* row = dst + (oy - oy0) * g.w_out;
          if (y < 0 || y >= ih) {
            std::fill(row, row + g.w_out, 0.0);
            continue;
          }
          const double* src = plane + y * iw;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox) * g.stride + static_cast<std::ptrdiff_t>(kx) - g.pad;
            row[ox] = (x >= 0 && x < iw) ? src[x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, std::size_t oy0, std::size_t oy1,
                double* in_grad) {
  const std::size_t ncols = (oy1 - oy0) * g.w_out;
  const auto ih = static_cast<std::ptrdiff_t>(g.h);
  const auto iw = static_cast<std::ptrdiff_t>(g.w);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* plane = in_grad + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++r) {
        const double* src = cols + r * ncols;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy) * g.stride + static_cast<std::ptrdiff_t>(ky) - g.pad;
          if (y < 0 || y >= ih) continue;
          const double* row = src + (oy - oy0) * g.w_out;
          double* dst = plane + y * iw;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox) * g.stride + static_cast<std::ptrdiff_t>(kx) - g.pad;
            if (x >= 0 && x < iw) dst[x] += row[ox];
          }
        }
      }
    }
  }
}

// Output rows per GEMM tile; keeps the column buffer cache-resident.
std::size_t tile_rows(const ConvGeometry& g) {
  constexpr std::size_t kTileCols = 1024;
  return std::max<std::size_t>(1, kTileCols / g.w_out);
}

// Per-thread column buffer reused across calls; contents are always overwritten.
double* scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// A 1x1, stride-1, unpadded convolution reads its input directly as the column matrix.
bool pointwise(const ConvGeometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using StridedMapConst = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
  require_chw(input, "conv2d");
  if (weight.rank() != 4) {
    throw std::invalid_argument("conv2d: weight must be [C_out,C_in,k,k], got " +
                                shape_to_string(weight.shape()));
  }
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || k % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square with odd side, got " +
                                shape_to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input.dim(0)) +
                                " channels but weight " + shape_to_string(weight.shape()) +
                                " expects " + std::to_string(weight.dim(1)));
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1 and padding >= 0");
  }
  ConvGeometry g{};
  g.c_in = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.c_out = weight.dim(0);
  g.k = k;
  g.stride = stride;
  g.pad = padding;
  auto extent = [&](std::size_t n, const char* axis) {
    const auto span = static_cast<std::ptrdiff_t>(n) + 2 * padding - static_cast<std::ptrdiff_t>(k);
    if (span < 0 || span % stride != 0) {
      throw std::invalid_argument(std::string("conv2d: ") + axis + " extent " + std::to_string(n) +
                                  " with k=" + std::to_string(k) + " pad=" + std::to_string(padding) +
                                  " stride=" + std::to_string(stride) +
                                  " gives a non-integral output size");
    }
    return static_cast<std::size_t>(span / stride + 1);
  };
  g.h_out = extent(g.h, "height");
  g.w_out = extent(g.w, "width");

  const auto co = static_cast<Eigen::Index>(g.c_out);
  const auto kr = static_cast<Eigen::Index>(g.rows());
  const auto n_all = static_cast<Eigen::Index>(g.cols());
  const std::size_t tile = tile_rows(g);
  std::vector<double> out(g.c_out * g.cols());
  if (pointwise(g)) {
    Map(out.data(), co, n_all).noalias() =
        MapConst(weight.data().data(), co, kr) * MapConst(input.data().data(), kr, n_all);
  } else {
    double* cols = scratch(g.rows() * tile * g.w_out);
    MapConst wm(weight.data().data(), co, kr);
    for (std::size_t oy0 = 0; oy0 < g.h_out; oy0 += tile) {
      const std::size_t oy1 = std::min(g.h_out, oy0 + tile);
      const auto nc = static_cast<Eigen::Index>((oy1 - oy0) * g.w_out);
      im2col(input.data().data(), g, oy0, oy1, cols);
      MapConst cm(cols, kr, nc);
      StridedMap om(out.data() + oy0 * g.w_out, co, nc, Eigen::OuterStride<>(n_all));
      om.noalias() = wm * cm;
    }
  }

  auto nin = input.node();
  auto nw = weight.node();
  return make_result(
      Shape{g.c_out, g.h_out, g.w_out}, std::move(out), {&input, &weight},
      [nin, nw, g, tile, co, kr, n_all](const detail::Node& o) {
        MapConst wm(nw->value.data(), co, kr);
        if (pointwise(g)) {
          MapConst gm(o.grad.data(), co, n_all);
          if (nw->requires_grad) {
            Map(nw->ensure_grad().data(), co, kr).noalias() +=
                gm * MapConst(nin->value.data(), kr, n_all).transpose();
          }
          if (nin->requires_grad) {
            Map(nin->ensure_grad().data(), kr, n_all).noalias() += wm.transpose() * gm;
          }
          return;
        }
        double* cols = scratch(g.rows() * tile * g.w_out);
        RowMat dcols;
        for (std::size_t oy0 = 0; oy0 < g.h_out; oy0 += tile) {
          const std::size_t oy1 = std::min(g.h_out, oy0 + tile);
          const auto nc = static_cast<Eigen::Index>((oy1 - oy0) * g.w_out);
          StridedMapConst gm(o.grad.data() + oy0 * g.w_out, co, nc, Eigen::OuterStride<>(n_all));
          if (nw->requires_grad) {
            im2col(nin->value.data(), g, oy0, oy1, cols);
            MapConst cm(cols, kr, nc);
            Map gw(nw->ensure_grad().data(), co, kr);
            gw.noalias() += gm * cm.transpose();
          }
          if (nin->requires_grad) {
            dcols.resize(kr, nc);
            dcols.noalias() = wm.transpose() * gm;
            col2im_add(dcols.data(), g, oy0, oy1, nin->ensure_grad().data());
          }
        }
      });
}

Tensor avg_pool2(const Tensor& t) {
  require_chw(t, "avg_pool2");
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (h % 2 || w % 2) {
    throw std::invalid_argument("avg_pool2: spatial extents must be even, got " +
                                shape_to_string(t.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  auto in = t.data();
  std::vector<double> out(c * ho * wo);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        const double* p = in.data() + k * h * w + 2 * y * w + 2 * x;
        out[(k * ho + y) * wo + x] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  auto nin = t.node();
  return make_result(Shape{c, ho, wo}, std::move(out), {&t},
                     [nin, c, h, w, ho, wo](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t k = 0; k < c; ++k) {
                         for (std::size_t y = 0; y < ho; ++y) {
                           for (std::size_t x = 0; x < wo; ++x) {
                             const double g = 0.25 * o.grad[(k * ho + y) * wo + x];
                             double* p = gi.data() + k * h * w + 2 * y * w + 2 * x;
                             p[0] += g;
                             p[1] += g;
                             p[w] += g;
                             p[w + 1] += g;
                           }
                         }
                       }
                     });
}

Tensor upsample_nearest(const Tensor& t, std::size_t factor) {
  require_chw(t, "upsample_nearest");
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  if (factor == 1) return t;
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const std::size_t ho = h * factor, wo = w * factor;
  auto in = t.data();
  std::vector<double> out(c * ho * wo);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        out[(k * ho + y) * wo + x] = in[(k * h + y / factor) * w + x / factor];
      }
    }
  }
  auto nin = t.node();
  return make_result(Shape{c, ho, wo}, std::move(out), {&t},
                     [nin, c, h, w, ho, wo, factor](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t k = 0; k < c; ++k) {
                         for (std::size_t y = 0; y < ho; ++y) {
                           for (std::size_t x = 0; x < wo; ++x) {
                             gi[(k * h + y / factor) * w + x / factor] += o.grad[(k * ho + y) * wo + x];
                           }
                         }
                       }
                     });
}

namespace {

Tensor forward_difference(const Tensor& t, bool along_x) {
  require_chw(t, along_x ? "diff_x" : "diff_y");
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (h < 2 || w < 2) {
    throw std::invalid_argument("spatial_gradient: H and W must be >= 2, got " +
                                shape_to_string(t.shape()));
  }
  const std::size_t step = along_x ? 1 : w;
  auto in = t.data();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if ((along_x && x + 1 == w) || (!along_x && y + 1 == h)) continue;
        const std::size_t i = (k * h + y) * w + x;
        out[i] = in[i + step] - in[i];
      }
    }
  }
  auto nin = t.node();
  return make_result(t.shape(), std::move(out), {&t},
                     [nin, c, h, w, step, along_x](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t k = 0; k < c; ++k) {
                         for (std::size_t y = 0; y < h; ++y) {
                           for (std::size_t x = 0; x < w; ++x) {
                             if ((along_x && x + 1 == w) || (!along_x && y + 1 == h)) continue;
                             const std::size_t i = (k * h + y) * w + x;
                             gi[i + step] += o.grad[i];
                             gi[i] -= o.grad[i];
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor diff_x(const Tensor& t) { return forward_difference(t, true); }
Tensor diff_y(const Tensor& t) { return forward_difference(t, false); }

Tensor separable_filter_valid(const Tensor& t, std::span<const double> kernel) {
  require_chw(t, "separable_filter_valid");
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2), k = kernel.size();
  if (k == 0 || h < k || w < k) {
    throw std::invalid_argument("separable_filter_valid: image " + shape_to_string(t.shape()) +
                                " smaller than window " + std::to_string(k));
  }
  const std::size_t ho = h - k + 1, wo = w - k + 1;
  std::vector<double> taps(kernel.begin(), kernel.end());
  auto in = t.data();
  std::vector<double> tmp(c * h * wo, 0.0);
  std::vector<double> out(c * ho * wo, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = in.data() + (ch * h + y) * w;
      double* dst = tmp.data() + (ch * h + y) * wo;
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += taps[j] * src[x + j];
        dst[x] = acc;
      }
    }
    for (std::size_t y = 0; y < ho; ++y) {
      double* dst = out.data() + (ch * ho + y) * wo;
      for (std::size_t i = 0; i < k; ++i) {
        const double* src = tmp.data() + (ch * h + y + i) * wo;
        for (std::size_t x = 0; x < wo; ++x) dst[x] += taps[i] * src[x];
      }
    }
  }
  auto nin = t.node();
  return make_result(
      Shape{c, ho, wo}, std::move(out), {&t},
      [nin, taps, c, h, w, ho, wo, k](const detail::Node& o) {
        auto& gi = nin->ensure_grad();
        std::vector<double> gtmp(h * wo);
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::fill(gtmp.begin(), gtmp.end(), 0.0);
          for (std::size_t y = 0; y < ho; ++y) {
            const double* g = o.grad.data() + (ch * ho + y) * wo;
            for (std::size_t i = 0; i < k; ++i) {
              double* dst = gtmp.data() + (y + i) * wo;
              for (std::size_t x = 0; x < wo; ++x) dst[x] += taps[i] * g[x];
            }
          }
          for (std::size_t y = 0; y < h; ++y) {
            const double* g = gtmp.data() + y * wo;
            double* dst = gi.data() + (ch * h + y) * w;
            for (std::size_t x = 0; x < wo; ++x) {
              for (std::size_t j = 0; j < k; ++j) dst[x + j] += taps[j] * g[x];
            }
          }
        }
      });
}

}  // namespace darklight
