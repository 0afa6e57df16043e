#include "diqa/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "diqa/parallel.hpp"

namespace diqa {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns per im2col chunk. Fixed so that the summation order of weight gradients
// never depends on the number of worker threads.
constexpr std::int64_t kColumnBudget = 4096;

struct ConvDims {
  std::int64_t batch, in_channels, height, width, out_channels;
  std::int64_t plane() const { return height * width; }
  std::int64_t taps() const { return in_channels * 9; }
  std::int64_t samples_per_chunk() const { return std::max<std::int64_t>(1, kColumnBudget / plane()); }
  std::int64_t chunks() const { return (batch + samples_per_chunk() - 1) / samples_per_chunk(); }
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& weight) {
  ConvDims d{};
  if (input.rank() == 3) {
    d = {1, input.dim(0), input.dim(1), input.dim(2), 0};
  } else if (input.rank() == 4) {
    d = {input.dim(0), input.dim(1), input.dim(2), input.dim(3), 0};
  } else {
    throw DimensionError("conv3x3: input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw DimensionError("conv3x3: weight must be [C_out,C_in,3,3], got " + shape_str(weight.shape()));
  }
  if (weight.dim(1) != d.in_channels) {
    throw DimensionError("conv3x3: channel axis mismatch, input has " + std::to_string(d.in_channels) +
                         " channels but weight expects " + std::to_string(weight.dim(1)));
  }
  d.out_channels = weight.dim(0);
  return d;
}

// Row r = c*9 + ky*3 + kx, column j = local_sample*H*W + y*W + x.
template <typename T>
void im2col(const T* input, const ConvDims& d, std::int64_t first, std::int64_t count, T* cols) {
  const std::int64_t h = d.height, w = d.width, plane = d.plane();
  const std::int64_t ncols = count * plane;
  for (std::int64_t c = 0; c < d.in_channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (c * 9 + ky * 3 + kx) * ncols;
        for (std::int64_t s = 0; s < count; ++s) {
          const T* src = input + ((first + s) * d.in_channels + c) * plane;
          T* dst = row + s * plane;
          for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = y + ky - 1;
            T* out = dst + y * w;
            if (sy < 0 || sy >= h) {
              std::fill(out, out + w, T(0));
              continue;
            }
            const T* in_row = src + sy * w;
            for (std::int64_t x = 0; x < w; ++x) {
              const std::int64_t sx = x + kx - 1;
              out[x] = (sx < 0 || sx >= w) ? T(0) : in_row[sx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, std::int64_t first, std::int64_t count, T* grad_input) {
  const std::int64_t h = d.height, w = d.width, plane = d.plane();
  const std::int64_t ncols = count * plane;
  for (std::int64_t c = 0; c < d.in_channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (c * 9 + ky * 3 + kx) * ncols;
        for (std::int64_t s = 0; s < count; ++s) {
          T* dst = grad_input + ((first + s) * d.in_channels + c) * plane;
          const T* src = row + s * plane;
          for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (std::int64_t x = 0; x < w; ++x) {
              const std::int64_t sx = x + kx - 1;
              if (sx >= 0 && sx < w) dst[sy * w + sx] += src[y * w + x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
std::int64_t feature_rows(const BasicTensor<T>& input, std::int64_t in_dim, const char* what) {
  if (input.rank() == 1) {
    if (input.dim(0) != in_dim) {
      throw DimensionError(std::string(what) + ": input axis 0 has " + std::to_string(input.dim(0)) +
                           " features, weight expects " + std::to_string(in_dim));
    }
    return 1;
  }
  if (input.rank() == 2) {
    if (input.dim(1) != in_dim) {
      throw DimensionError(std::string(what) + ": input axis 1 has " + std::to_string(input.dim(1)) +
                           " features, weight expects " + std::to_string(in_dim));
    }
    return input.dim(0);
  }
  throw DimensionError(std::string(what) + ": input must be [D] or [N,D], got " + shape_str(input.shape()));
}

}  // namespace

template <typename T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  const ConvDims d = conv_dims(input, weight);
  if (bias.rank() != 1 || bias.dim(0) != d.out_channels) {
    throw DimensionError("conv3x3: bias must be [" + std::to_string(d.out_channels) + "], got " +
                         shape_str(bias.shape()));
  }
  Shape out_shape = input.shape();
  out_shape[input.rank() - 3] = d.out_channels;
  BasicTensor<T> output(out_shape);

  const std::int64_t per_chunk = d.samples_per_chunk();
  Eigen::Map<const RowMatrix<T>> w(weight.data().data(), d.out_channels, d.taps());
  parallel_for(static_cast<std::size_t>(d.chunks()), [&](std::size_t chunk) {
    const std::int64_t first = static_cast<std::int64_t>(chunk) * per_chunk;
    const std::int64_t count = std::min(per_chunk, d.batch - first);
    const std::int64_t ncols = count * d.plane();
    std::vector<T> cols(static_cast<std::size_t>(d.taps() * ncols));
    im2col(input.data().data(), d, first, count, cols.data());
    Eigen::Map<const RowMatrix<T>> col_mat(cols.data(), d.taps(), ncols);
    RowMatrix<T> result = w * col_mat;
    for (std::int64_t s = 0; s < count; ++s) {
      for (std::int64_t co = 0; co < d.out_channels; ++co) {
        T* dst = output.data().data() + ((first + s) * d.out_channels + co) * d.plane();
        const T* src = result.data() + co * ncols + s * d.plane();
        const T b = bias[static_cast<std::size_t>(co)];
        for (std::int64_t p = 0; p < d.plane(); ++p) dst[p] = src[p] + b;
      }
    }
  });
  return output;
}

template <typename T>
void conv3x3_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> grad_output,
                      std::span<T> grad_input, std::span<T> grad_weight, std::span<T> grad_bias) {
  const ConvDims d = conv_dims(input, weight);
  const std::int64_t per_chunk = d.samples_per_chunk();
  const std::size_t chunks = static_cast<std::size_t>(d.chunks());
  const std::size_t weight_size = static_cast<std::size_t>(d.out_channels * d.taps());
  if (grad_output.size() != static_cast<std::size_t>(d.batch * d.out_channels * d.plane())) {
    throw DimensionError("conv3x3 backward: output gradient has the wrong size");
  }
  const bool want_input = !grad_input.empty();
  const bool want_weight = !grad_weight.empty();
  const bool want_bias = !grad_bias.empty();
  const bool serial = worker_threads() <= 1 || chunks <= 1;

  Eigen::Map<const RowMatrix<T>> w(weight.data().data(), d.out_channels, d.taps());
  // Per-chunk partial weight/bias gradients, reduced below in chunk order.
  std::vector<std::vector<T>> partial_w(serial ? 1 : chunks);
  std::vector<std::vector<T>> partial_b(serial ? 1 : chunks);

  auto reduce_chunk = [&](std::size_t slot) {
    if (want_weight) {
      for (std::size_t i = 0; i < weight_size; ++i) grad_weight[i] += partial_w[slot][i];
    }
    if (want_bias) {
      for (std::int64_t co = 0; co < d.out_channels; ++co) grad_bias[co] += partial_b[slot][co];
    }
  };

  auto run_chunk = [&](std::size_t chunk, std::size_t slot) {
    const std::int64_t first = static_cast<std::int64_t>(chunk) * per_chunk;
    const std::int64_t count = std::min(per_chunk, d.batch - first);
    const std::int64_t ncols = count * d.plane();
    RowMatrix<T> dy(d.out_channels, ncols);
    for (std::int64_t s = 0; s < count; ++s) {
      for (std::int64_t co = 0; co < d.out_channels; ++co) {
        const T* src = grad_output.data() + ((first + s) * d.out_channels + co) * d.plane();
        std::copy(src, src + d.plane(), dy.data() + co * ncols + s * d.plane());
      }
    }
    if (want_weight) {
      std::vector<T> cols(static_cast<std::size_t>(d.taps() * ncols));
      im2col(input.data().data(), d, first, count, cols.data());
      Eigen::Map<const RowMatrix<T>> col_mat(cols.data(), d.taps(), ncols);
      partial_w[slot].resize(weight_size);
      Eigen::Map<RowMatrix<T>> pw(partial_w[slot].data(), d.out_channels, d.taps());
      pw.noalias() = dy * col_mat.transpose();
    }
    if (want_bias) {
      partial_b[slot].assign(static_cast<std::size_t>(d.out_channels), T(0));
      for (std::int64_t co = 0; co < d.out_channels; ++co) {
        T acc = T(0);
        const T* row = dy.data() + co * ncols;
        for (std::int64_t j = 0; j < ncols; ++j) acc += row[j];
        partial_b[slot][co] = acc;
      }
    }
    if (want_input) {
      RowMatrix<T> dcols = w.transpose() * dy;
      col2im_add(dcols.data(), d, first, count, grad_input.data());
    }
  };

  if (serial) {
    for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
      run_chunk(chunk, 0);
      reduce_chunk(0);
    }
    return;
  }
  parallel_for(chunks, [&](std::size_t chunk) { run_chunk(chunk, chunk); });
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) reduce_chunk(chunk);
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw DimensionError("maxpool2x2: input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t r = input.rank();
  const std::int64_t h = input.dim(r - 2), w = input.dim(r - 1);
  if (h % 2 != 0) throw DimensionError("maxpool2x2: height axis must be even, got " + std::to_string(h));
  if (w % 2 != 0) throw DimensionError("maxpool2x2: width axis must be even, got " + std::to_string(w));
  const std::int64_t planes = static_cast<std::int64_t>(input.size()) / (h * w);
  Shape out_shape = input.shape();
  out_shape[r - 2] = h / 2;
  out_shape[r - 1] = w / 2;
  PoolResult<T> result{BasicTensor<T>(out_shape), {}};
  result.argmax.resize(result.output.size());
  const T* in = input.data().data();
  std::size_t o = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t base = p * h * w;
    for (std::int64_t y = 0; y < h; y += 2) {
      for (std::int64_t x = 0; x < w; x += 2, ++o) {
        std::int64_t best = base + y * w + x;
        for (std::int64_t cand : {base + y * w + x + 1, base + (y + 1) * w + x, base + (y + 1) * w + x + 1}) {
          if (in[cand] > in[best]) best = cand;
        }
        result.output[o] = in[best];
        result.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return result;
}

template <typename T>
void maxpool2x2_backward(std::span<const std::uint32_t> argmax, std::span<const T> grad_output,
                         std::span<T> grad_input) {
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_output[i];
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
void relu_backward(const BasicTensor<T>& input, std::span<const T> grad_output, std::span<T> grad_input) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] > T(0)) grad_input[i] += grad_output[i];
  }
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  if (weight.rank() != 2) throw DimensionError("fc: weight must be [D_out,D_in], got " + shape_str(weight.shape()));
  const std::int64_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const std::int64_t rows = feature_rows(input, in_dim, "fc");
  if (bias.rank() != 1 || bias.dim(0) != out_dim) {
    throw DimensionError("fc: bias must be [" + std::to_string(out_dim) + "], got " + shape_str(bias.shape()));
  }
  BasicTensor<T> out(input.rank() == 1 ? Shape{out_dim} : Shape{rows, out_dim});
  Eigen::Map<const RowMatrix<T>> x(input.data().data(), rows, in_dim);
  Eigen::Map<const RowMatrix<T>> wm(weight.data().data(), out_dim, in_dim);
  Eigen::Map<RowMatrix<T>> y(out.data().data(), rows, out_dim);
  y.noalias() = x * wm.transpose();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < out_dim; ++c) y(r, c) += bias[static_cast<std::size_t>(c)];
  }
  return out;
}

template <typename T>
void fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> grad_output,
                 std::span<T> grad_input, std::span<T> grad_weight, std::span<T> grad_bias) {
  const std::int64_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const std::int64_t rows = feature_rows(input, in_dim, "fc backward");
  Eigen::Map<const RowMatrix<T>> x(input.data().data(), rows, in_dim);
  Eigen::Map<const RowMatrix<T>> wm(weight.data().data(), out_dim, in_dim);
  Eigen::Map<const RowMatrix<T>> dy(grad_output.data(), rows, out_dim);
  if (!grad_weight.empty()) {
    Eigen::Map<RowMatrix<T>> dw(grad_weight.data(), out_dim, in_dim);
    RowMatrix<T> partial = dy.transpose() * x;
    dw += partial;
  }
  if (!grad_bias.empty()) {
    for (std::int64_t c = 0; c < out_dim; ++c) {
      T acc = T(0);
      for (std::int64_t r = 0; r < rows; ++r) acc += dy(r, c);
      grad_bias[c] += acc;
    }
  }
  if (!grad_input.empty()) {
    Eigen::Map<RowMatrix<T>> dx(grad_input.data(), rows, in_dim);
    RowMatrix<T> partial = dy * wm;
    dx += partial;
  }
}

template <typename T>
DropoutResult<T> dropout_apply(const BasicTensor<T>& input, double keep, Mode mode, Rng& rng) {
  if (!(keep > 0.0 && keep <= 1.0)) throw ConfigError("dropout keep probability must lie in (0,1]");
  DropoutResult<T> result{BasicTensor<T>(input.shape()), std::vector<T>(input.size())};
  if (mode == Mode::kEval) {
    std::fill(result.mask.begin(), result.mask.end(), static_cast<T>(keep));
  } else {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (auto& m : result.mask) m = uniform(rng) < keep ? T(1) : T(0);
  }
  for (std::size_t i = 0; i < input.size(); ++i) result.output[i] = input[i] * result.mask[i];
  return result;
}

#define DIQA_INSTANTIATE_LAYERS(T)                                                                               \
  template BasicTensor<T> conv3x3_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template void conv3x3_backward(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>, std::span<T>, \
                                 std::span<T>, std::span<T>);                                                    \
  template PoolResult<T> maxpool2x2_forward(const BasicTensor<T>&);                                              \
  template void maxpool2x2_backward(std::span<const std::uint32_t>, std::span<const T>, std::span<T>);           \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                   \
  template void relu_backward(const BasicTensor<T>&, std::span<const T>, std::span<T>);                          \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template void fc_backward(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>, std::span<T>,      \
                            std::span<T>, std::span<T>);                                                         \
  template DropoutResult<T> dropout_apply(const BasicTensor<T>&, double, Mode, Rng&);

DIQA_INSTANTIATE_LAYERS(float)
DIQA_INSTANTIATE_LAYERS(double)

#undef DIQA_INSTANTIATE_LAYERS

}  // namespace diqa
