#include "fgrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fgrad/errors.hpp"

namespace fgrad::ops {

namespace {

constexpr std::size_t kDepthBlock = 128;
constexpr std::size_t kColBlock = 256;
// Register tile of the micro-kernel.
constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 4;

// C[i, :] += sum_r A(i, r) * B[r, :] for i < m, r < k. A is read through
// a_at(i, r) and output rows through c_row(i), so callers can transpose A or
// scatter rows across buffers without copying. A is packed per depth block
// into kMr-row panels; each kMr x kNr tile of C stays in registers across the
// depth block. Every C element accumulates over r in ascending order
// regardless of the tiling.
template <class AAt, class CRow>
void gemm_blocked(AAt a_at, const double* b, CRow c_row, std::size_t m, std::size_t k,
                  std::size_t p) {
  const std::size_t panels = (m + kMr - 1) / kMr;
  std::vector<double> apack(panels * kMr * std::min(k, kDepthBlock));
  for (std::size_t r0 = 0; r0 < k; r0 += kDepthBlock) {
    const std::size_t kb = std::min(k, r0 + kDepthBlock) - r0;
    for (std::size_t pi = 0; pi < panels; ++pi) {
      double* dst = apack.data() + pi * kMr * kb;
      for (std::size_t r = 0; r < kb; ++r) {
        for (std::size_t ii = 0; ii < kMr; ++ii) {
          const std::size_t i = pi * kMr + ii;
          dst[r * kMr + ii] = i < m ? a_at(i, r0 + r) : 0.0;
        }
      }
    }
    for (std::size_t j0 = 0; j0 < p; j0 += kColBlock) {
      const std::size_t j1 = std::min(p, j0 + kColBlock);
      for (std::size_t pi = 0; pi < panels; ++pi) {
        const double* ap = apack.data() + pi * kMr * kb;
        const std::size_t i0 = pi * kMr;
        const std::size_t rows = std::min(kMr, m - i0);
        double* c[kMr];
        for (std::size_t ii = 0; ii < rows; ++ii) c[ii] = c_row(i0 + ii);
        std::size_t j = j0;
        if (rows == kMr) {
          for (; j + kNr <= j1; j += kNr) {
            double acc[kMr][kNr];
            for (std::size_t ii = 0; ii < kMr; ++ii)
              for (std::size_t jj = 0; jj < kNr; ++jj) acc[ii][jj] = c[ii][j + jj];
            const double* bp = b + r0 * p + j;
            for (std::size_t r = 0; r < kb; ++r, bp += p) {
              for (std::size_t ii = 0; ii < kMr; ++ii)
                for (std::size_t jj = 0; jj < kNr; ++jj) acc[ii][jj] += ap[r * kMr + ii] * bp[jj];
            }
            for (std::size_t ii = 0; ii < kMr; ++ii)
              for (std::size_t jj = 0; jj < kNr; ++jj) c[ii][j + jj] = acc[ii][jj];
          }
        }
        // ragged edge
        for (std::size_t ii = 0; ii < rows; ++ii) {
          for (std::size_t r = 0; r < kb; ++r) {
            const double av = ap[r * kMr + ii];
            const double* brow = b + (r0 + r) * p;
            for (std::size_t jj = j; jj < j1; ++jj) c[ii][jj] += av * brow[jj];
          }
        }
      }
    }
  }
}

// C[m x p] += A[m x k] * B[k x p]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t p) {
  gemm_blocked([=](std::size_t i, std::size_t r) { return a[i * k + r]; }, b,
               [=](std::size_t i) { return c + i * p; }, m, k, p);
}

// C[m x p] += A^T * B with A [k x m], B [k x p].
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                 std::size_t p) {
  gemm_blocked([=](std::size_t i, std::size_t r) { return a[r * m + i]; }, b,
               [=](std::size_t i) { return c + i * p; }, m, k, p);
}

// Two left operands against one right operand in a single pass over B:
// C1 += A1 * B and C2 += A2 * B, each [m x k] * [k x p].
void gemm_pair_acc(const double* a1, const double* a2, const double* b, double* c1, double* c2,
                   std::size_t m, std::size_t k, std::size_t p) {
  gemm_blocked(
      [=](std::size_t i, std::size_t r) { return i < m ? a1[i * k + r] : a2[(i - m) * k + r]; }, b,
      [=](std::size_t i) { return i < m ? c1 + i * p : c2 + (i - m) * p; }, 2 * m, k, p);
}

void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t i1 = std::min(rows, i0 + kTile);
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class Fn>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(x[i], y[i]);
  return out;
}

template <class Fn>
Tensor map(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(x[i]);
  return out;
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, oh, ow;
  std::size_t patch() const { return c * 9; }
  std::size_t plane() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& ker) {
  if (in.size() != 4 || ker.size() != 4) {
    throw DimensionError("conv2d: expected 4-D input and kernel, got " + shape_str(in) + " and " +
                         shape_str(ker));
  }
  if (ker[2] != 3 || ker[3] != 3) {
    throw DimensionError("conv2d: kernel must be 3x3, got " + shape_str(ker));
  }
  if (in[1] != ker[1]) {
    throw DimensionError("conv2d: channel mismatch between input " + shape_str(in) +
                         " and kernel " + shape_str(ker));
  }
  if (in[2] < 3 || in[3] < 3) {
    throw DimensionError("conv2d: spatial extent below 3 in input " + shape_str(in));
  }
  return {in[0], in[1], in[2], in[3], ker[0], in[2] - 2, in[3] - 2};
}

// cols[(ch*9 + ky*3 + kx) x (y*ow + x)] = image[ch, y+ky, x+kx]
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    const double* plane = image + ch * g.h * g.w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = cols + ((ch * 3 + ky) * 3 + kx) * g.plane();
        for (std::size_t y = 0; y < g.oh; ++y) {
          const double* src = plane + (y + ky) * g.w + kx;
          std::copy(src, src + g.ow, dst + y * g.ow);
        }
      }
    }
  }
}

void col2im_acc(const double* cols, const ConvGeometry& g, double* image) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    double* plane = image + ch * g.h * g.w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = cols + ((ch * 3 + ky) * 3 + kx) * g.plane();
        for (std::size_t y = 0; y < g.oh; ++y) {
          double* dst = plane + (y + ky) * g.w + kx;
          const double* row = src + y * g.ow;
          for (std::size_t x = 0; x < g.ow; ++x) dst[x] += row[x];
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  gemm_acc(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, p);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn", "left operand");
  require_rank(b, 2, "matmul_tn", "right operand");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: leading extents disagree for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t k = a.dim(0), m = a.dim(1), p = b.dim(1);
  Tensor out({m, p});
  gemm_tn_acc(a.data().data(), b.data().data(), out.mutable_data().data(), k, m, p);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt", "left operand");
  require_rank(b, 2, "matmul_nt", "right operand");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: trailing extents disagree for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(0);
  std::vector<double> bt(k * p);
  transpose(b.data().data(), bt.data(), p, k);
  Tensor out({m, p});
  gemm_acc(a.data().data(), bt.data(), out.mutable_data().data(), m, k, p);
  return out;
}

DualResult matmul_jvp(const Tensor& a, const Tensor& a_dot, const Tensor& b, const Tensor& b_dot) {
  if (a_dot.empty() && b_dot.empty()) return {matmul(a, b), Tensor()};
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  if ((!a_dot.empty() && a_dot.shape() != a.shape()) ||
      (!b_dot.empty() && b_dot.shape() != b.shape())) {
    throw DimensionError("matmul: tangent shape does not match its primal");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  DualResult r{Tensor({m, p}), Tensor({m, p})};
  double* primal = r.primal.mutable_data().data();
  double* tangent = r.tangent.mutable_data().data();
  if (!a_dot.empty()) {
    gemm_pair_acc(a.data().data(), a_dot.data().data(), b.data().data(), primal, tangent, m, k, p);
  } else {
    gemm_acc(a.data().data(), b.data().data(), primal, m, k, p);
  }
  if (!b_dot.empty()) gemm_acc(a.data().data(), b_dot.data().data(), tangent, m, k, p);
  return r;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return map(a, [s](double x) { return x + s; });
}

Tensor add_scaled(const Tensor& a, const Tensor& b, double s) {
  return zip(a, b, "add_scaled", [s](double x, double y) { return x + s * y; });
}

void axpy_inplace(Tensor& a, const Tensor& b, double s) {
  require_same_shape(a, b, "axpy");
  auto x = a.mutable_data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += s * y[i];
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: element counts disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias", "input");
  if (bias.numel() != x.dim(1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit input " +
                         shape_str(x.shape()));
  }
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  auto b = bias.data();
  const std::size_t f = x.dim(1);
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t j = 0; j < f; ++j) o[r * f + j] = in[r * f + j] + b[j];
  return out;
}

Tensor sum_rows(const Tensor& x) {
  require_rank(x, 2, "sum_rows", "input");
  const std::size_t f = x.dim(1);
  Tensor out({f});
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t j = 0; j < f; ++j) o[j] += in[r * f + j];
  return out;
}

Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor relu_mask(const Tensor& values, const Tensor& mask_source) {
  return zip(values, mask_source, "relu_mask",
             [](double v, double m) { return m > 0.0 ? v : 0.0; });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape());
  Tensor out({g.n, g.o, g.oh, g.ow});
  std::vector<double> cols(g.patch() * g.plane());
  const double* in = input.data().data();
  const double* ker = kernel.data().data();
  double* o = out.mutable_data().data();
  for (std::size_t img = 0; img < g.n; ++img) {
    im2col(in + img * g.c * g.h * g.w, g, cols.data());
    gemm_acc(ker, cols.data(), o + img * g.o * g.plane(), g.o, g.patch(), g.plane());
  }
  return out;
}

DualResult conv2d_jvp(const Tensor& input, const Tensor& input_dot, const Tensor& kernel,
                      const Tensor& kernel_dot) {
  if (input_dot.empty() && kernel_dot.empty()) return {conv2d(input, kernel), Tensor()};
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape());
  if ((!input_dot.empty() && input_dot.shape() != input.shape()) ||
      (!kernel_dot.empty() && kernel_dot.shape() != kernel.shape())) {
    throw DimensionError("conv2d: tangent shape does not match its primal");
  }
  DualResult r{Tensor({g.n, g.o, g.oh, g.ow}), Tensor({g.n, g.o, g.oh, g.ow})};
  std::vector<double> cols(g.patch() * g.plane());
  const double* ker = kernel.data().data();
  double* primal = r.primal.mutable_data().data();
  double* tangent = r.tangent.mutable_data().data();
  const std::size_t in_stride = g.c * g.h * g.w, out_stride = g.o * g.plane();
  for (std::size_t img = 0; img < g.n; ++img) {
    im2col(input.data().data() + img * in_stride, g, cols.data());
    double* po = primal + img * out_stride;
    double* to = tangent + img * out_stride;
    // the unfolded input serves both the primal and the kernel-tangent term
    if (!kernel_dot.empty()) {
      gemm_pair_acc(ker, kernel_dot.data().data(), cols.data(), po, to, g.o, g.patch(), g.plane());
    } else {
      gemm_acc(ker, cols.data(), po, g.o, g.patch(), g.plane());
    }
    if (!input_dot.empty()) {
      im2col(input_dot.data().data() + img * in_stride, g, cols.data());
      gemm_acc(ker, cols.data(), to, g.o, g.patch(), g.plane());
    }
  }
  return r;
}

Tensor conv2d_input_grad(const Tensor& out_grad, const Tensor& kernel, const Shape& input_shape) {
  const ConvGeometry g = conv_geometry(input_shape, kernel.shape());
  const Shape expect{g.n, g.o, g.oh, g.ow};
  if (out_grad.shape() != expect) {
    throw DimensionError("conv2d_input_grad: output gradient " + shape_str(out_grad.shape()) +
                         " does not match expected " + shape_str(expect));
  }
  Tensor dx(input_shape);
  std::vector<double> cols(g.patch() * g.plane());
  const double* dy = out_grad.data().data();
  const double* ker = kernel.data().data();
  double* d = dx.mutable_data().data();
  for (std::size_t img = 0; img < g.n; ++img) {
    std::ranges::fill(cols, 0.0);
    gemm_tn_acc(ker, dy + img * g.o * g.plane(), cols.data(), g.o, g.patch(), g.plane());
    col2im_acc(cols.data(), g, d + img * g.c * g.h * g.w);
  }
  return dx;
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& out_grad, const Shape& kernel_shape) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel_shape);
  const Shape expect{g.n, g.o, g.oh, g.ow};
  if (out_grad.shape() != expect) {
    throw DimensionError("conv2d_kernel_grad: output gradient " + shape_str(out_grad.shape()) +
                         " does not match expected " + shape_str(expect));
  }
  Tensor dk(kernel_shape);
  std::vector<double> cols(g.patch() * g.plane());
  std::vector<double> cols_t(cols.size());
  const double* in = input.data().data();
  const double* dy = out_grad.data().data();
  double* d = dk.mutable_data().data();
  for (std::size_t img = 0; img < g.n; ++img) {
    im2col(in + img * g.c * g.h * g.w, g, cols.data());
    transpose(cols.data(), cols_t.data(), g.patch(), g.plane());
    gemm_acc(dy + img * g.o * g.plane(), cols_t.data(), d, g.o, g.plane(), g.patch());
  }
  return dk;
}

PoolResult maxpool2d(const Tensor& input) {
  require_rank(input, 4, "maxpool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2d: spatial extents must be even, got " +
                         shape_str(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult res{Tensor({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
  auto o = res.output.mutable_data();
  auto in = input.data();
  std::size_t out_idx = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
        const std::size_t first = base + 2 * y * w + 2 * x;
        const std::size_t window[4] = {first, first + 1, first + w, first + w + 1};
        std::size_t best = window[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (in[window[k]] > in[best]) best = window[k];
        }
        o[out_idx] = in[best];
        res.argmax[out_idx] = best;
      }
    }
  }
  return res;
}

Tensor gather(const Tensor& values, std::span<const std::size_t> argmax, const Shape& out_shape) {
  if (shape_numel(out_shape) != argmax.size()) {
    throw DimensionError("gather: index count does not match output shape " +
                         shape_str(out_shape));
  }
  Tensor out(out_shape);
  auto o = out.mutable_data();
  auto v = values.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) o[i] = v[argmax[i]];
  return out;
}

Tensor scatter_add(const Tensor& values, std::span<const std::size_t> argmax,
                   const Shape& in_shape) {
  if (values.numel() != argmax.size()) {
    throw DimensionError("scatter_add: " + std::to_string(values.numel()) + " values for " +
                         std::to_string(argmax.size()) + " indices");
  }
  Tensor out(in_shape);
  auto o = out.mutable_data();
  auto v = values.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) o[argmax[i]] += v[i];
  return out;
}

namespace {

void check_nll_inputs(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "logsoftmax_nll", "logits");
  if (labels.size() != logits.dim(0)) {
    throw DimensionError("logsoftmax_nll: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  const int classes = static_cast<int>(logits.dim(1));
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || labels[b] >= classes) {
      throw IndexError("logsoftmax_nll: label " + std::to_string(labels[b]) + " at row " +
                       std::to_string(b) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

double logsoftmax_nll(const Tensor& logits, std::span<const int> labels) {
  check_nll_inputs(logits, labels);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    const double* row = z.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    total += std::log(s) - (row[labels[b]] - mx);
  }
  return total / static_cast<double>(rows);
}

Tensor logsoftmax_nll_grad(const Tensor& logits, std::span<const int> labels) {
  check_nll_inputs(logits, labels);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  Tensor out(logits.shape());
  auto o = out.mutable_data();
  auto z = logits.data();
  for (std::size_t b = 0; b < rows; ++b) {
    const double* row = z.data() + b * k;
    double* orow = o.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    for (std::size_t j = 0; j < k; ++j) orow[j] = orow[j] / s * inv_rows;
    orow[labels[b]] -= inv_rows;
  }
  return out;
}

}  // namespace fgrad::ops
