#pragma once

// Dense, strided conv, and transposed conv with reverse-mode gradients.
// GEMM goes through Eigen; the per-sample loops are OpenMP-parallel with a
// fixed chunk partition so parameter-gradient reductions sum in the same
// order no matter how many threads run.

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

#include "psvae/tape.hpp"

namespace psvae {

namespace detail {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using MapCM = Eigen::Map<MatCM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;
template <class T>
using CMapCM = Eigen::Map<const MatCM<T>>;

// Fixed partition count for deterministic gradient reductions.
inline constexpr int kGradChunks = 8;

inline int chunk_begin(int n, int c) { return static_cast<int>((static_cast<int64_t>(n) * c) / kGradChunks); }

// Gather padded K x K patches of src[C,H,W] into a column-major matrix
// cols[(C*K*K) x (Ho*Wo)], zero-filling out-of-range taps.
template <class T>
void im2col(const T* src, int C, int H, int W, int K, int stride, int pad, int Ho, int Wo, T* cols) {
  const int R = C * K * K;
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      T* col = cols + static_cast<int64_t>(oy * Wo + ox) * R;
      for (int c = 0; c < C; ++c) {
        const T* plane = src + static_cast<int64_t>(c) * H * W;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * stride - pad + kx;
            col[(c * K + ky) * K + kx] =
                (iy >= 0 && iy < H && ix >= 0 && ix < W) ? plane[static_cast<int64_t>(iy) * W + ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into dst[C,H,W].
template <class T>
void col2im_add(const T* cols, int C, int H, int W, int K, int stride, int pad, int Ho, int Wo, T* dst) {
  const int R = C * K * K;
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const T* col = cols + static_cast<int64_t>(oy * Wo + ox) * R;
      for (int c = 0; c < C; ++c) {
        T* plane = dst + static_cast<int64_t>(c) * H * W;
        for (int ky = 0; ky < K; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < K; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            plane[static_cast<int64_t>(iy) * W + ix] += col[(c * K + ky) * K + kx];
          }
        }
      }
    }
  }
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// y[N,Fout] = x[N,Fin] . w[Fout,Fin]^T + b[Fout]
template <class T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  const auto& sx = x.val().shape;
  const auto& sw = w.val().shape;
  detail::require(sx.size() == 2 && sw.size() == 2 && sx[1] == sw[1] &&
                      b.val().shape == std::vector<int>{sw[0]},
                  "dense: shape mismatch x" + shape_str(sx) + " w" + shape_str(sw) + " b" +
                      shape_str(b.val().shape));
  const int n = sx[0], fin = sx[1], fout = sw[0];
  Tensor<T> out({n, fout});
  {
    detail::CMapRM<T> xm(x.val().ptr(), n, fin);
    detail::CMapRM<T> wm(w.val().ptr(), fout, fin);
    detail::MapRM<T> ym(out.ptr(), n, fout);
    ym.noalias() = xm * wm.transpose();
    detail::CMapRM<T> bm(b.val().ptr(), 1, fout);
    ym.rowwise() += bm.row(0);
  }
  const int ix = x.id, iw = w.id, ib = b.id;
  int id = x.tape->add_op(std::move(out), {ix, iw, ib}, [ix, iw, ib, n, fin, fout](Tape<T>& tp, int self) {
    detail::CMapRM<T> gm(tp.grad(self).ptr(), n, fout);
    detail::CMapRM<T> xm(tp.val(ix).ptr(), n, fin);
    detail::CMapRM<T> wm(tp.val(iw).ptr(), fout, fin);
    if (T* dx = tp.grad_ptr(ix)) {
      detail::MapRM<T> dxm(dx, n, fin);
      dxm.noalias() += gm * wm;
    }
    if (T* dw = tp.grad_ptr(iw)) {
      detail::MapRM<T> dwm(dw, fout, fin);
      dwm.noalias() += gm.transpose() * xm;
    }
    if (T* db = tp.grad_ptr(ib)) {
      detail::MapRM<T> dbm(db, 1, fout);
      dbm.row(0) += gm.colwise().sum();
    }
  });
  return {x.tape, id};
}

// y[N,Cout,Ho,Wo] = conv(x[N,Cin,H,W], w[Cout,Cin,K,K]) + b, zero padding.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  const auto& sx = x.val().shape;
  const auto& sw = w.val().shape;
  detail::require(sx.size() == 4 && sw.size() == 4 && sx[1] == sw[1] &&
                      b.val().shape == std::vector<int>{sw[0]},
                  "conv2d: shape mismatch x" + shape_str(sx) + " w" + shape_str(sw));
  const int n = sx[0], cin = sx[1], h = sx[2], wd = sx[3];
  const int cout = sw[0], k = sw[2];
  detail::require(sw[3] == k, "conv2d: kernel must be square");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  detail::require(ho > 0 && wo > 0, "conv2d: input smaller than kernel");
  const int r = cin * k * k;
  const int64_t in_stride = static_cast<int64_t>(cin) * h * wd;
  const int64_t out_stride = static_cast<int64_t>(cout) * ho * wo;

  Tensor<T> out({n, cout, ho, wo});
  {
    const T* px = x.val().ptr();
    detail::CMapRM<T> wm(w.val().ptr(), cout, r);
    detail::CMapRM<T> bm(b.val().ptr(), 1, cout);
    T* po = out.ptr();
#pragma omp parallel
    {
      std::vector<T> cols(static_cast<size_t>(r) * ho * wo);
#pragma omp for schedule(static)
      for (int i = 0; i < n; ++i) {
        detail::im2col(px + i * in_stride, cin, h, wd, k, stride, pad, ho, wo, cols.data());
        detail::CMapCM<T> cm(cols.data(), r, ho * wo);
        detail::MapCM<T> ym(po + i * out_stride, ho * wo, cout);
        ym.noalias() = cm.transpose() * wm.transpose();
        ym.rowwise() += bm.row(0);
      }
    }
  }
  const int ix = x.id, iw = w.id, ib = b.id;
  int id = x.tape->add_op(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, n, cin, h, wd, cout, k, stride, pad, ho, wo, r, in_stride, out_stride](Tape<T>& tp, int self) {
        const T* g = tp.grad(self).ptr();
        const T* px = tp.val(ix).ptr();
        detail::CMapRM<T> wm(tp.val(iw).ptr(), cout, r);
        T* dx = tp.grad_ptr(ix);
        T* dw = tp.grad_ptr(iw);
        T* db = tp.grad_ptr(ib);

        if (dx) {
#pragma omp parallel
          {
            std::vector<T> dcols(static_cast<size_t>(r) * ho * wo);
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
              detail::CMapCM<T> gm(g + i * out_stride, ho * wo, cout);
              detail::MapCM<T> dcm(dcols.data(), r, ho * wo);
              dcm.noalias() = wm.transpose() * gm.transpose();
              detail::col2im_add(dcols.data(), cin, h, wd, k, stride, pad, ho, wo, dx + i * in_stride);
            }
          }
        }
        if (dw || db) {
          // Chunked partial sums, reduced in fixed order.
          std::vector<std::vector<T>> dw_part(detail::kGradChunks);
          std::vector<std::vector<T>> db_part(detail::kGradChunks);
#pragma omp parallel for schedule(static)
          for (int c = 0; c < detail::kGradChunks; ++c) {
            dw_part[static_cast<size_t>(c)].assign(static_cast<size_t>(cout) * r, T(0));
            db_part[static_cast<size_t>(c)].assign(static_cast<size_t>(cout), T(0));
            detail::MapRM<T> dwp(dw_part[static_cast<size_t>(c)].data(), cout, r);
            detail::MapRM<T> dbp(db_part[static_cast<size_t>(c)].data(), 1, cout);
            std::vector<T> cols(static_cast<size_t>(r) * ho * wo);
            const int i0 = detail::chunk_begin(n, c), i1 = detail::chunk_begin(n, c + 1);
            for (int i = i0; i < i1; ++i) {
              detail::im2col(px + i * in_stride, cin, h, wd, k, stride, pad, ho, wo, cols.data());
              detail::CMapCM<T> cm(cols.data(), r, ho * wo);
              detail::CMapCM<T> gm(g + i * out_stride, ho * wo, cout);
              dwp.noalias() += gm.transpose() * cm.transpose();
              dbp.row(0) += gm.colwise().sum();
            }
          }
          for (int c = 0; c < detail::kGradChunks; ++c) {
            if (dw)
              for (int64_t q = 0; q < static_cast<int64_t>(cout) * r; ++q) dw[q] += dw_part[static_cast<size_t>(c)][static_cast<size_t>(q)];
            if (db)
              for (int q = 0; q < cout; ++q) db[q] += db_part[static_cast<size_t>(c)][static_cast<size_t>(q)];
          }
        }
      });
  return {x.tape, id};
}

// Transposed conv, the adjoint map of conv2d with the same stride/pad.
// Weight layout: w[Cin,Cout,K,K]. Output spatial size (h-1)*stride - 2*pad + k.
template <class T>
Var<T> tconv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  const auto& sx = x.val().shape;
  const auto& sw = w.val().shape;
  detail::require(sx.size() == 4 && sw.size() == 4 && sx[1] == sw[0] &&
                      b.val().shape == std::vector<int>{sw[1]},
                  "tconv2d: shape mismatch x" + shape_str(sx) + " w" + shape_str(sw));
  const int n = sx[0], cin = sx[1], h = sx[2], wd = sx[3];
  const int cout = sw[1], k = sw[2];
  detail::require(sw[3] == k, "tconv2d: kernel must be square");
  const int hb = (h - 1) * stride - 2 * pad + k;
  const int wb = (wd - 1) * stride - 2 * pad + k;
  detail::require(hb > 0 && wb > 0, "tconv2d: degenerate output size");
  const int r = cout * k * k;
  const int64_t in_stride = static_cast<int64_t>(cin) * h * wd;
  const int64_t out_stride = static_cast<int64_t>(cout) * hb * wb;

  Tensor<T> out({n, cout, hb, wb});
  {
    const T* px = x.val().ptr();
    detail::CMapRM<T> wm(w.val().ptr(), cin, r);
    const T* pb = b.val().ptr();
    T* po = out.ptr();
#pragma omp parallel
    {
      std::vector<T> cols(static_cast<size_t>(r) * h * wd);
#pragma omp for schedule(static)
      for (int i = 0; i < n; ++i) {
        detail::CMapRM<T> xm(px + i * in_stride, cin, h * wd);
        detail::MapRM<T> cm(cols.data(), r, h * wd);
        cm.noalias() = wm.transpose() * xm;
        // col-major [r x (h*wd)] view of the same buffer built row-major:
        // transpose the GEMM instead of reshuffling memory.
        T* dst = po + i * out_stride;
        for (int c = 0; c < cout; ++c) {
          T* plane = dst + static_cast<int64_t>(c) * hb * wb;
          std::fill(plane, plane + static_cast<int64_t>(hb) * wb, pb[c]);
        }
        // scatter: cols element (row=r_idx, col=pos) lives at r_idx*(h*wd)+pos
        const int R = r;
        for (int oy = 0; oy < h; ++oy)
          for (int ox = 0; ox < wd; ++ox) {
            const int pos = oy * wd + ox;
            for (int c = 0; c < cout; ++c) {
              T* plane = dst + static_cast<int64_t>(c) * hb * wb;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= hb) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wb) continue;
                  plane[static_cast<int64_t>(iy) * wb + ix] += cols[static_cast<size_t>((c * k + ky) * k + kx) * (h * wd) + pos];
                }
              }
            }
          }
        (void)R;
      }
    }
  }
  const int ix = x.id, iw = w.id, ib = b.id;
  int id = x.tape->add_op(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, n, cin, h, wd, cout, k, stride, pad, hb, wb, r, in_stride, out_stride](Tape<T>& tp, int self) {
        const T* g = tp.grad(self).ptr();
        const T* px = tp.val(ix).ptr();
        detail::CMapRM<T> wm(tp.val(iw).ptr(), cin, r);
        T* dx = tp.grad_ptr(ix);
        T* dw = tp.grad_ptr(iw);
        T* db = tp.grad_ptr(ib);

        if (dx) {
#pragma omp parallel
          {
            std::vector<T> dcols(static_cast<size_t>(r) * h * wd);
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
              detail::im2col(g + i * out_stride, cout, hb, wb, k, stride, pad, h, wd, dcols.data());
              // dcols is col-major [r x (h*wd)]
              detail::CMapCM<T> dcm(dcols.data(), r, h * wd);
              detail::MapRM<T> dxm(dx + i * in_stride, cin, h * wd);
              dxm.noalias() += wm * dcm;
            }
          }
        }
        if (dw || db) {
          std::vector<std::vector<T>> dw_part(detail::kGradChunks);
          std::vector<std::vector<T>> db_part(detail::kGradChunks);
#pragma omp parallel for schedule(static)
          for (int c = 0; c < detail::kGradChunks; ++c) {
            dw_part[static_cast<size_t>(c)].assign(static_cast<size_t>(cin) * r, T(0));
            db_part[static_cast<size_t>(c)].assign(static_cast<size_t>(cout), T(0));
            detail::MapRM<T> dwp(dw_part[static_cast<size_t>(c)].data(), cin, r);
            std::vector<T> dcols(static_cast<size_t>(r) * h * wd);
            const int i0 = detail::chunk_begin(n, c), i1 = detail::chunk_begin(n, c + 1);
            for (int i = i0; i < i1; ++i) {
              detail::im2col(g + i * out_stride, cout, hb, wb, k, stride, pad, h, wd, dcols.data());
              detail::CMapCM<T> dcm(dcols.data(), r, h * wd);
              detail::CMapRM<T> xm(px + i * in_stride, cin, h * wd);
              dwp.noalias() += xm * dcm.transpose();
              const T* gi = g + i * out_stride;
              for (int q = 0; q < cout; ++q) {
                typename detail::Acc<T>::type acc = 0;
                const T* plane = gi + static_cast<int64_t>(q) * hb * wb;
                for (int64_t p = 0; p < static_cast<int64_t>(hb) * wb; ++p) acc += plane[p];
                db_part[static_cast<size_t>(c)][static_cast<size_t>(q)] += static_cast<T>(acc);
              }
            }
          }
          for (int c = 0; c < detail::kGradChunks; ++c) {
            if (dw)
              for (int64_t q = 0; q < static_cast<int64_t>(cin) * r; ++q) dw[q] += dw_part[static_cast<size_t>(c)][static_cast<size_t>(q)];
            if (db)
              for (int q = 0; q < cout; ++q) db[q] += db_part[static_cast<size_t>(c)][static_cast<size_t>(q)];
          }
        }
      });
  return {x.tape, id};
}

}  // namespace psvae
