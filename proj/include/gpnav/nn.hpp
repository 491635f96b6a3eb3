#pragma once

// Minimal layers with explicit backward passes. Parameters live in one flat array per
// network; each layer only records its offset into it. Gradients are accumulated (+=) so a
// minibatch can be summed sample by sample.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace gpnav::nn {

template <class T>
T relu(T x) {
  return x > T(0) ? x : T(0);
}

template <class T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Fills [offset, offset+count) with U(-bound, bound).
template <class T, class Rng>
void uniform_fill(std::vector<T>& p, std::size_t offset, std::size_t count, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < count; ++i) p[offset + i] = static_cast<T>(u(rng));
}

/// y = W x + b with W stored row-major (out x in) followed by b.
struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t size() const { return out * in + out; }
  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + out * in; }

  template <class T>
  void forward(const T* p, const T* x, T* y) const {
    const T* W = p + offset;
    const T* b = W + out * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T* row = W + o * in;
      T acc = T(0);
#pragma omp simd reduction(+ : acc)
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc + b[o];
    }
  }

  /// dx may be null when the input gradient is not needed.
  template <class T>
  void backward(const T* p, const T* x, const T* dy, T* g, T* dx) const {
    const T* W = p + offset;
    T* gW = g + offset;
    T* gb = gW + out * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T d = dy[o];
      gb[o] += d;
      if (d == T(0)) continue;
      T* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
      if (dx) {
        const T* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += d * row[i];
      }
    }
  }

  template <class T, class Rng>
  void init(std::vector<T>& p, Rng& rng, double scale = 1.0) const {
    const double bound = scale / std::sqrt(static_cast<double>(in));
    uniform_fill(p, offset, out * in, bound, rng);
    uniform_fill(p, bias_offset(), out, bound, rng);
  }
};

/// 1-D convolution over a circular axis (beams wrap), "same" padding, given stride.
/// Input layout is channel-major (cin x length); weights are (cout x cin x kernel) then bias.
struct Conv1d {
  std::size_t cin = 1;
  std::size_t cout = 1;
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t length = 0;
  std::size_t offset = 0;

  std::size_t out_length() const { return (length + stride - 1) / stride; }
  std::size_t size() const { return cout * cin * kernel + cout; }
  std::size_t bias_offset() const { return offset + cout * cin * kernel; }


  // Padded input is stored per channel as `stride` phases so every tap reads contiguously:
  // tap (j, t) lives at phase t % stride, position j + t / stride.
  std::size_t phase_length() const { return out_length() + kernel / stride + 1; }
  std::size_t channel_stride() const { return stride * phase_length(); }

  template <class T>
  void pad(const T* x, T* xp) const {
    const std::size_t pl = phase_length();
    const std::size_t half = kernel / 2;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t r = 0; r < stride; ++r) {
        std::size_t idx = (r + length - half % length) % length;
        T* dst = xp + (c * stride + r) * pl;
        const T* src = x + c * length;
        for (std::size_t m = 0; m < pl; ++m) {
          dst[m] = src[idx];
          idx += stride;
          while (idx >= length) idx -= length;
        }
      }
  }

  template <class T>
  void forward(const T* p, const T* x, T* y) const {
    const T* W = p + offset;
    const T* b = p + bias_offset();
    const std::size_t lo = out_length();
    const std::size_t pl = phase_length();
    thread_local std::vector<T> xp;
    xp.resize(cin * channel_stride());
    pad(x, xp.data());
    for (std::size_t o = 0; o < cout; ++o) {
      T* yo = y + o * lo;
      for (std::size_t j = 0; j < lo; ++j) yo[j] = b[o];
      for (std::size_t c = 0; c < cin; ++c) {
        const T* w = W + (o * cin + c) * kernel;
        for (std::size_t t = 0; t < kernel; ++t) {
          const T* __restrict__ xs = xp.data() + (c * stride + t % stride) * pl + t / stride;
          T* __restrict__ yr = yo;
          const T wt = w[t];
          for (std::size_t j = 0; j < lo; ++j) yr[j] += wt * xs[j];
        }
      }
    }
  }

  template <class T>
  void backward(const T* p, const T* x, const T* dy, T* g, T* dx) const {
    const T* W = p + offset;
    T* gW = g + offset;
    T* gb = g + bias_offset();
    const std::size_t lo = out_length();
    const std::size_t pl = phase_length();
    const std::size_t ck = cin * kernel;
    thread_local std::vector<T> xp, dxp, col, dcol;
    xp.resize(cin * channel_stride());
    pad(x, xp.data());
    // col[j][c * kernel + t] = input tap (j, t) of channel c
    col.resize(lo * ck);
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t t = 0; t < kernel; ++t) {
        const T* xs = xp.data() + (c * stride + t % stride) * pl + t / stride;
        for (std::size_t j = 0; j < lo; ++j) col[j * ck + c * kernel + t] = xs[j];
      }
    if (dx) dcol.assign(lo * ck, T(0));
    for (std::size_t o = 0; o < cout; ++o) {
      const T* dyo = dy + o * lo;
      T* __restrict__ gw = gW + o * ck;
      const T* __restrict__ w = W + o * ck;
      T sum = T(0);
      for (std::size_t j = 0; j < lo; ++j) {
        const T d = dyo[j];
        if (d == T(0)) continue;
        sum += d;
        const T* __restrict__ cj = col.data() + j * ck;
        for (std::size_t q = 0; q < ck; ++q) gw[q] += d * cj[q];
        if (dx) {
          T* __restrict__ dj = dcol.data() + j * ck;
          for (std::size_t q = 0; q < ck; ++q) dj[q] += d * w[q];
        }
      }
      gb[o] += sum;
    }
    if (!dx) return;
    dxp.assign(cin * channel_stride(), T(0));
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t t = 0; t < kernel; ++t) {
        T* ds = dxp.data() + (c * stride + t % stride) * pl + t / stride;
        for (std::size_t j = 0; j < lo; ++j) ds[j] += dcol[j * ck + c * kernel + t];
      }
    const std::size_t half = kernel / 2;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t r = 0; r < stride; ++r) {
        std::size_t idx = (r + length - half % length) % length;
        const T* src = dxp.data() + (c * stride + r) * pl;
        T* dst = dx + c * length;
        for (std::size_t m = 0; m < pl; ++m) {
          dst[idx] += src[m];
          idx += stride;
          while (idx >= length) idx -= length;
        }
      }
  }

  template <class T, class Rng>
  void init(std::vector<T>& p, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * kernel));
    uniform_fill(p, offset, cout * cin * kernel, bound, rng);
    uniform_fill(p, bias_offset(), cout, bound, rng);
  }
};

/// Node encoder: shared MLP per node, one multi-head self-attention layer with a residual
/// connection, then attentive pooling averaged with mean pooling. An empty graph maps to
/// a learned null embedding.
struct GraphEncoder {
  std::size_t features = 4;
  std::size_t hidden = 32;
  std::size_t heads = 2;
  std::size_t head_dim = 16;
  Linear node, query, key, value, proj, score;
  std::size_t null_offset = 0;

  std::size_t attn_dim() const { return heads * head_dim; }

  /// Lays out sub-layers starting at `offset`; returns the end offset.
  std::size_t layout(std::size_t offset) {
    node = {features, hidden, offset};
    offset += node.size();
    query = {hidden, attn_dim(), offset};
    offset += query.size();
    key = {hidden, attn_dim(), offset};
    offset += key.size();
    value = {hidden, attn_dim(), offset};
    offset += value.size();
    proj = {attn_dim(), hidden, offset};
    offset += proj.size();
    score = {hidden, 1, offset};
    offset += score.size();
    null_offset = offset;
    return offset + hidden;
  }

  template <class T, class Rng>
  void init(std::vector<T>& p, Rng& rng) const {
    node.init(p, rng);
    query.init(p, rng);
    key.init(p, rng);
    value.init(p, rng);
    proj.init(p, rng);
    score.init(p, rng);
    uniform_fill(p, null_offset, hidden, 0.1, rng);
  }

  template <class T>
  struct Cache {
    std::size_t n = 0;
    std::vector<T> in, h, q, k, v, attn, ctx, z, s, alpha;
  };

  template <class T>
  void forward(const T* p, const std::vector<std::array<double, 4>>& nodes, Cache<T>& c, T* out) const {
    const std::size_t n = nodes.size();
    c.n = n;
    if (n == 0) {
      std::copy(p + null_offset, p + null_offset + hidden, out);
      return;
    }
    const std::size_t a = attn_dim();
    c.in.resize(n * features);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < features; ++f) c.in[i * features + f] = static_cast<T>(nodes[i][f]);
    c.h.resize(n * hidden);
    c.q.resize(n * a);
    c.k.resize(n * a);
    c.v.resize(n * a);
    for (std::size_t i = 0; i < n; ++i) {
      T* hi = &c.h[i * hidden];
      node.forward(p, &c.in[i * features], hi);
      for (std::size_t j = 0; j < hidden; ++j) hi[j] = relu(hi[j]);
      query.forward(p, hi, &c.q[i * a]);
      key.forward(p, hi, &c.k[i * a]);
      value.forward(p, hi, &c.v[i * a]);
    }
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    c.attn.assign(heads * n * n, T(0));
    c.ctx.assign(n * a, T(0));
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * head_dim;
      for (std::size_t i = 0; i < n; ++i) {
        T* row = &c.attn[(hd * n + i) * n];
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          T dotp = T(0);
          for (std::size_t d = 0; d < head_dim; ++d) dotp += c.q[i * a + off + d] * c.k[j * a + off + d];
          row[j] = dotp * scale;
          mx = std::max(mx, row[j]);
        }
        T sum = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t d = 0; d < head_dim; ++d) c.ctx[i * a + off + d] += row[j] * c.v[j * a + off + d];
      }
    }
    c.z.resize(n * hidden);
    c.s.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      T* zi = &c.z[i * hidden];
      proj.forward(p, &c.ctx[i * a], zi);
      for (std::size_t j = 0; j < hidden; ++j) zi[j] += c.h[i * hidden + j];
      score.forward(p, zi, &c.s[i]);
    }
    c.alpha.resize(n);
    T mx = *std::max_element(c.s.begin(), c.s.end());
    T sum = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      c.alpha[i] = std::exp(c.s[i] - mx);
      sum += c.alpha[i];
    }
    for (auto& al : c.alpha) al /= sum;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t j = 0; j < hidden; ++j) {
      T att = T(0), mean = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        att += c.alpha[i] * c.z[i * hidden + j];
        mean += c.z[i * hidden + j];
      }
      out[j] = T(0.5) * (att + mean * inv_n);
    }
  }

  template <class T>
  void backward(const T* p, const Cache<T>& c, const T* dout, T* g) const {
    const std::size_t n = c.n;
    if (n == 0) {
      for (std::size_t j = 0; j < hidden; ++j) g[null_offset + j] += dout[j];
      return;
    }
    const std::size_t a = attn_dim();
    const T inv_n = T(1) / static_cast<T>(n);
    std::vector<T> dz(n * hidden), dalpha(n), ds(n);
    for (std::size_t i = 0; i < n; ++i) {
      T da = T(0);
      for (std::size_t j = 0; j < hidden; ++j) {
        dz[i * hidden + j] = T(0.5) * (c.alpha[i] + inv_n) * dout[j];
        da += T(0.5) * c.z[i * hidden + j] * dout[j];
      }
      dalpha[i] = da;
    }
    T weighted = T(0);
    for (std::size_t i = 0; i < n; ++i) weighted += c.alpha[i] * dalpha[i];
    for (std::size_t i = 0; i < n; ++i) ds[i] = c.alpha[i] * (dalpha[i] - weighted);
    for (std::size_t i = 0; i < n; ++i) score.backward(p, &c.z[i * hidden], &ds[i], g, &dz[i * hidden]);

    std::vector<T> dh(dz);  // residual path
    std::vector<T> dctx(n * a, T(0));
    for (std::size_t i = 0; i < n; ++i) proj.backward(p, &c.ctx[i * a], &dz[i * hidden], g, &dctx[i * a]);

    std::vector<T> dq(n * a, T(0)), dk(n * a, T(0)), dv(n * a, T(0)), dp(n);
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * head_dim;
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = &c.attn[(hd * n + i) * n];
        T rowdot = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          T d = T(0);
          for (std::size_t e = 0; e < head_dim; ++e) {
            d += dctx[i * a + off + e] * c.v[j * a + off + e];
            dv[j * a + off + e] += row[j] * dctx[i * a + off + e];
          }
          dp[j] = d;
          rowdot += d * row[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const T dsij = row[j] * (dp[j] - rowdot) * scale;
          if (dsij == T(0)) continue;
          for (std::size_t e = 0; e < head_dim; ++e) {
            dq[i * a + off + e] += dsij * c.k[j * a + off + e];
            dk[j * a + off + e] += dsij * c.q[i * a + off + e];
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const T* hi = &c.h[i * hidden];
      T* dhi = &dh[i * hidden];
      query.backward(p, hi, &dq[i * a], g, dhi);
      key.backward(p, hi, &dk[i * a], g, dhi);
      value.backward(p, hi, &dv[i * a], g, dhi);
      for (std::size_t j = 0; j < hidden; ++j)
        if (hi[j] <= T(0)) dhi[j] = T(0);
      node.backward(p, &c.in[i * features], dhi, g, static_cast<T*>(nullptr));
    }
  }
};

}  // namespace gpnav::nn
