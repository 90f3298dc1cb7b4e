/*=========================================================================
 *
 *  Copyright 2026 The lungfpr Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *         https://www.apache.org/licenses/LICENSE-2.0.txt
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 *
 *=========================================================================*/

#include "hs2.hpp"

#include "error.hpp"
#include "text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

namespace lungfpr {

namespace {

constexpr std::size_t kTensorCount = 12;
constexpr char kMagic[8] = {'L', 'F', 'P', 'R', 'H', 'S', '2', '\0'};

template <typename T>
inline T dot(const T* __restrict a, const T* __restrict b, std::size_t n)
{
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k)
      acc[k] += a[i + k] * b[i + k];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T* __restrict y, T a, const T* __restrict x, std::size_t n)
{
  for (std::size_t i = 0; i < n; ++i)
    y[i] += a * x[i];
}

template <typename T>
void relu(T* x, std::size_t n)
{
  for (std::size_t i = 0; i < n; ++i)
    x[i] = x[i] > T(0) ? x[i] : T(0);
}

// Zeroes gradient entries whose forward activation was clipped.
template <typename T>
void relu_backward(T* grad, const T* act, std::size_t n)
{
  for (std::size_t i = 0; i < n; ++i)
    grad[i] = act[i] > T(0) ? grad[i] : T(0);
}

// 3x3 convolution, stride 1, on an input already padded by one pixel.
template <typename T>
void conv_forward(const T* in_pad, int channels, int size, const T* w, const T* bias, int filters, T* out)
{
  const int padded = size + 2;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int k = 0; k < filters; ++k) {
    T* o = out + k * plane;
    std::fill(o, o + plane, bias[k]);
    for (int c = 0; c < channels; ++c) {
      const T* ip = in_pad + static_cast<std::size_t>(c) * padded * padded;
      const T* wk = w + (static_cast<std::size_t>(k) * channels + c) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T wv = wk[ky * 3 + kx];
          for (int y = 0; y < size; ++y)
            axpy(o + static_cast<std::size_t>(y) * size, wv, ip + static_cast<std::size_t>(y + ky) * padded + kx,
                 static_cast<std::size_t>(size));
        }
    }
  }
}

template <typename T>
void conv_backward(const T* in_pad, int channels, int size, const T* w, int filters, const T* dout, T* dw, T* db,
                   T* din_pad)
{
  const int padded = size + 2;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int k = 0; k < filters; ++k) {
    const T* g = dout + k * plane;
    T sum = T(0);
    for (std::size_t i = 0; i < plane; ++i)
      sum += g[i];
    db[k] += sum;
    for (int c = 0; c < channels; ++c) {
      const T* ip = in_pad + static_cast<std::size_t>(c) * padded * padded;
      T* dp = din_pad ? din_pad + static_cast<std::size_t>(c) * padded * padded : nullptr;
      const std::size_t widx = (static_cast<std::size_t>(k) * channels + c) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T acc = T(0);
          for (int y = 0; y < size; ++y)
            acc += dot(g + static_cast<std::size_t>(y) * size, ip + static_cast<std::size_t>(y + ky) * padded + kx,
                       static_cast<std::size_t>(size));
          dw[widx + ky * 3 + kx] += acc;
          if (dp) {
            const T wv = w[widx + ky * 3 + kx];
            for (int y = 0; y < size; ++y)
              axpy(dp + static_cast<std::size_t>(y + ky) * padded + kx, wv, g + static_cast<std::size_t>(y) * size,
                   static_cast<std::size_t>(size));
          }
        }
    }
  }
}

// 2x2 max pooling; `arg` records the winning input offset within each channel
// plane (first maximum in row-major window order).
template <typename T>
void maxpool_forward(const T* in, int channels, int size, T* out, std::int32_t* arg)
{
  const int half = size / 2;
  for (int c = 0; c < channels; ++c) {
    const T* ip = in + static_cast<std::size_t>(c) * size * size;
    for (int y = 0; y < half; ++y)
      for (int x = 0; x < half; ++x) {
        const int base = (2 * y) * size + 2 * x;
        int best = base;
        for (int off : {base + 1, base + size, base + size + 1})
          if (ip[off] > ip[best])
            best = off;
        const std::size_t o = (static_cast<std::size_t>(c) * half + y) * half + x;
        out[o] = ip[best];
        arg[o] = best;
      }
  }
}

template <typename T>
void maxpool_backward(const T* dout, const std::int32_t* arg, int channels, int size, T* din)
{
  const int half = size / 2;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::fill(din, din + channels * plane, T(0));
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < half * half; ++i) {
      const std::size_t o = static_cast<std::size_t>(c) * half * half + i;
      din[c * plane + arg[o]] += dout[o];
    }
}

template <typename T>
void pad_planes(const T* in, int channels, int size, T* out)
{
  const int padded = size + 2;
  std::fill(out, out + static_cast<std::size_t>(channels) * padded * padded, T(0));
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y)
      std::copy_n(in + (static_cast<std::size_t>(c) * size + y) * size, size,
                  out + (static_cast<std::size_t>(c) * padded + y + 1) * padded + 1);
}

template <typename T>
void unpad_planes(const T* in, int channels, int size, T* out)
{
  const int padded = size + 2;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y)
      std::copy_n(in + (static_cast<std::size_t>(c) * padded + y + 1) * padded + 1, size,
                  out + (static_cast<std::size_t>(c) * size + y) * size);
}

// Y[b] = W X[b] + bias for a row-major (out x in) weight matrix.
template <typename T>
void fc_forward(const T* w, const T* bias, int in, int out, const T* x, int batch, T* y)
{
  for (int o = 0; o < out; ++o) {
    const T* row = w + static_cast<std::size_t>(o) * in;
    for (int b = 0; b < batch; ++b)
      y[static_cast<std::size_t>(b) * out + o] = bias[o] + dot(row, x + static_cast<std::size_t>(b) * in,
                                                               static_cast<std::size_t>(in));
  }
}

template <typename T>
void fc_backward(const T* w, int in, int out, const T* x, int batch, const T* dy, T* dw, T* db, T* dx)
{
  if (dx)
    std::fill(dx, dx + static_cast<std::size_t>(batch) * in, T(0));
  for (int o = 0; o < out; ++o) {
    const T* row = w + static_cast<std::size_t>(o) * in;
    T* drow = dw + static_cast<std::size_t>(o) * in;
    for (int b = 0; b < batch; ++b) {
      const T g = dy[static_cast<std::size_t>(b) * out + o];
      if (g == T(0))
        continue;
      db[o] += g;
      axpy(drow, g, x + static_cast<std::size_t>(b) * in, static_cast<std::size_t>(in));
      if (dx)
        axpy(dx + static_cast<std::size_t>(b) * in, g, row, static_cast<std::size_t>(in));
    }
  }
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
  explicit Reader(std::span<const std::byte> b) : bytes_(b) {}

  std::uint64_t get(int width)
  {
    if (pos_ + width > bytes_.size())
      fail(ErrorKind::Format, "model stream is truncated at byte " + std::to_string(pos_));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(std::to_integer<unsigned>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::byte> take(std::size_t n)
  {
    if (n > remaining())
      fail(ErrorKind::Format, "model stream is truncated at byte " + std::to_string(pos_));
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

} // namespace

void Hs2Architecture::validate() const
{
  if (input_size < 4 || input_size % 4 != 0)
    fail(ErrorKind::InvalidArgument, "HS2 input size must be a positive multiple of 4");
  if (conv1_filters < 1 || conv2_filters < 1)
    fail(ErrorKind::InvalidArgument, "HS2 conv filter counts must be >= 1");
  for (int w : fc_widths)
    if (w < 1)
      fail(ErrorKind::InvalidArgument, "HS2 fully connected widths must be >= 1");
  if (classes != 2)
    fail(ErrorKind::InvalidArgument, "HS2 classifies exactly two classes (tissue, nodule)");
}

std::uint64_t dataset_hash(const Hs2Dataset& ds)
{
  std::uint64_t h = text::fnv1a(nullptr, 0);
  for (const auto& p : ds) {
    const int label = static_cast<int>(p.label);
    h = text::fnv1a(&label, sizeof(label), h);
    h = text::fnv1a(p.image.data(), p.image.size() * sizeof(float), h);
  }
  return h;
}

template <typename T>
std::size_t Hs2Tensors<T>::parameter_count() const
{
  std::size_t n = 0;
  for (const auto& t : tensors)
    n += t.size();
  return n;
}

template <typename T>
void Hs2Tensors<T>::zero()
{
  for (auto& t : tensors)
    std::fill(t.begin(), t.end(), T(0));
}

template <typename T>
struct Hs2Network<T>::Workspace {
  int batch = 0;
  std::vector<T> in_pad, a1, pool1, p1_pad, a2, flat;
  std::vector<std::int32_t> arg1, arg2;
  std::array<std::vector<T>, 3> h;
  std::vector<T> out;
  // backward scratch
  std::vector<T> dlog, dflat, da2, dp1_pad, dpool1, da1;
  std::array<std::vector<T>, 3> dh;

  void resize(const Hs2Architecture& a, int b, bool backward)
  {
    batch = b;
    const std::size_t s = a.input_size, s1 = a.pooled1();
    const std::size_t k1 = a.conv1_filters, k2 = a.conv2_filters;
    in_pad.assign(b * (s + 2) * (s + 2), T(0));
    a1.resize(b * k1 * s * s);
    pool1.resize(k1 * s1 * s1);
    arg1.resize(b * k1 * s1 * s1);
    p1_pad.resize(b * k1 * (s1 + 2) * (s1 + 2));
    a2.resize(b * k2 * s1 * s1);
    flat.resize(b * static_cast<std::size_t>(a.flatten_size()));
    arg2.resize(flat.size());
    for (int i = 0; i < 3; ++i)
      h[i].resize(static_cast<std::size_t>(b) * a.fc_widths[i]);
    out.resize(static_cast<std::size_t>(b) * a.classes);
    if (!backward)
      return;
    dlog.resize(out.size());
    dflat.resize(flat.size());
    for (int i = 0; i < 3; ++i)
      dh[i].resize(h[i].size());
    da2.resize(k2 * s1 * s1);
    dp1_pad.resize(k1 * (s1 + 2) * (s1 + 2));
    dpool1.resize(k1 * s1 * s1);
    da1.resize(k1 * s * s);
  }
};

template <typename T>
Hs2Network<T>::Hs2Network(const Hs2Architecture& arch, std::uint64_t seed) : arch_(arch), seed_(seed)
{
  arch_.validate();
  std::mt19937_64 rng(seed);
  const auto shapes = tensor_shapes();
  params_.tensors.resize(kTensorCount);
  const std::array<std::size_t, 6> fan_in{
      9, 9 * static_cast<std::size_t>(arch_.conv1_filters), static_cast<std::size_t>(arch_.flatten_size()),
      static_cast<std::size_t>(arch_.fc_widths[0]), static_cast<std::size_t>(arch_.fc_widths[1]),
      static_cast<std::size_t>(arch_.fc_widths[2])};
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    std::size_t n = 1;
    for (auto d : shapes[t])
      n *= d;
    auto& tensor = params_.tensors[t];
    tensor.assign(n, T(0));
    if (t % 2 == 1)
      continue;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in[t / 2])));
    for (auto& v : tensor)
      v = static_cast<T>(dist(rng));
  }
}

template <typename T>
std::vector<std::string> Hs2Network<T>::tensor_names()
{
  return {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight", "fc1.bias",
          "fc2.weight",   "fc2.bias",   "fc3.weight",   "fc3.bias",   "out.weight", "out.bias"};
}

template <typename T>
std::vector<std::vector<std::size_t>> Hs2Network<T>::tensor_shapes() const
{
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  const auto& a = arch_;
  return {{u(a.conv1_filters), 1, 3, 3},
          {u(a.conv1_filters)},
          {u(a.conv2_filters), u(a.conv1_filters), 3, 3},
          {u(a.conv2_filters)},
          {u(a.fc_widths[0]), u(a.flatten_size())},
          {u(a.fc_widths[0])},
          {u(a.fc_widths[1]), u(a.fc_widths[0])},
          {u(a.fc_widths[1])},
          {u(a.fc_widths[2]), u(a.fc_widths[1])},
          {u(a.fc_widths[2])},
          {u(a.classes), u(a.fc_widths[2])},
          {u(a.classes)}};
}

template <typename T>
typename Hs2Network<T>::Gradients Hs2Network<T>::make_gradients() const
{
  Gradients g;
  g.tensors.reserve(kTensorCount);
  for (const auto& t : params_.tensors)
    g.tensors.emplace_back(t.size(), T(0));
  return g;
}

template <typename T>
double Hs2Network<T>::run(std::span<const std::span<const T>> images, std::span<const int> labels, Workspace& ws,
                          Gradients* grads, std::vector<T>* logits_out, std::span<double> per_sample_loss) const
{
  const auto& a = arch_;
  const int batch = static_cast<int>(images.size());
  if (batch == 0)
    fail(ErrorKind::InvalidArgument, "HS2 batch is empty");
  const int s = a.input_size, s1 = a.pooled1();
  const int k1 = a.conv1_filters, k2 = a.conv2_filters;
  const std::size_t npix = static_cast<std::size_t>(s) * s;
  const std::size_t in_stride = static_cast<std::size_t>(s + 2) * (s + 2);
  const std::size_t a1_stride = static_cast<std::size_t>(k1) * s * s;
  const std::size_t p1_stride = static_cast<std::size_t>(k1) * (s1 + 2) * (s1 + 2);
  const std::size_t a2_stride = static_cast<std::size_t>(k2) * s1 * s1;
  const std::size_t pool1_stride = static_cast<std::size_t>(k1) * s1 * s1;
  const int flat_n = a.flatten_size();
  const auto& P = params_.tensors;

  ws.resize(a, batch, grads != nullptr);

  for (int b = 0; b < batch; ++b) {
    const auto img = images[b];
    if (img.size() != npix)
      fail(ErrorKind::Shape, "HS2 input must be " + std::to_string(s) + "x" + std::to_string(s));
    for (T v : img)
      if (!std::isfinite(static_cast<double>(v)))
        fail(ErrorKind::Numeric, "HS2 input contains a non-finite value");
    pad_planes(img.data(), 1, s, ws.in_pad.data() + b * in_stride);

    T* a1 = ws.a1.data() + b * a1_stride;
    conv_forward(ws.in_pad.data() + b * in_stride, 1, s, P[0].data(), P[1].data(), k1, a1);
    relu(a1, a1_stride);
    maxpool_forward(a1, k1, s, ws.pool1.data(), ws.arg1.data() + b * pool1_stride);
    pad_planes(ws.pool1.data(), k1, s1, ws.p1_pad.data() + b * p1_stride);

    T* a2 = ws.a2.data() + b * a2_stride;
    conv_forward(ws.p1_pad.data() + b * p1_stride, k1, s1, P[2].data(), P[3].data(), k2, a2);
    relu(a2, a2_stride);
    maxpool_forward(a2, k2, s1, ws.flat.data() + static_cast<std::size_t>(b) * flat_n,
                    ws.arg2.data() + static_cast<std::size_t>(b) * flat_n);
  }

  const std::array<int, 4> widths{flat_n, a.fc_widths[0], a.fc_widths[1], a.fc_widths[2]};
  const std::array<const T*, 4> inputs{ws.flat.data(), ws.h[0].data(), ws.h[1].data(), ws.h[2].data()};
  for (int l = 0; l < 3; ++l) {
    fc_forward(P[4 + 2 * l].data(), P[5 + 2 * l].data(), widths[l], widths[l + 1], inputs[l], batch, ws.h[l].data());
    relu(ws.h[l].data(), ws.h[l].size());
  }
  fc_forward(P[10].data(), P[11].data(), widths[3], a.classes, ws.h[2].data(), batch, ws.out.data());

  if (logits_out)
    *logits_out = ws.out;

  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const T* z = ws.out.data() + static_cast<std::size_t>(b) * a.classes;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < a.classes; ++c)
      mx = std::max(mx, static_cast<double>(z[c]));
    double sum = 0.0;
    for (int c = 0; c < a.classes; ++c)
      sum += std::exp(static_cast<double>(z[c]) - mx);
    const double lse = mx + std::log(sum);
    if (!labels.empty()) {
      const int y = labels[b];
      if (y < 0 || y >= a.classes)
        fail(ErrorKind::InvalidArgument, "label out of range");
      const double sample = lse - static_cast<double>(z[y]);
      if (!per_sample_loss.empty())
        per_sample_loss[b] = sample;
      total += sample;
      if (grads) {
        for (int c = 0; c < a.classes; ++c) {
          const double p = std::exp(static_cast<double>(z[c]) - lse);
          ws.dlog[static_cast<std::size_t>(b) * a.classes + c] =
              static_cast<T>((p - (c == y ? 1.0 : 0.0)) / static_cast<double>(batch));
        }
      }
    }
  }
  if (!grads)
    return total / batch;

  auto& G = grads->tensors;
  fc_backward(P[10].data(), widths[3], a.classes, ws.h[2].data(), batch, ws.dlog.data(), G[10].data(),
              G[11].data(), ws.dh[2].data());
  for (int l = 2; l >= 0; --l) {
    relu_backward(ws.dh[l].data(), ws.h[l].data(), ws.dh[l].size());
    T* dx = l > 0 ? ws.dh[l - 1].data() : ws.dflat.data();
    fc_backward(P[4 + 2 * l].data(), widths[l], widths[l + 1], inputs[l], batch, ws.dh[l].data(),
                G[4 + 2 * l].data(), G[5 + 2 * l].data(), dx);
  }

  for (int b = 0; b < batch; ++b) {
    maxpool_backward(ws.dflat.data() + static_cast<std::size_t>(b) * flat_n,
                     ws.arg2.data() + static_cast<std::size_t>(b) * flat_n, k2, s1, ws.da2.data());
    relu_backward(ws.da2.data(), ws.a2.data() + b * a2_stride, a2_stride);
    std::fill(ws.dp1_pad.begin(), ws.dp1_pad.end(), T(0));
    conv_backward(ws.p1_pad.data() + b * p1_stride, k1, s1, P[2].data(), k2, ws.da2.data(), G[2].data(),
                  G[3].data(), ws.dp1_pad.data());
    unpad_planes(ws.dp1_pad.data(), k1, s1, ws.dpool1.data());
    maxpool_backward(ws.dpool1.data(), ws.arg1.data() + b * pool1_stride, k1, s, ws.da1.data());
    relu_backward(ws.da1.data(), ws.a1.data() + b * a1_stride, a1_stride);
    conv_backward(ws.in_pad.data() + b * in_stride, 1, s, P[0].data(), k1, ws.da1.data(), G[0].data(), G[1].data(),
                  static_cast<T*>(nullptr));
  }
  return total / batch;
}

template <typename T>
std::vector<T> Hs2Network<T>::logits(std::span<const T> image) const
{
  Workspace ws;
  std::vector<T> out;
  const std::span<const T> one[1] = {image};
  run(one, {}, ws, nullptr, &out, {});
  return out;
}

template <typename T>
std::vector<Prediction> Hs2Network<T>::forward_batch(std::span<const std::span<const T>> images) const
{
  std::vector<Prediction> preds;
  if (images.empty())
    return preds;
  Workspace ws;
  std::vector<T> z;
  run(images, {}, ws, nullptr, &z, {});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const double z0 = static_cast<double>(z[2 * b]);
    const double z1 = static_cast<double>(z[2 * b + 1]);
    const double mx = std::max(z0, z1);
    const double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
    Prediction p;
    p.p_tissue = e0 / (e0 + e1);
    p.p_nodule = e1 / (e0 + e1);
    p.label = p.p_nodule >= p.p_tissue ? PatchClass::Nodule : PatchClass::Tissue;
    preds.push_back(p);
  }
  return preds;
}

template <typename T>
Prediction Hs2Network<T>::forward(std::span<const T> image) const
{
  const std::span<const T> one[1] = {image};
  return forward_batch(one).front();
}

template <typename T>
double Hs2Network<T>::loss(std::span<const std::span<const T>> images, std::span<const int> labels) const
{
  if (labels.size() != images.size())
    fail(ErrorKind::InvalidArgument, "one label per image is required");
  Workspace ws;
  return run(images, labels, ws, nullptr, nullptr, {});
}

template <typename T>
double Hs2Network<T>::loss_and_gradients(std::span<const std::span<const T>> images, std::span<const int> labels,
                                         Gradients& grads, std::span<double> per_sample_loss) const
{
  if (labels.size() != images.size())
    fail(ErrorKind::InvalidArgument, "one label per image is required");
  if (grads.tensors.size() != kTensorCount)
    grads = make_gradients();
  else
    grads.zero();
  if (!per_sample_loss.empty() && per_sample_loss.size() != images.size())
    fail(ErrorKind::InvalidArgument, "per-sample loss buffer must match the batch size");
  Workspace ws;
  return run(images, labels, ws, &grads, nullptr, per_sample_loss);
}

template <typename T>
void Hs2Network<T>::sgd_step(const Gradients& grads, T lr)
{
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    auto& p = params_.tensors[t];
    const auto& g = grads.tensors[t];
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] -= lr * g[i];
  }
}

template struct Hs2Tensors<float>;
template struct Hs2Tensors<double>;
template class Hs2Network<float>;
template class Hs2Network<double>;

void TrainConfig::validate() const
{
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(ErrorKind::Config, "learning rate must be finite and >= 0");
  if (!(lr_decay > 0.0))
    fail(ErrorKind::Config, "learning-rate decay factor must be > 0");
  if (decay_every_epochs < 1)
    fail(ErrorKind::Config, "decay interval must be >= 1 epoch");
  if (epochs < 1)
    fail(ErrorKind::Config, "epochs must be >= 1");
  if (batch_size < 1)
    fail(ErrorKind::Config, "batch size must be >= 1");
}

double scheduled_learning_rate(const TrainConfig& c, int epoch)
{
  return c.learning_rate * std::pow(c.lr_decay, epoch / c.decay_every_epochs);
}

TrainResult train(Hs2Model& model, const Hs2Dataset& ds, const TrainConfig& cfg)
{
  cfg.validate();
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int label = static_cast<int>(ds[i].label);
    if (label != 0 && label != 1)
      fail(ErrorKind::Config, "dataset label out of range");
    by_class[label].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    fail(ErrorKind::Config, "training needs both nodule and tissue examples");

  std::mt19937_64 rng(cfg.seed);

  // Slot list: every sample once, then extra minority copies when balancing.
  std::vector<std::size_t> slots(ds.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  if (cfg.balance_classes) {
    const int minority = by_class[0].size() < by_class[1].size() ? 0 : 1;
    auto pool = by_class[minority];
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t extra = by_class[1 - minority].size() - pool.size();
    for (std::size_t k = 0; k < extra; ++k)
      slots.push_back(pool[k % pool.size()]);
  }

  TrainResult result;
  result.samples_per_epoch = slots.size();
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> slot_loss(slots.size());
  auto grads = model.make_gradients();

  std::vector<std::span<const float>> images;
  std::vector<int> labels;
  std::vector<double> sample_loss;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto lr = static_cast<float>(scheduled_learning_rate(cfg, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      images.clear();
      labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = ds[slots[order[k]]];
        images.emplace_back(p.image);
        labels.push_back(static_cast<int>(p.label));
      }
      sample_loss.resize(end - start);
      model.loss_and_gradients(images, labels, grads, sample_loss);
      for (std::size_t k = start; k < end; ++k)
        slot_loss[order[k]] = sample_loss[k - start];
      model.sgd_step(grads, lr);
    }
    // Summed in slot order so the value does not depend on the shuffle.
    double sum = 0.0;
    for (double l : slot_loss)
      sum += l;
    result.loss_history.push_back(sum / static_cast<double>(slot_loss.size()));
  }
  return result;
}

Evaluation evaluate(const Hs2Model& model, const Hs2Dataset& ds)
{
  Evaluation ev;
  ev.count = ds.size();
  if (ds.empty())
    return ev;
  constexpr std::size_t kChunk = 32;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::span<const float>> images;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t end = std::min(ds.size(), start + kChunk);
    images.clear();
    for (std::size_t i = start; i < end; ++i)
      images.emplace_back(ds[i].image);
    const auto preds = model.forward_batch(images);
    for (std::size_t i = start; i < end; ++i) {
      const auto& p = preds[i - start];
      const double prob = ds[i].label == PatchClass::Nodule ? p.p_nodule : p.p_tissue;
      loss_sum += -std::log(std::max(prob, 1e-300));
      if (p.label == ds[i].label)
        ++correct;
    }
  }
  ev.mean_loss = loss_sum / static_cast<double>(ds.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return ev;
}

std::vector<std::byte> save_model(const Hs2Model& m)
{
  std::vector<std::byte> out;
  for (char c : kMagic)
    out.push_back(static_cast<std::byte>(c));
  put_u32(out, kModelFormatVersion);
  put_u64(out, m.seed());
  const auto& a = m.architecture();
  for (int v : {a.input_size, a.conv1_filters, a.conv2_filters, Hs2Architecture::kernel, a.fc_widths[0],
                a.fc_widths[1], a.fc_widths[2], a.classes})
    put_u32(out, static_cast<std::uint32_t>(v));
  for (const auto& t : m.tensors())
    for (float v : t)
      put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Hs2Model load_model(std::span<const std::byte> bytes)
{
  Reader r(bytes);
  const auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorKind::Format, "not an HS2 model file (bad magic bytes)");
  const auto version = static_cast<std::uint32_t>(r.get(4));
  if (version != kModelFormatVersion)
    fail(ErrorKind::Format, "unsupported HS2 model format version " + std::to_string(version) + " (this build reads " +
                                std::to_string(kModelFormatVersion) + ")");
  const std::uint64_t seed = r.get(8);
  const auto field = [&] { return static_cast<int>(static_cast<std::uint32_t>(r.get(4))); };
  Hs2Architecture a;
  a.input_size = field();
  a.conv1_filters = field();
  a.conv2_filters = field();
  const int kernel = field();
  a.fc_widths = {field(), field(), field()};
  a.classes = field();
  if (kernel != Hs2Architecture::kernel)
    fail(ErrorKind::Format, "model kernel size " + std::to_string(kernel) + " is not supported");
  try {
    a.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("model has an invalid layer shape: ") + e.what());
  }

  Hs2Model m(a, seed);
  std::size_t expected = 0;
  for (const auto& t : m.tensors())
    expected += t.size() * 4;
  if (r.remaining() != expected)
    fail(ErrorKind::Format, "model payload has " + std::to_string(r.remaining()) + " bytes, layer shapes need " +
                                std::to_string(expected));
  for (auto& t : m.tensors())
    for (auto& v : t) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(r.get(4)));
      if (!std::isfinite(v))
        fail(ErrorKind::Format, "model contains a non-finite parameter");
    }
  return m;
}

double loss_bce(double p, int target)
{
  if (!(p > 0.0 && p < 1.0))
    fail(ErrorKind::Domain, "BCE probability must lie in (0, 1)");
  if (target != 0 && target != 1)
    fail(ErrorKind::Domain, "BCE target must be 0 or 1");
  return -(target * std::log(p) + (1 - target) * std::log(1.0 - p));
}

double loss_smooth_l1(double x)
{
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

} // namespace lungfpr
