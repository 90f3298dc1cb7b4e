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

#include "error.hpp"
#include "hs2.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace lungfpr;

namespace {

Hs2Architecture small_arch()
{
  Hs2Architecture a;
  a.input_size = 16;
  a.conv1_filters = 3;
  a.conv2_filters = 4;
  a.fc_widths = {24, 12, 8};
  return a;
}

template <typename T>
std::vector<std::vector<T>> random_images(std::mt19937_64& rng, int n, int size)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<T>> out(std::size_t(n), std::vector<T>(std::size_t(size) * size));
  for (auto& img : out)
    for (auto& v : img)
      v = static_cast<T>(u(rng));
  return out;
}

template <typename T>
std::vector<std::span<const T>> views(const std::vector<std::vector<T>>& v)
{
  return {v.begin(), v.end()};
}

// Separable toy data: nodules light up a centered disk, tissue a diagonal band.
Hs2Dataset toy_dataset(int n, int size, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  Hs2Dataset ds;
  for (int i = 0; i < n; ++i) {
    LabeledPatch p;
    p.label = i % 2 ? PatchClass::Nodule : PatchClass::Tissue;
    p.image.resize(std::size_t(size) * size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double cx = x - size / 2.0 + 0.5, cy = y - size / 2.0 + 0.5;
        const bool on = p.label == PatchClass::Nodule ? cx * cx + cy * cy < size * size / 10.0 : std::abs(x - y) < 2;
        p.image[std::size_t(y) * size + x] = static_cast<float>((on ? 0.9 : 0.0) + noise(rng));
      }
    p.id = "toy" + std::to_string(i);
    ds.push_back(std::move(p));
  }
  return ds;
}

} // namespace

TEST_CASE("default architecture flattens to 7200")
{
  const Hs2Architecture a;
  CHECK(a.flatten_size() == 7200);
  const Hs2Model m(a, 1);
  const auto shapes = m.tensor_shapes();
  CHECK(shapes[0] == std::vector<std::size_t>{30, 1, 3, 3});
  CHECK(shapes[2] == std::vector<std::size_t>{50, 30, 3, 3});
  CHECK(shapes[4] == std::vector<std::size_t>{2048, 7200});
  CHECK(shapes[10] == std::vector<std::size_t>{2, 512});
  for (std::size_t t = 1; t < 12; t += 2)
    for (float b : m.tensors()[t])
      CHECK(b == 0.0f);
}

TEST_CASE("zero weights give an even split")
{
  Hs2Model m(small_arch(), 3);
  for (auto& t : m.tensors())
    std::fill(t.begin(), t.end(), 0.0f);
  std::vector<float> img(256, 0.7f);
  const auto p = m.forward(img);
  CHECK(p.p_nodule == doctest::Approx(0.5));
  CHECK(p.p_tissue == doctest::Approx(0.5));
}

TEST_CASE("probabilities sum to one")
{
  std::mt19937_64 rng(2);
  const Hs2Model m(small_arch(), 9);
  for (const auto& img : random_images<float>(rng, 10, 16)) {
    const auto p = m.forward(img);
    CHECK(std::fabs(p.p_nodule + p.p_tissue - 1.0) <= 1e-9);
    CHECK(p.p_nodule > 0.0);
    CHECK(p.p_nodule < 1.0);
    CHECK((p.label == PatchClass::Nodule) == (p.p_nodule >= p.p_tissue));
  }
  CHECK_THROWS_AS(m.forward(std::vector<float>(256, std::nanf(""))), Error);
  CHECK_THROWS_AS(m.forward(std::vector<float>(10, 0.0f)), Error);
}

TEST_CASE("tiny network logits by hand")
{
  // 4x4 input, one all-ones conv filter, an identity second conv and
  // identity fully connected layers.
  Hs2Architecture a;
  a.input_size = 4;
  a.conv1_filters = 1;
  a.conv2_filters = 1;
  a.fc_widths = {1, 1, 1};
  Hs2Network<double> net(a, 1);
  auto& P = net.tensors();
  std::fill(P[0].begin(), P[0].end(), 1.0);
  std::fill(P[2].begin(), P[2].end(), 0.0);
  P[2][4] = 1.0;
  for (int t : {4, 6, 8})
    P[std::size_t(t)][0] = 1.0;
  for (int t : {1, 3, 5, 7, 9})
    P[std::size_t(t)][0] = 0.0;
  P[10] = {1.0, 0.0};
  P[11] = {0.0, 2.0};

  std::vector<double> img(16);
  for (int i = 0; i < 16; ++i)
    img[std::size_t(i)] = i + 1; // rows 1..4, 5..8, 9..12, 13..16
  // Largest 3x3 neighbourhood sum is around (2,2): 6+7+8+10+11+12+14+15+16 = 99.
  // Pooling and the identity layers carry it unchanged to logit 0.
  const auto z = net.logits(img);
  CHECK(z[0] == 99.0);
  CHECK(z[1] == 2.0);

  P[1][0] = -200.0; // ReLU zeroes every activation
  const auto z2 = net.logits(img);
  CHECK(z2[0] == 0.0);
  CHECK(z2[1] == 2.0);
}

TEST_CASE("library forward agrees with the loop-nest reference")
{
  std::mt19937_64 rng(5);
  const Hs2Network<double> net(small_arch(), 17);
  const oracle::NaiveNet ref{net.architecture(), net.tensors()};
  for (const auto& img : random_images<double>(rng, 5, 16)) {
    const auto a = net.logits(img);
    const auto b = ref.logits(img);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
  }
}

TEST_CASE("output-layer gradient has the closed form")
{
  std::mt19937_64 rng(6);
  const Hs2Network<double> net(small_arch(), 4);
  const auto imgs = random_images<double>(rng, 3, 16);
  const std::vector<int> labels{0, 1, 1};
  auto g = net.make_gradients();
  net.loss_and_gradients(views(imgs), labels, g);
  // d loss / d out.bias = mean over the batch of (p - onehot).
  for (int c = 0; c < 2; ++c) {
    double expect = 0;
    for (std::size_t b = 0; b < imgs.size(); ++b) {
      const auto z = net.logits(imgs[b]);
      const double m = std::max(z[0], z[1]);
      const double p = std::exp(z[std::size_t(c)] - m) / (std::exp(z[0] - m) + std::exp(z[1] - m));
      expect += (p - (labels[b] == c ? 1.0 : 0.0)) / 3.0;
    }
    CHECK(g.tensors[11][std::size_t(c)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gradients match central differences")
{
  std::mt19937_64 rng(10);
  Hs2Architecture a = small_arch();
  const Hs2Network<double> net(a, 23);
  const auto imgs = random_images<double>(rng, 4, 16);
  const auto r = oracle::gradient_check(net, imgs, {0, 1, 0, 1}, 1e-4);
  CHECK(r.loss_gap < 1e-12);
  CHECK(r.skipped == 0);
  CHECK(r.parameters == net.make_gradients().parameter_count());
  for (std::size_t t = 0; t < r.worst_per_tensor.size(); ++t) {
    INFO("tensor " << Hs2Network<double>::tensor_names()[t]);
    CHECK(r.worst_per_tensor[t] < 1e-3);
  }
}

TEST_CASE("duplicating the batch leaves gradients unchanged")
{
  std::mt19937_64 rng(12);
  const Hs2Network<double> net(small_arch(), 8);
  const auto imgs = random_images<double>(rng, 3, 16);
  std::vector<std::vector<double>> twice = imgs;
  twice.insert(twice.end(), imgs.begin(), imgs.end());
  auto g1 = net.make_gradients(), g2 = net.make_gradients();
  const double l1 = net.loss_and_gradients(views(imgs), std::vector<int>{0, 1, 1}, g1);
  const double l2 = net.loss_and_gradients(views(twice), std::vector<int>{0, 1, 1, 0, 1, 1}, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  for (std::size_t t = 0; t < g1.tensors.size(); ++t)
    for (std::size_t i = 0; i < g1.tensors[t].size(); ++i)
      CHECK(g1.tensors[t][i] == doctest::Approx(g2.tensors[t][i]).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("training reduces loss and is deterministic")
{
  const auto ds = toy_dataset(20, 16, 3);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  cfg.seed = 5;
  Hs2Model m1(small_arch(), 1), m2(small_arch(), 1);
  const double initial = evaluate(m1, ds).mean_loss;
  const auto h1 = train(m1, ds, cfg);
  const auto h2 = train(m2, ds, cfg);
  CHECK(h1.loss_history.size() == 10);
  CHECK(h1.loss_history == h2.loss_history);
  CHECK(m1 == m2);
  CHECK(evaluate(m1, ds).mean_loss < initial);
  for (double l : h1.loss_history)
    CHECK(std::isfinite(l));
}

TEST_CASE("zero learning rate changes nothing")
{
  const auto ds = toy_dataset(12, 16, 4);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  Hs2Model m(small_arch(), 2);
  const Hs2Model before = m;
  const auto h = train(m, ds, cfg);
  CHECK(m == before);
  CHECK(h.loss_history[0] == h.loss_history[1]);
  CHECK(h.loss_history[1] == h.loss_history[2]);
}

TEST_CASE("training rejects a single-class dataset")
{
  auto ds = toy_dataset(6, 16, 1);
  for (auto& p : ds)
    p.label = PatchClass::Nodule;
  Hs2Model m(small_arch(), 1);
  try {
    train(m, ds, TrainConfig{});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("learning-rate schedule")
{
  TrainConfig c;
  CHECK(scheduled_learning_rate(c, 0) == doctest::Approx(0.01));
  CHECK(scheduled_learning_rate(c, 499) == doctest::Approx(0.01));
  CHECK(scheduled_learning_rate(c, 500) == doctest::Approx(0.001));
  CHECK(scheduled_learning_rate(c, 1500) == doctest::Approx(0.00001));
}

TEST_CASE("losses")
{
  CHECK(loss_smooth_l1(0.0) == 0.0);
  CHECK(loss_smooth_l1(2.0) == 1.5);
  CHECK(loss_smooth_l1(-0.5) == 0.125);
  CHECK(loss_bce(0.5, 1) == doctest::Approx(std::numbers::ln2));
  CHECK(loss_bce(0.2, 0) == doctest::Approx(-std::log(0.8)));
  CHECK_THROWS_AS(loss_bce(1.0, 1), Error);
  CHECK_THROWS_AS(loss_bce(0.0, 0), Error);
}

TEST_CASE("model save and load")
{
  std::mt19937_64 rng(44);
  const Hs2Model m(small_arch(), 77);
  const auto bytes = save_model(m);
  const auto back = load_model(bytes);
  CHECK(back == m);
  CHECK(save_model(back) == bytes);
  const auto img = random_images<float>(rng, 1, 16)[0];
  CHECK(back.forward(img).p_nodule == m.forward(img).p_nodule);

  const auto expect_format = [](std::span<const std::byte> b, const char* needle) {
    try {
      load_model(b);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_format(std::span(bytes).first(bytes.size() - 3), "");
  auto bad = bytes;
  bad[0] = std::byte{'X'};
  expect_format(bad, "magic");
  bad = bytes;
  bad[8] = std::byte{2}; // version field follows the 8 magic bytes
  expect_format(bad, "version");
}
