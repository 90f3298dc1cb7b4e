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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lungfpr {

/// Layer widths of the LHI classifier: two 3x3 conv layers (each followed by
/// ReLU and 2x2 max pooling), three hidden fully connected layers and a
/// softmax output.
struct Hs2Architecture {
  int input_size = 48;
  int conv1_filters = 30;
  int conv2_filters = 50;
  std::array<int, 3> fc_widths{2048, 1024, 512};
  int classes = 2;

  static constexpr int kernel = 3;

  int pooled1() const noexcept { return input_size / 2; }
  int pooled2() const noexcept { return input_size / 4; }
  int flatten_size() const noexcept { return pooled2() * pooled2() * conv2_filters; }
  void validate() const;

  friend bool operator==(const Hs2Architecture&, const Hs2Architecture&) = default;
};

enum class PatchClass : int { Tissue = 0, Nodule = 1 };

struct Prediction {
  double p_nodule = 0.5;
  double p_tissue = 0.5;
  PatchClass label = PatchClass::Nodule;
};

/// One training example: a normalized LHI (values in [0, 1]).
struct LabeledPatch {
  std::vector<float> image;
  PatchClass label = PatchClass::Tissue;
  std::string id;
};

using Hs2Dataset = std::vector<LabeledPatch>;

std::uint64_t dataset_hash(const Hs2Dataset& dataset);

/// Parameter tensors in a fixed order: conv1.w, conv1.b, conv2.w, conv2.b,
/// fc1.w, fc1.b, fc2.w, fc2.b, fc3.w, fc3.b, out.w, out.b.
template <typename T>
struct Hs2Tensors {
  std::vector<std::vector<T>> tensors;

  std::size_t parameter_count() const;
  void zero();

  friend bool operator==(const Hs2Tensors&, const Hs2Tensors&) = default;
};

template <typename T>
class Hs2Network {
public:
  using Gradients = Hs2Tensors<T>;

  /// He-initialized weights, zero biases, drawn from `seed`.
  Hs2Network(const Hs2Architecture& arch, std::uint64_t seed);

  const Hs2Architecture& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<std::vector<T>>& tensors() noexcept { return params_.tensors; }
  const std::vector<std::vector<T>>& tensors() const noexcept { return params_.tensors; }
  static std::vector<std::string> tensor_names();
  std::vector<std::vector<std::size_t>> tensor_shapes() const;

  Prediction forward(std::span<const T> image) const;
  std::vector<Prediction> forward_batch(std::span<const std::span<const T>> images) const;

  /// Raw pre-softmax outputs for one image.
  std::vector<T> logits(std::span<const T> image) const;

  /// Mean cross-entropy over the batch (labels index the logits).
  double loss(std::span<const std::span<const T>> images, std::span<const int> labels) const;

  /// Mean cross-entropy and its exact gradient with respect to every tensor.
  /// `per_sample_loss`, when non-empty, receives each image's loss.
  double loss_and_gradients(std::span<const std::span<const T>> images, std::span<const int> labels,
                            Gradients& grads, std::span<double> per_sample_loss = {}) const;

  Gradients make_gradients() const;

  void sgd_step(const Gradients& grads, T learning_rate);

  friend bool operator==(const Hs2Network&, const Hs2Network&) = default;

private:
  struct Workspace;
  double run(std::span<const std::span<const T>> images, std::span<const int> labels, Workspace& ws,
             Gradients* grads, std::vector<T>* logits_out, std::span<double> per_sample_loss) const;

  Hs2Architecture arch_;
  std::uint64_t seed_;
  Hs2Tensors<T> params_;
};

extern template struct Hs2Tensors<float>;
extern template struct Hs2Tensors<double>;
extern template class Hs2Network<float>;
extern template class Hs2Network<double>;

using Hs2Model = Hs2Network<float>;

struct TrainConfig {
  double learning_rate = 0.01;
  double lr_decay = 0.1;
  int decay_every_epochs = 500;
  int epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 1;
  /// Oversample the minority class to a 1:1 ratio.
  bool balance_classes = true;

  void validate() const;
};

struct TrainResult {
  /// Mean training cross-entropy of each epoch.
  std::vector<double> loss_history;
  std::size_t samples_per_epoch = 0;
};

/// Learning rate in effect during `epoch` (0-based).
double scheduled_learning_rate(const TrainConfig& config, int epoch);

/// Mini-batch SGD. Fully determined by the dataset, the model and config.seed.
TrainResult train(Hs2Model& model, const Hs2Dataset& dataset, const TrainConfig& config);

struct Evaluation {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

Evaluation evaluate(const Hs2Model& model, const Hs2Dataset& dataset);

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary model format: "LFPRHS2\0", u32 version, u64 seed, architecture as
/// u32 fields, then every tensor as little-endian float32 in tensor order.
std::vector<std::byte> save_model(const Hs2Model& model);
Hs2Model load_model(std::span<const std::byte> bytes);

double loss_bce(double p, int target);
double loss_smooth_l1(double x);

} // namespace lungfpr
