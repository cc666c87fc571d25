#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sloop/constants.hpp"
#include "sloop/grid.hpp"

namespace sloop {

// Three-layer network over a 2-channel 32x32 input (divergence map,
// brightness-error map):
//   conv 2->8 (3x3, valid) + ReLU
//   conv 8->8 (3x3, valid) + ReLU + global average pool
//   dense 8->1 + sigmoid
struct PrimedCnnModel {
  static constexpr int kSide = constants::kCnnInputSide;
  static constexpr int kIn = 2;
  static constexpr int kCh = constants::kCnnChannels;
  static constexpr int kK = 3;
  static constexpr int kVersion = 1;

  std::vector<double> w1 = std::vector<double>(kCh * kIn * kK * kK, 0.0);  // [out][in][ky][kx]
  std::vector<double> b1 = std::vector<double>(kCh, 0.0);
  std::vector<double> w2 = std::vector<double>(kCh * kCh * kK * kK, 0.0);
  std::vector<double> b2 = std::vector<double>(kCh, 0.0);
  std::vector<double> w3 = std::vector<double>(kCh, 0.0);
  double b3 = 0.0;

  static constexpr std::size_t parameter_count() {
    return kCh * kIn * kK * kK + kCh + kCh * kCh * kK * kK + kCh + kCh + 1;
  }

  // Flat view for optimisers and gradient checks, in declaration order.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  static PrimedCnnModel random(std::uint64_t seed);

  friend bool operator==(const PrimedCnnModel&, const PrimedCnnModel&) = default;
};

// Input tensor: channel-major 2 x 32 x 32.
struct CnnInput {
  std::vector<double> data = std::vector<double>(2 * PrimedCnnModel::kSide * PrimedCnnModel::kSide, 0.0);
};

// Resamples both maps to 32x32 and stacks them.
CnnInput make_cnn_input(const Grid& div_map, const Grid& nbe_map);

double primed_cnn_forward(const PrimedCnnModel& model, const CnnInput& input);
double primed_cnn_forward(const PrimedCnnModel& model, const Grid& div_map, const Grid& nbe_map);

// Binary cross-entropy for one example and its gradient w.r.t. the
// flattened parameters.
double primed_cnn_loss_and_grad(const PrimedCnnModel& model, const CnnInput& input, int label,
                                std::vector<double>& grad);

// Sign pattern of every ReLU pre-activation (1 = active), layer 1 then
// layer 2. Two evaluations with equal patterns lie in the same linear piece.
std::vector<std::uint8_t> primed_cnn_relu_pattern(const PrimedCnnModel& model, const CnnInput& input);

struct CnnExample {
  CnnInput input;
  int label = 0;  // 1 = same individual
};

struct CnnHyper {
  double lr = 0.01;
  int epochs = 30;
  int batch = 16;
  std::uint64_t seed = 1;
};

struct CnnTrainReport {
  std::vector<double> epoch_loss;
};

// Adam on mean BCE. Deterministic for a fixed seed.
PrimedCnnModel primed_cnn_train(const std::vector<CnnExample>& examples, const CnnHyper& hyper,
                                CnnTrainReport* report = nullptr);

PrimedCnnModel primed_cnn_train_from(PrimedCnnModel init, const std::vector<CnnExample>& examples,
                                     const CnnHyper& hyper, CnnTrainReport* report = nullptr);

double primed_cnn_mean_loss(const PrimedCnnModel& model, const std::vector<CnnExample>& examples);

std::string serialize_model(const PrimedCnnModel& model);
PrimedCnnModel deserialize_model(const std::string& text);

}  // namespace sloop
