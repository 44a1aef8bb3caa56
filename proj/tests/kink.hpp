#pragma once

#include <cmath>
#include <limits>

#include "evitransfer/autoencoder.hpp"

namespace testing_support {

// Smallest |pre-activation| over every ReLU unit of the model on `x`. Central
// differences are only meaningful when this exceeds the difference step.
inline double min_relu_margin(const evt::AutoencoderModel& model, const evt::Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  evt::Matrix h = x;
  auto visit = [&](const evt::DenseLayer& layer) {
    evt::Matrix pre = evt::dense_preactivation(layer, h);
    if (layer.activation == evt::Activation::ReLU)
      for (double v : pre.values()) margin = std::min(margin, std::abs(v));
    h = evt::apply_activation(layer.activation, std::move(pre));
  };
  for (const auto& l : model.encoder) visit(l);
  for (const auto& l : model.decoder) visit(l);
  return margin;
}

}  // namespace testing_support
