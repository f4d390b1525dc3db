#pragma once

#include <optional>
#include <utility>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Mean per-pixel negative log softmax likelihood over non-ignored pixels.
/// Returns the scalar loss and dLoss/dLogits, which is
/// (softmax - onehot) / count at non-ignored pixels and zero elsewhere.
template <typename T>
std::pair<T, Tensor<T>> cross_entropy_loss(
    const Tensor<T>& logits, const LabelMap& labels,
    std::optional<int> ignore_label = std::nullopt);

}  // namespace edgeseg
