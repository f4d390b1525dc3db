#include "edgeseg/loss.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "edgeseg/error.hpp"

namespace edgeseg {

template <typename T>
std::pair<T, Tensor<T>> cross_entropy_loss(const Tensor<T>& logits,
                                           const LabelMap& labels,
                                           std::optional<int> ignore_label) {
  const Shape4& s = logits.shape();
  if (labels.n() != s.n || labels.h() != s.h || labels.w() != s.w) {
    throw ShapeError("cross_entropy_loss: labels (" +
                     std::to_string(labels.n()) + "," +
                     std::to_string(labels.h()) + "," +
                     std::to_string(labels.w()) + ") do not match logits " +
                     s.str());
  }

  Tensor<T> grad(s);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  std::vector<T> probs(static_cast<std::size_t>(s.c));

  // First pass counts contributing pixels so the gradient can be scaled in a
  // single sweep.
  std::int64_t count = 0;
  for (std::int32_t lbl : labels.values()) {
    if (ignore_label && lbl == *ignore_label) continue;
    if (lbl < 0 || lbl >= s.c) {
      throw DataError("cross_entropy_loss: label " + std::to_string(lbl) +
                      " out of range for " + std::to_string(s.c) + " classes");
    }
    ++count;
  }
  if (count == 0)
    throw DataError("cross_entropy_loss: every pixel carries the ignore label");

  double loss = 0.0;
  const T inv_count = T(1) / static_cast<T>(count);
  for (int n = 0; n < s.n; ++n) {
    const T* base = logits.data() + static_cast<std::int64_t>(n) * s.c * plane;
    T* gbase = grad.data() + static_cast<std::int64_t>(n) * s.c * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::int32_t lbl =
          labels.values()[static_cast<std::size_t>(n) * plane + i];
      if (ignore_label && lbl == *ignore_label) continue;

      T max_v = base[i];
      for (int ch = 1; ch < s.c; ++ch)
        max_v = std::max(max_v, base[static_cast<std::int64_t>(ch) * plane + i]);
      T denom(0);
      for (int ch = 0; ch < s.c; ++ch) {
        T e = std::exp(base[static_cast<std::int64_t>(ch) * plane + i] - max_v);
        probs[static_cast<std::size_t>(ch)] = e;
        denom += e;
      }
      const T inv_denom = T(1) / denom;
      for (int ch = 0; ch < s.c; ++ch) {
        T p = probs[static_cast<std::size_t>(ch)] * inv_denom;
        T onehot = (ch == lbl) ? T(1) : T(0);
        gbase[static_cast<std::int64_t>(ch) * plane + i] =
            (p - onehot) * inv_count;
      }
      // -log p[label] in a numerically stable form.
      T z = base[static_cast<std::int64_t>(lbl) * plane + i] - max_v;
      loss += static_cast<double>(std::log(denom) - z);
    }
  }
  return {static_cast<T>(loss / static_cast<double>(count)), std::move(grad)};
}

template std::pair<float, Tensor<float>> cross_entropy_loss<float>(
    const Tensor<float>&, const LabelMap&, std::optional<int>);
template std::pair<double, Tensor<double>> cross_entropy_loss<double>(
    const Tensor<double>&, const LabelMap&, std::optional<int>);

}  // namespace edgeseg
