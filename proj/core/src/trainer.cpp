#include "edgeseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgeseg/error.hpp"
#include "edgeseg/loss.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace {

void flip_horizontal(Tensor<float>& img, LabelMap& lbl) {
  const Shape4& s = img.shape();
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w / 2; ++x)
        std::swap(img.at(0, c, y, x), img.at(0, c, y, s.w - 1 - x));
  for (int y = 0; y < lbl.h(); ++y)
    for (int x = 0; x < lbl.w() / 2; ++x)
      std::swap(lbl.at(0, y, x), lbl.at(0, y, lbl.w() - 1 - x));
}

struct Batch {
  Tensor<float> images;
  LabelMap labels;
};

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t end, bool flip, Rng& rng) {
  const Shape4& s0 = data.samples[order[begin]].image.shape();
  const int n = static_cast<int>(end - begin);
  Batch b{Tensor<float>(Shape4{n, s0.c, s0.h, s0.w}),
          LabelMap(n, s0.h, s0.w)};
  const std::int64_t img_len = s0.numel();
  const std::int64_t lbl_len = static_cast<std::int64_t>(s0.h) * s0.w;
  for (int k = 0; k < n; ++k) {
    const Sample& s = data.samples[order[begin + k]];
    if (!(s.image.shape() == s0))
      throw DataError("train: samples have differing shapes (" +
                      s.image.shape().str() + " vs " + s0.str() + ")");
    Tensor<float> img = s.image;
    LabelMap lbl = s.label;
    if (flip && rng.uniform() < 0.5) flip_horizontal(img, lbl);
    std::copy(img.data(), img.data() + img_len, b.images.data() + k * img_len);
    std::copy(lbl.values().begin(), lbl.values().end(),
              b.labels.values().begin() + k * lbl_len);
  }
  return b;
}

}  // namespace

TrainResult train(NetworkGraph<float>& graph, const Dataset& train_set,
                  const Dataset* val_set, const TrainOptions& options,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (options.batch < 1) throw ArgumentError("train: batch size must be >= 1");
  if (options.epochs < 0) throw ArgumentError("train: epochs must be >= 0");

  OptimState<float> opt = OptimState<float>::make(
      graph, static_cast<float>(options.lr),
      static_cast<float>(options.momentum));

  TrainResult result;
  const Rng root(options.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng = root.derive(static_cast<std::uint64_t>(epoch));
    // Fisher-Yates with the portable generator.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(options.batch)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(options.batch));
      Batch b = make_batch(train_set, order, begin, end, options.flip_augment,
                           rng);
      Tensor<float> logits = graph.forward(b.images, Mode::Train);
      auto [loss, dlogits] =
          cross_entropy_loss(logits, b.labels, options.ignore_label);
      if (!std::isfinite(loss)) {
        result.diverged = true;
        graph.clear_forward_state();
        return result;
      }
      ParamGrads<float> grads = graph.backward(dlogits);
      sgd_step(graph, grads, opt);
      loss_sum += loss;
      ++batches;
    }
    graph.clear_forward_state();

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (val_set && !val_set->empty()) {
      stats.val_pixel_accuracy =
          evaluate_metrics(graph, *val_set, options.ignore_label)
              .pixel_accuracy();
    }
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

SegMetrics evaluate_metrics(NetworkGraph<float>& graph, const Dataset& data,
                            std::optional<int> ignore_label) {
  if (data.empty()) throw DataError("evaluate_metrics: empty dataset");
  const int num_classes = graph.config().num_classes;
  SegMetrics total;
  for (const Sample& s : data.samples) {
    Tensor<float> logits = graph.forward(s.image, Mode::Inference);
    LabelMap pred = argmax_channel(logits);
    total.merge(seg_metrics(pred, s.label, num_classes, ignore_label));
  }
  return total;
}

}  // namespace edgeseg
