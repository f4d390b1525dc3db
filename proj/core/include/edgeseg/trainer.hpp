#pragma once

#include <functional>
#include <optional>

#include "edgeseg/analysis.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/graph.hpp"

namespace edgeseg {

struct TrainOptions {
  int epochs = 20;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 8;
  std::uint64_t seed = 0;
  bool flip_augment = false;
  std::optional<int> ignore_label;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_pixel_accuracy;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  bool diverged = false;  // a batch produced a non-finite loss
};

/// Plain momentum-SGD training loop: seeded shuffling, mini-batches built by
/// concatenation along the batch axis, optional horizontal flip augmentation.
/// Stops early when the loss goes non-finite. Deterministic given the seed.
TrainResult train(NetworkGraph<float>& graph, const Dataset& train_set,
                  const Dataset* val_set, const TrainOptions& options,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Inference-mode metrics over a dataset.
SegMetrics evaluate_metrics(NetworkGraph<float>& graph, const Dataset& data,
                            std::optional<int> ignore_label = std::nullopt);

}  // namespace edgeseg
