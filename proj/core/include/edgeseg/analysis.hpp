#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Per-module and total cost accounting. Parameter counts are symbolic (no
/// tensors are allocated); multiply-accumulate counts are per sample for a
/// given input resolution. Elementwise work (batch norm, relu, adds,
/// upsampling) is tallied separately from MACs.
struct ComplexityReport {
  struct Node {
    std::string name;
    std::string kind;
    std::int64_t learnable = 0;
    std::int64_t running = 0;  // batch-norm running statistics
    std::int64_t macs = 0;
    std::int64_t elementwise = 0;
  };

  std::vector<Node> nodes;  // one entry per module, topological order
  std::int64_t learnable_total = 0;
  std::int64_t running_total = 0;
  std::int64_t macs_total = 0;
  std::int64_t elementwise_total = 0;
  bool has_macs = false;
  Shape4 input;

  /// Everything that gets serialized: learnable + running statistics.
  std::int64_t param_total() const { return learnable_total + running_total; }
  std::int64_t model_bytes(int bytes_per_element = 4) const {
    return param_total() * bytes_per_element;
  }
  /// Megabytes as 10^6 bytes, the convention model-size tables use.
  double model_megabytes(int bytes_per_element = 4) const {
    return static_cast<double>(model_bytes(bytes_per_element)) / 1e6;
  }

  std::string table() const;   // aligned text rendering
  std::string to_json() const;
};

/// Parameter accounting only.
ComplexityReport count_params(const NetworkConfig& config);

/// Parameter + MAC accounting at the given input shape (per sample: the batch
/// extent is ignored).
ComplexityReport count_flops(const NetworkConfig& config,
                             const Shape4& input_shape);

/// Universal performance score: 20*log10(a^2 / (p^0.5 * f^0.5)) with accuracy
/// a in percent, p in millions of parameters, and f in billions of MACs.
double netscore_u(double a, double p, double f);

/// One evaluated candidate: accuracy, size, compute, and its score.
struct PerfRecord {
  double a = 0.0;  // accuracy, percent
  double p = 0.0;  // parameters, millions
  double f = 0.0;  // multiply-accumulates, billions
  double u = 0.0;  // netscore_u(a, p, f), -inf for failed evaluations
  bool failed = false;

  static PerfRecord make(double a, double p, double f);
  static PerfRecord failure(double p, double f);
};

/// Confusion-matrix based segmentation quality metrics.
struct SegMetrics {
  int num_classes = 0;
  std::vector<std::int64_t> confusion;  // row = ground truth, col = prediction
  std::int64_t total = 0;               // counted (non-ignored) pixels

  std::int64_t& at(int gt, int pred) {
    return confusion[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  std::int64_t at(int gt, int pred) const {
    return confusion[static_cast<std::size_t>(gt) * num_classes + pred];
  }

  double pixel_accuracy() const;
  /// IoU per class; empty optional when TP+FP+FN is zero.
  std::vector<std::optional<double>> per_class_iou() const;
  /// Mean IoU over classes present in the ground truth.
  double mean_iou() const;

  /// Associative accumulation across batches.
  void merge(const SegMetrics& other);

  std::string table() const;
  std::string to_json() const;
};

SegMetrics seg_metrics(const LabelMap& pred, const LabelMap& gt,
                       int num_classes,
                       std::optional<int> ignore_label = std::nullopt);

}  // namespace edgeseg
