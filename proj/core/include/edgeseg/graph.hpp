#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/kernels.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

enum class Mode { Inference, Train };

/// Per-parameter gradients keyed by "<prim-node>.<role>" paths.
template <typename T>
struct ParamGrads {
  std::map<std::string, Tensor<T>> grads;

  bool empty() const { return grads.empty(); }
};

/// A view into one stored parameter tensor.
template <typename T>
struct ParamRef {
  std::string path;
  Tensor<T>* tensor;
  int logical_rank;  // 4 for conv weights, 1 for per-channel vectors
  bool trainable;    // running statistics are serialized but not trained
};

/// Instantiated network: the primitive-layer topology plus bound parameters.
/// Inference passes leave the graph untouched; training passes update batch
/// norm running statistics and retain activations for backward().
template <typename T>
class NetworkGraph {
 public:
  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnDecay = 0.9;

  NetworkGraph() = default;

  const NetworkConfig& config() const { return topo_.config; }
  const Topology& topology() const { return topo_; }
  const std::string& config_json() const { return config_json_; }
  std::uint64_t seed() const { return seed_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode = Mode::Inference);

  /// Batch-statistics forward that leaves running statistics untouched.
  /// Retains state for backward(); the finite-difference harness needs every
  /// probe to see identical graph state.
  Tensor<T> forward_frozen_train(const Tensor<T>& input);

  /// Gradients for every trainable parameter given dLoss/dLogits. Requires a
  /// preceding training-mode forward on this graph.
  ParamGrads<T> backward(const Tensor<T>& grad_logits);

  bool has_forward_state() const { return state_.valid; }
  void clear_forward_state();

  std::vector<ParamRef<T>> parameters();
  std::vector<std::string> trainable_paths() const;
  Tensor<T>* find_parameter(const std::string& path);

  std::int64_t parameter_count(bool include_running_stats) const;

 private:
  template <typename U>
  friend NetworkGraph<U> assemble_network(const NetworkConfig&,
                                          std::optional<std::uint64_t>);

  struct NodeParams {
    Tensor<T> weight;
    Tensor<T> bias;
    Tensor<T> gamma, beta, run_mean, run_var;
  };

  struct ForwardState {
    std::vector<Tensor<T>> out;
    std::vector<BnCache<T>> bn;
    bool valid = false;
  };

  Tensor<T> run(const Tensor<T>& input, bool training, bool update_stats,
                ForwardState* retain);

  Topology topo_;
  std::string config_json_;
  std::uint64_t seed_ = 0;
  std::vector<NodeParams> params_;
  ForwardState state_;
};

/// Allocates and deterministically initializes a network for the config
/// (fan-in-scaled uniform conv weights, identity batch norms). The seed comes
/// from the config unless overridden.
template <typename T>
NetworkGraph<T> assemble_network(
    const NetworkConfig& config,
    std::optional<std::uint64_t> seed_override = std::nullopt);

/// Momentum-SGD state: v <- m*v + g;  theta <- theta - lr*v.
template <typename T>
struct OptimState {
  T lr;
  T momentum;
  std::map<std::string, Tensor<T>> velocity;

  static OptimState make(NetworkGraph<T>& graph, T lr, T momentum);
};

template <typename T>
void sgd_step(NetworkGraph<T>& graph, const ParamGrads<T>& grads,
              OptimState<T>& state);

// ---------------------------------------------------------------------------
// Finite-difference verification harness.

struct FdOptions {
  int samples_per_param = 6;  // elements probed per parameter tensor
  // h = step_scale * (1 + |theta|). 1e-5 sits between double-precision
  // round-off (noise ~1e-10) and the step size at which probes start crossing
  // relu kinks (measured ~5e-4 absolute error at 1e-4 on 32x32 inputs).
  double step_scale = 1e-5;
  double abs_floor = 1e-8;  // absolute error floor folded into rel error
};

struct FdEntry {
  std::string path;
  double max_rel_err;
  bool pass;
};

struct FdReport {
  double tolerance = 0.0;
  FdOptions options;
  std::vector<FdEntry> entries;
  bool all_pass = false;
};

/// Central-difference check of backward() against the cross-entropy loss.
/// Probes a deterministic sample of elements per trainable parameter; the
/// relative error is |analytic - numeric| / (max(|analytic|, |numeric|) +
/// abs_floor / tolerance), and an entry passes when it is strictly below the
/// tolerance. Running statistics are frozen during the probe and are not
/// reported. Meant to run on a double-precision graph.
template <typename T>
FdReport finite_diff_check(NetworkGraph<T>& graph, const Tensor<T>& input,
                           const LabelMap& labels, double tolerance,
                           std::optional<int> ignore_label = std::nullopt,
                           const FdOptions& options = {});

}  // namespace edgeseg
