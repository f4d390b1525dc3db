#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

// Module macroarchitectures. Fixed kernel/stride choices are part of the
// module definitions: the stem halves resolution with a 3x3 stride-2
// convolution, and the reduction module compresses channels with a 1x1
// convolution before an 8x8 stride-8 convolution.

struct StemSpec {
  int c_out = 32;
  static constexpr int kernel = 3;
  static constexpr int stride = 2;
};

struct ResidualBottleneckSpec {
  int c = 32;
  int compression_ratio = 4;  // >= 2, must divide c
};

struct BottleneckReductionSpec {
  int c_in = 32;
  int c_mid = 16;  // < c_in
  int c_out = 256;
  static constexpr int kernel = 8;
  static constexpr int stride = 8;
};

struct RefineSpec {
  int c_deep = 256;
  int c_skip = 32;
  int c_out = 32;
  int upscale = 8;  // deep-branch resolution times this equals skip resolution
};

struct HeadSpec {
  int c_in = 32;
  int num_classes = 32;
  int final_upscale = 2;  // 1 = emit logits at the refine resolution
};

using ModuleVariant = std::variant<StemSpec, ResidualBottleneckSpec,
                                   BottleneckReductionSpec, RefineSpec,
                                   HeadSpec>;

struct ModuleSpec {
  std::string name;
  ModuleVariant v;

  const char* kind() const;
};

/// Data-flow edge between modules. `port` is "in" for single-input modules
/// and "deep" for the refine module's low-resolution branch. Refine skip
/// connections are not edges; they live in NetworkConfig::shortcut_mask.
struct Edge {
  std::string from;  // module name, or "input" for the network input
  std::string to;
  std::string port = "in";
};

/// One realized long-range shortcut: `from`'s output feeds `to`'s skip port.
/// A refine needs at least one entry; additional entries are optional and are
/// summed on the skip port before projection.
struct ShortcutEntry {
  std::string from;
  std::string to;
};

struct NetworkConfig {
  std::string name;
  std::vector<ModuleSpec> nodes;
  std::vector<Edge> edges;
  std::vector<ShortcutEntry> shortcut_mask;
  int num_classes = 2;
  int input_channels = 3;
  int reduction_factor = 16;
  std::uint64_t seed = 0;

  const ModuleSpec* find(const std::string& node_name) const;
};

/// Throws ConfigError listing every violated invariant (one per line).
void validate(const NetworkConfig& config);

/// Canonical single-line JSON with sorted keys; the digest and checkpoint
/// embedding both use this form.
std::string canonical_json(const NetworkConfig& config);
std::string config_digest(const NetworkConfig& config);

NetworkConfig config_from_json(const std::string& text);
NetworkConfig load_config(const std::string& path);
void save_config(const NetworkConfig& config, const std::string& path);

// ---------------------------------------------------------------------------
// Primitive-layer topology. Modules expand into these nodes; the forward and
// backward passes, parameter allocation, and complexity accounting all run on
// this flat representation.

enum class Op { Input, Conv, BatchNorm, Relu, Upsample, Add };

struct PrimNode {
  std::string name;  // "<module>/<layer>"
  Op op = Op::Input;
  std::vector<int> in;  // producer prim indices
  int module = -1;      // index into NetworkConfig::nodes, -1 for the input

  // Conv attributes.
  int c_in = 0, c_out = 0, kh = 1, kw = 1, stride = 1, pad = 0;
  bool has_bias = false;
  int require_div = 0;  // input extents must divide by this (8x8 reduction)

  // Upsample attributes.
  int scale = 1;
};

struct Topology {
  NetworkConfig config;
  std::vector<PrimNode> prims;     // prims[0] is the network input
  std::vector<int> module_output;  // per config node index: its output prim
  std::vector<int> module_order;   // config node indices in topological order
  int output_prim = -1;
};

/// Validates the config and expands it into primitive layers.
Topology build_topology(const NetworkConfig& config);

struct ShapeTable {
  struct Row {
    std::string name;
    std::string kind;
    Shape4 output;
  };
  std::vector<Shape4> prim_shapes;  // indexed like Topology::prims
  std::vector<Row> modules;         // one row per module, topological order
  Shape4 input;
  Shape4 logits;
};

/// Symbolic shape propagation; no tensors are allocated. Throws ShapeError
/// naming the module at which propagation fails.
ShapeTable infer_shapes(const Topology& topo, const Shape4& input_shape);
ShapeTable infer_shapes(const NetworkConfig& config, const Shape4& input_shape);

}  // namespace edgeseg
