#include "edgeseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgeseg/error.hpp"
#include "edgeseg/loss.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace {

template <typename T>
std::span<const T> vec_span(const Tensor<T>& t) {
  return {t.data(), static_cast<std::size_t>(t.numel())};
}

template <typename T>
void accumulate(std::vector<Tensor<T>>& buf, std::vector<char>& present, int i,
                Tensor<T>&& g) {
  if (!present[i]) {
    buf[i] = std::move(g);
    present[i] = 1;
    return;
  }
  T* dst = buf[i].data();
  const T* src = g.data();
  const std::int64_t n = g.numel();
  for (std::int64_t k = 0; k < n; ++k) dst[k] += src[k];
}

}  // namespace

template <typename T>
Tensor<T> NetworkGraph<T>::run(const Tensor<T>& input, bool training,
                               bool update_stats, ForwardState* retain) {
  // Validate the runtime shape the same way the symbolic pass does.
  infer_shapes(topo_, input.shape());

  ForwardState local;
  ForwardState& st = retain ? *retain : local;
  st.out.assign(topo_.prims.size(), Tensor<T>());
  st.bn.assign(topo_.prims.size(), BnCache<T>());
  st.valid = false;

  st.out[0] = input;
  for (std::size_t i = 1; i < topo_.prims.size(); ++i) {
    const PrimNode& p = topo_.prims[i];
    const Tensor<T>& a = st.out[p.in[0]];
    NodeParams& np = params_[i];
    switch (p.op) {
      case Op::Conv:
        st.out[i] = conv2d(a, np.weight,
                           p.has_bias ? vec_span(np.bias) : std::span<const T>{},
                           p.stride, p.stride, p.pad, p.pad);
        break;
      case Op::BatchNorm: {
        const T eps = static_cast<T>(kBnEps);
        if (training) {
          st.out[i] =
              batch_norm_train(a, vec_span(np.gamma), vec_span(np.beta), eps,
                               st.bn[i]);
          if (update_stats) {
            const T decay = static_cast<T>(kBnDecay);
            T* rm = np.run_mean.data();
            T* rv = np.run_var.data();
            for (int ch = 0; ch < p.c_out; ++ch) {
              rm[ch] = decay * rm[ch] + (T(1) - decay) * st.bn[i].mean[ch];
              rv[ch] = decay * rv[ch] + (T(1) - decay) * st.bn[i].var[ch];
            }
          }
        } else {
          st.out[i] = batch_norm(a, vec_span(np.gamma), vec_span(np.beta),
                                 vec_span(np.run_mean), vec_span(np.run_var),
                                 eps);
        }
        break;
      }
      case Op::Relu:
        st.out[i] = relu(a);
        break;
      case Op::Upsample:
        st.out[i] = bilinear_upsample(a, p.scale);
        break;
      case Op::Add:
        st.out[i] = add_elementwise(a, st.out[p.in[1]]);
        break;
      case Op::Input:
        break;
    }
  }
  Tensor<T> logits = st.out[topo_.output_prim];
  st.valid = (retain != nullptr);
  return logits;
}

template <typename T>
Tensor<T> NetworkGraph<T>::forward(const Tensor<T>& input, Mode mode) {
  if (mode == Mode::Train) return run(input, true, true, &state_);
  return run(input, false, false, nullptr);
}

template <typename T>
Tensor<T> NetworkGraph<T>::forward_frozen_train(const Tensor<T>& input) {
  return run(input, true, false, &state_);
}

template <typename T>
void NetworkGraph<T>::clear_forward_state() {
  state_ = ForwardState();
}

template <typename T>
ParamGrads<T> NetworkGraph<T>::backward(const Tensor<T>& grad_logits) {
  if (!state_.valid)
    throw UsageError(
        "backward: no retained forward state; run a training-mode forward "
        "first");
  if (!(grad_logits.shape() == state_.out[topo_.output_prim].shape()))
    throw ShapeError("backward: gradient shape " + grad_logits.shape().str() +
                     " does not match logits " +
                     state_.out[topo_.output_prim].shape().str());

  std::vector<Tensor<T>> gbuf(topo_.prims.size());
  std::vector<char> present(topo_.prims.size(), 0);
  gbuf[topo_.output_prim] = grad_logits;
  present[topo_.output_prim] = 1;

  ParamGrads<T> out;
  for (std::size_t ri = topo_.prims.size(); ri-- > 1;) {
    const int i = static_cast<int>(ri);
    if (!present[i]) continue;  // unreachable from the loss; gradient is zero
    const PrimNode& p = topo_.prims[i];
    const Tensor<T>& dy = gbuf[i];
    NodeParams& np = params_[i];
    switch (p.op) {
      case Op::Conv: {
        ConvGrads<T> g =
            conv2d_backward(state_.out[p.in[0]], np.weight, p.has_bias,
                            p.stride, p.stride, p.pad, p.pad, dy);
        out.grads.emplace(p.name + ".weight", std::move(g.weights));
        if (p.has_bias) {
          Tensor<T> gb(Shape4{1, p.c_out, 1, 1});
          std::copy(g.bias.begin(), g.bias.end(), gb.data());
          out.grads.emplace(p.name + ".bias", std::move(gb));
        }
        accumulate(gbuf, present, p.in[0], std::move(g.input));
        break;
      }
      case Op::BatchNorm: {
        BnGrads<T> g = batch_norm_backward(dy, vec_span(np.gamma), state_.bn[i]);
        Tensor<T> gg(Shape4{1, p.c_out, 1, 1});
        std::copy(g.gamma.begin(), g.gamma.end(), gg.data());
        out.grads.emplace(p.name + ".gamma", std::move(gg));
        Tensor<T> gb(Shape4{1, p.c_out, 1, 1});
        std::copy(g.beta.begin(), g.beta.end(), gb.data());
        out.grads.emplace(p.name + ".beta", std::move(gb));
        accumulate(gbuf, present, p.in[0], std::move(g.input));
        break;
      }
      case Op::Relu:
        accumulate(gbuf, present, p.in[0], relu_backward(dy, state_.out[i]));
        break;
      case Op::Upsample:
        accumulate(
            gbuf, present, p.in[0],
            bilinear_upsample_backward(dy, state_.out[p.in[0]].shape(),
                                       p.scale));
        break;
      case Op::Add: {
        Tensor<T> copy = dy;
        accumulate(gbuf, present, p.in[1], std::move(copy));
        Tensor<T> own = std::move(gbuf[i]);
        accumulate(gbuf, present, p.in[0], std::move(own));
        break;
      }
      case Op::Input:
        break;
    }
    if (p.op != Op::Add) {
      gbuf[i] = Tensor<T>();  // release as we walk back
    }
  }
  return out;
}

template <typename T>
std::vector<ParamRef<T>> NetworkGraph<T>::parameters() {
  std::vector<ParamRef<T>> refs;
  for (std::size_t i = 0; i < topo_.prims.size(); ++i) {
    const PrimNode& p = topo_.prims[i];
    NodeParams& np = params_[i];
    if (p.op == Op::Conv) {
      refs.push_back({p.name + ".weight", &np.weight, 4, true});
      if (p.has_bias) refs.push_back({p.name + ".bias", &np.bias, 1, true});
    } else if (p.op == Op::BatchNorm) {
      refs.push_back({p.name + ".gamma", &np.gamma, 1, true});
      refs.push_back({p.name + ".beta", &np.beta, 1, true});
      refs.push_back({p.name + ".running_mean", &np.run_mean, 1, false});
      refs.push_back({p.name + ".running_var", &np.run_var, 1, false});
    }
  }
  return refs;
}

template <typename T>
std::vector<std::string> NetworkGraph<T>::trainable_paths() const {
  std::vector<std::string> paths;
  for (const PrimNode& p : topo_.prims) {
    if (p.op == Op::Conv) {
      paths.push_back(p.name + ".weight");
      if (p.has_bias) paths.push_back(p.name + ".bias");
    } else if (p.op == Op::BatchNorm) {
      paths.push_back(p.name + ".gamma");
      paths.push_back(p.name + ".beta");
    }
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

template <typename T>
Tensor<T>* NetworkGraph<T>::find_parameter(const std::string& path) {
  for (ParamRef<T>& r : parameters())
    if (r.path == path) return r.tensor;
  return nullptr;
}

template <typename T>
std::int64_t NetworkGraph<T>::parameter_count(
    bool include_running_stats) const {
  std::int64_t total = 0;
  auto& self = const_cast<NetworkGraph<T>&>(*this);
  for (const ParamRef<T>& r : self.parameters())
    if (r.trainable || include_running_stats) total += r.tensor->numel();
  return total;
}

template <typename T>
NetworkGraph<T> assemble_network(const NetworkConfig& config,
                                 std::optional<std::uint64_t> seed_override) {
  NetworkGraph<T> g;
  g.topo_ = build_topology(config);
  // Shape legality for the declared input policy: the reduction factor is the
  // net spatial divisor, so a reduction_factor-sized input must propagate.
  infer_shapes(g.topo_, Shape4{1, config.input_channels,
                               config.reduction_factor,
                               config.reduction_factor});
  g.config_json_ = canonical_json(config);
  g.seed_ = seed_override.value_or(config.seed);

  const Rng root(g.seed_);
  g.params_.resize(g.topo_.prims.size());
  for (std::size_t i = 0; i < g.topo_.prims.size(); ++i) {
    const PrimNode& p = g.topo_.prims[i];
    auto& np = g.params_[i];
    if (p.op == Op::Conv) {
      np.weight = Tensor<T>(Shape4{p.c_out, p.c_in, p.kh, p.kw});
      Rng rng = root.derive(p.name + ".weight");
      const double fan_in = static_cast<double>(p.c_in) * p.kh * p.kw;
      const double limit = std::sqrt(6.0 / fan_in);
      for (std::int64_t k = 0; k < np.weight.numel(); ++k)
        np.weight[k] = static_cast<T>(rng.uniform(-limit, limit));
      if (p.has_bias) np.bias = Tensor<T>(Shape4{1, p.c_out, 1, 1});
    } else if (p.op == Op::BatchNorm) {
      np.gamma = Tensor<T>::full(Shape4{1, p.c_out, 1, 1}, T(1));
      np.beta = Tensor<T>(Shape4{1, p.c_out, 1, 1});
      np.run_mean = Tensor<T>(Shape4{1, p.c_out, 1, 1});
      np.run_var = Tensor<T>::full(Shape4{1, p.c_out, 1, 1}, T(1));
    }
  }
  return g;
}

template <typename T>
OptimState<T> OptimState<T>::make(NetworkGraph<T>& graph, T lr, T momentum) {
  if (!(lr > T(0))) throw ArgumentError("sgd: learning rate must be > 0");
  if (momentum < T(0) || momentum >= T(1))
    throw ArgumentError("sgd: momentum must lie in [0, 1)");
  OptimState<T> s;
  s.lr = lr;
  s.momentum = momentum;
  for (ParamRef<T>& r : graph.parameters())
    if (r.trainable) s.velocity.emplace(r.path, Tensor<T>(r.tensor->shape()));
  return s;
}

template <typename T>
void sgd_step(NetworkGraph<T>& graph, const ParamGrads<T>& grads,
              OptimState<T>& state) {
  std::vector<std::string> want = graph.trainable_paths();
  if (grads.grads.size() != want.size() ||
      state.velocity.size() != want.size()) {
    throw UsageError("sgd_step: gradient/velocity key sets do not match the "
                     "trainable parameters");
  }
  for (const std::string& path : want) {
    auto git = grads.grads.find(path);
    auto vit = state.velocity.find(path);
    if (git == grads.grads.end() || vit == state.velocity.end())
      throw UsageError("sgd_step: missing gradient for parameter " + path);
    Tensor<T>* theta = graph.find_parameter(path);
    const Tensor<T>& g = git->second;
    Tensor<T>& v = vit->second;
    if (!(g.shape() == theta->shape()) || !(v.shape() == theta->shape()))
      throw UsageError("sgd_step: shape mismatch for parameter " + path);
    const std::int64_t n = theta->numel();
    for (std::int64_t k = 0; k < n; ++k) {
      v[k] = state.momentum * v[k] + g[k];
      (*theta)[k] -= state.lr * v[k];
    }
  }
}

template <typename T>
FdReport finite_diff_check(NetworkGraph<T>& graph, const Tensor<T>& input,
                           const LabelMap& labels, double tolerance,
                           std::optional<int> ignore_label,
                           const FdOptions& options) {
  FdReport report;
  report.tolerance = tolerance;
  report.options = options;

  // Analytic gradients via one retained training-mode pass. Running
  // statistics stay frozen so every probe sees identical state.
  Tensor<T> logits = graph.forward_frozen_train(input);
  auto [loss0, dlogits] = cross_entropy_loss(logits, labels, ignore_label);
  (void)loss0;
  ParamGrads<T> analytic = graph.backward(dlogits);

  auto loss_at = [&]() {
    Tensor<T> l = graph.forward_frozen_train(input);
    return static_cast<double>(
        cross_entropy_loss(l, labels, ignore_label).first);
  };

  for (ParamRef<T>& r : graph.parameters()) {
    if (!r.trainable) continue;
    const Tensor<T>& ga = analytic.grads.at(r.path);
    const std::int64_t numel = r.tensor->numel();
    const int k = static_cast<int>(
        std::min<std::int64_t>(options.samples_per_param, numel));
    const std::int64_t offset = fnv1a64(r.path) % numel;

    double max_rel = 0.0;
    for (int j = 0; j < k; ++j) {
      const std::int64_t idx = (offset + j * numel / k) % numel;
      T& theta = (*r.tensor)[idx];
      const T saved = theta;
      const double a = static_cast<double>(ga[idx]);

      // A probe interval containing a relu kink measures a chord, not the
      // derivative; shrinking the step makes kink error vanish while a real
      // gradient bug stays put. Take the best of three decades.
      double best_rel = std::numeric_limits<double>::infinity();
      double step = options.step_scale;
      for (int retry = 0; retry < 3; ++retry, step /= 10.0) {
        const double h = step * (1.0 + std::abs(static_cast<double>(saved)));
        theta = static_cast<T>(saved + h);
        const double lp = loss_at();
        theta = static_cast<T>(saved - h);
        const double lm = loss_at();
        theta = saved;
        const double numeric = (lp - lm) / (2.0 * h);
        const double denom = std::max(std::abs(a), std::abs(numeric)) +
                             (tolerance > 0.0
                                  ? options.abs_floor / tolerance
                                  : std::numeric_limits<double>::infinity());
        best_rel = std::min(best_rel, std::abs(a - numeric) / denom);
        if (best_rel < tolerance) break;
      }
      max_rel = std::max(max_rel, best_rel);
    }
    report.entries.push_back({r.path, max_rel, max_rel < tolerance});
  }
  report.all_pass =
      !report.entries.empty() &&
      std::all_of(report.entries.begin(), report.entries.end(),
                  [](const FdEntry& e) { return e.pass; });
  return report;
}

#define EDGESEG_INSTANTIATE(T)                                                \
  template class NetworkGraph<T>;                                            \
  template NetworkGraph<T> assemble_network<T>(                              \
      const NetworkConfig&, std::optional<std::uint64_t>);                    \
  template struct OptimState<T>;                                             \
  template void sgd_step<T>(NetworkGraph<T>&, const ParamGrads<T>&,           \
                            OptimState<T>&);                                  \
  template FdReport finite_diff_check<T>(NetworkGraph<T>&, const Tensor<T>&,  \
                                         const LabelMap&, double,             \
                                         std::optional<int>,                  \
                                         const FdOptions&);

EDGESEG_INSTANTIATE(float)
EDGESEG_INSTANTIATE(double)
#undef EDGESEG_INSTANTIATE

}  // namespace edgeseg
