#include "edgeseg/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "edgeseg/error.hpp"

namespace edgeseg {

using nlohmann::json;

namespace {

ComplexityReport count(const NetworkConfig& config,
                       std::optional<Shape4> input_shape) {
  Topology topo = build_topology(config);
  std::optional<ShapeTable> shapes;
  if (input_shape) shapes = infer_shapes(topo, *input_shape);

  ComplexityReport r;
  r.has_macs = input_shape.has_value();
  if (input_shape) r.input = *input_shape;

  std::vector<ComplexityReport::Node> per_module(config.nodes.size());
  for (std::size_t m = 0; m < config.nodes.size(); ++m) {
    per_module[m].name = config.nodes[m].name;
    per_module[m].kind = config.nodes[m].kind();
  }

  for (std::size_t i = 1; i < topo.prims.size(); ++i) {
    const PrimNode& p = topo.prims[i];
    ComplexityReport::Node& n = per_module[p.module];
    switch (p.op) {
      case Op::Conv: {
        n.learnable += static_cast<std::int64_t>(p.c_out) * p.c_in * p.kh * p.kw;
        if (p.has_bias) n.learnable += p.c_out;
        if (shapes) {
          const Shape4& out = shapes->prim_shapes[i];
          n.macs += static_cast<std::int64_t>(p.c_out) * p.c_in * p.kh * p.kw *
                    out.h * out.w;
        }
        break;
      }
      case Op::BatchNorm:
        n.learnable += 2 * static_cast<std::int64_t>(p.c_out);
        n.running += 2 * static_cast<std::int64_t>(p.c_out);
        if (shapes) {
          const Shape4& out = shapes->prim_shapes[i];
          n.elementwise += static_cast<std::int64_t>(out.c) * out.h * out.w;
        }
        break;
      case Op::Relu:
      case Op::Add:
      case Op::Upsample:
        if (shapes) {
          const Shape4& out = shapes->prim_shapes[i];
          n.elementwise += static_cast<std::int64_t>(out.c) * out.h * out.w;
        }
        break;
      case Op::Input:
        break;
    }
  }

  for (int mi : topo.module_order) r.nodes.push_back(per_module[mi]);
  for (const ComplexityReport::Node& n : r.nodes) {
    r.learnable_total += n.learnable;
    r.running_total += n.running;
    r.macs_total += n.macs;
    r.elementwise_total += n.elementwise;
  }
  return r;
}

}  // namespace

ComplexityReport count_params(const NetworkConfig& config) {
  return count(config, std::nullopt);
}

ComplexityReport count_flops(const NetworkConfig& config,
                             const Shape4& input_shape) {
  return count(config, input_shape);
}

std::string ComplexityReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "node" << std::setw(24) << "kind"
     << std::right << std::setw(12) << "learnable" << std::setw(10)
     << "running";
  if (has_macs) os << std::setw(16) << "MACs" << std::setw(14) << "elemwise";
  os << "\n";
  for (const Node& n : nodes) {
    os << std::left << std::setw(12) << n.name << std::setw(24) << n.kind
       << std::right << std::setw(12) << n.learnable << std::setw(10)
       << n.running;
    if (has_macs) os << std::setw(16) << n.macs << std::setw(14) << n.elementwise;
    os << "\n";
  }
  os << std::left << std::setw(12) << "total" << std::setw(24) << ""
     << std::right << std::setw(12) << learnable_total << std::setw(10)
     << running_total;
  if (has_macs)
    os << std::setw(16) << macs_total << std::setw(14) << elementwise_total;
  os << "\n";
  os << "parameters: " << param_total() << "  (" << std::fixed
     << std::setprecision(3) << model_megabytes() << " MB at 4 bytes each)\n";
  if (has_macs) {
    os << "MACs/sample at " << input.str() << ": " << macs_total << "  ("
       << std::setprecision(3) << static_cast<double>(macs_total) / 1e9
       << " GMACs)\n";
  }
  return os.str();
}

std::string ComplexityReport::to_json() const {
  json j;
  j["nodes"] = json::array();
  for (const Node& n : nodes) {
    json jn;
    jn["name"] = n.name;
    jn["kind"] = n.kind;
    jn["learnable"] = n.learnable;
    jn["running"] = n.running;
    if (has_macs) {
      jn["macs"] = n.macs;
      jn["elementwise"] = n.elementwise;
    }
    j["nodes"].push_back(jn);
  }
  j["learnable_total"] = learnable_total;
  j["running_total"] = running_total;
  j["param_total"] = param_total();
  j["model_bytes"] = model_bytes();
  j["model_megabytes"] = model_megabytes();
  if (has_macs) {
    j["macs_total"] = macs_total;
    j["elementwise_total"] = elementwise_total;
    j["input"] = {input.n, input.c, input.h, input.w};
  }
  return j.dump();
}

double netscore_u(double a, double p, double f) {
  if (!(a > 0.0) || a > 100.0)
    throw ArgumentError("netscore_u: accuracy must lie in (0, 100]");
  if (!(p > 0.0) || !(f > 0.0))
    throw ArgumentError("netscore_u: parameter and MAC counts must be > 0");
  return 20.0 * std::log10(a * a / (std::sqrt(p) * std::sqrt(f)));
}

PerfRecord PerfRecord::make(double a, double p, double f) {
  PerfRecord r;
  r.a = a;
  r.p = p;
  r.f = f;
  r.u = netscore_u(a, p, f);
  return r;
}

PerfRecord PerfRecord::failure(double p, double f) {
  PerfRecord r;
  r.a = 0.0;
  r.p = p;
  r.f = f;
  r.u = -std::numeric_limits<double>::infinity();
  r.failed = true;
  return r;
}

double SegMetrics::pixel_accuracy() const {
  if (total == 0) return 0.0;
  std::int64_t trace = 0;
  for (int k = 0; k < num_classes; ++k) trace += at(k, k);
  return static_cast<double>(trace) / static_cast<double>(total);
}

std::vector<std::optional<double>> SegMetrics::per_class_iou() const {
  std::vector<std::optional<double>> iou(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    std::int64_t tp = at(k, k);
    std::int64_t fn = 0, fp = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == k) continue;
      fn += at(k, o);
      fp += at(o, k);
    }
    std::int64_t denom = tp + fp + fn;
    if (denom > 0)
      iou[k] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return iou;
}

double SegMetrics::mean_iou() const {
  auto iou = per_class_iou();
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < num_classes; ++k) {
    std::int64_t row = 0;
    for (int o = 0; o < num_classes; ++o) row += at(k, o);
    if (row == 0) continue;  // class absent from ground truth
    ++present;
    sum += iou[k].value_or(0.0);
  }
  return present > 0 ? sum / present : 0.0;
}

void SegMetrics::merge(const SegMetrics& other) {
  if (num_classes == 0) {
    *this = other;
    return;
  }
  if (other.num_classes != num_classes)
    throw ArgumentError("SegMetrics::merge: class counts differ");
  for (std::size_t i = 0; i < confusion.size(); ++i)
    confusion[i] += other.confusion[i];
  total += other.total;
}

std::string SegMetrics::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "pixel accuracy: " << pixel_accuracy() << "\n";
  os << "mean IoU:       " << mean_iou() << "\n";
  auto iou = per_class_iou();
  for (int k = 0; k < num_classes; ++k) {
    if (!iou[k]) continue;
    os << "  IoU[" << std::setw(2) << k << "] = " << *iou[k] << "\n";
  }
  return os.str();
}

std::string SegMetrics::to_json() const {
  json j;
  j["num_classes"] = num_classes;
  j["total_pixels"] = total;
  j["pixel_accuracy"] = pixel_accuracy();
  j["mean_iou"] = mean_iou();
  json iou = json::array();
  for (const auto& v : per_class_iou()) {
    if (v)
      iou.push_back(*v);
    else
      iou.push_back(nullptr);
  }
  j["per_class_iou"] = iou;
  j["confusion"] = confusion;
  return j.dump();
}

SegMetrics seg_metrics(const LabelMap& pred, const LabelMap& gt,
                       int num_classes, std::optional<int> ignore_label) {
  if (pred.n() != gt.n() || pred.h() != gt.h() || pred.w() != gt.w())
    throw ShapeError("seg_metrics: prediction and ground truth shapes differ");
  if (num_classes < 1)
    throw ArgumentError("seg_metrics: num_classes must be >= 1");

  SegMetrics m;
  m.num_classes = num_classes;
  m.confusion.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);

  auto pv = pred.values();
  auto gv = gt.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const std::int32_t g = gv[i];
    if (ignore_label && g == *ignore_label) continue;
    const std::int32_t p = pv[i];
    if (g < 0 || g >= num_classes)
      throw DataError("seg_metrics: ground-truth label " + std::to_string(g) +
                      " out of range");
    if (p < 0 || p >= num_classes)
      throw DataError("seg_metrics: predicted label " + std::to_string(p) +
                      " out of range");
    ++m.at(g, p);
    ++m.total;
  }
  return m;
}

}  // namespace edgeseg
