#include "edgeseg/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "edgeseg/error.hpp"
#include "edgeseg/kernels.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

using nlohmann::json;

const char* ModuleSpec::kind() const {
  struct Visitor {
    const char* operator()(const StemSpec&) { return "stem"; }
    const char* operator()(const ResidualBottleneckSpec&) {
      return "residual_bottleneck";
    }
    const char* operator()(const BottleneckReductionSpec&) {
      return "bottleneck_reduction";
    }
    const char* operator()(const RefineSpec&) { return "refine"; }
    const char* operator()(const HeadSpec&) { return "head"; }
  };
  return std::visit(Visitor{}, v);
}

const ModuleSpec* NetworkConfig::find(const std::string& node_name) const {
  for (const ModuleSpec& m : nodes)
    if (m.name == node_name) return &m;
  return nullptr;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json module_to_json(const ModuleSpec& m) {
  json j;
  j["name"] = m.name;
  j["type"] = m.kind();
  if (const auto* s = std::get_if<StemSpec>(&m.v)) {
    j["c_out"] = s->c_out;
  } else if (const auto* s = std::get_if<ResidualBottleneckSpec>(&m.v)) {
    j["c"] = s->c;
    j["compression_ratio"] = s->compression_ratio;
  } else if (const auto* s = std::get_if<BottleneckReductionSpec>(&m.v)) {
    j["c_in"] = s->c_in;
    j["c_mid"] = s->c_mid;
    j["c_out"] = s->c_out;
  } else if (const auto* s = std::get_if<RefineSpec>(&m.v)) {
    j["c_deep"] = s->c_deep;
    j["c_skip"] = s->c_skip;
    j["c_out"] = s->c_out;
    j["upscale"] = s->upscale;
  } else if (const auto* s = std::get_if<HeadSpec>(&m.v)) {
    j["c_in"] = s->c_in;
    j["num_classes"] = s->num_classes;
    j["final_upscale"] = s->final_upscale;
  }
  return j;
}

int get_int(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ConfigError(where + ": missing field \"" + key + "\"");
  if (!j[key].is_number_integer())
    throw ConfigError(where + ": field \"" + key + "\" must be an integer");
  return j[key].get<int>();
}

ModuleSpec module_from_json(const json& j) {
  if (!j.contains("name") || !j["name"].is_string())
    throw ConfigError("node: missing string field \"name\"");
  ModuleSpec m;
  m.name = j["name"].get<std::string>();
  const std::string where = "node \"" + m.name + "\"";
  if (!j.contains("type") || !j["type"].is_string())
    throw ConfigError(where + ": missing string field \"type\"");
  const std::string type = j["type"].get<std::string>();
  if (type == "stem") {
    m.v = StemSpec{get_int(j, "c_out", where)};
  } else if (type == "residual_bottleneck") {
    m.v = ResidualBottleneckSpec{get_int(j, "c", where),
                                 get_int(j, "compression_ratio", where)};
  } else if (type == "bottleneck_reduction") {
    m.v = BottleneckReductionSpec{get_int(j, "c_in", where),
                                  get_int(j, "c_mid", where),
                                  get_int(j, "c_out", where)};
  } else if (type == "refine") {
    m.v = RefineSpec{get_int(j, "c_deep", where), get_int(j, "c_skip", where),
                     get_int(j, "c_out", where), get_int(j, "upscale", where)};
  } else if (type == "head") {
    m.v = HeadSpec{get_int(j, "c_in", where), get_int(j, "num_classes", where),
                   get_int(j, "final_upscale", where)};
  } else {
    throw ConfigError(where + ": unknown module type \"" + type + "\"");
  }
  return m;
}

json config_to_json(const NetworkConfig& c) {
  json j;
  if (!c.name.empty()) j["name"] = c.name;
  j["num_classes"] = c.num_classes;
  j["input_channels"] = c.input_channels;
  j["reduction_factor"] = c.reduction_factor;
  j["seed"] = c.seed;
  j["nodes"] = json::array();
  for (const ModuleSpec& m : c.nodes) j["nodes"].push_back(module_to_json(m));
  j["edges"] = json::array();
  for (const Edge& e : c.edges) {
    json je;
    je["from"] = e.from;
    je["to"] = e.to;
    if (e.port != "in") je["port"] = e.port;
    j["edges"].push_back(je);
  }
  j["shortcut_mask"] = json::array();
  for (const ShortcutEntry& s : c.shortcut_mask) {
    json js;
    js["from"] = s.from;
    js["to"] = s.to;
    j["shortcut_mask"].push_back(js);
  }
  return j;
}

}  // namespace

std::string canonical_json(const NetworkConfig& config) {
  return config_to_json(config).dump();
}

std::string config_digest(const NetworkConfig& config) {
  std::uint64_t h = fnv1a64(canonical_json(config));
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

NetworkConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  NetworkConfig c;
  if (j.contains("name")) c.name = j["name"].get<std::string>();
  c.num_classes = get_int(j, "num_classes", "config");
  if (j.contains("input_channels"))
    c.input_channels = get_int(j, "input_channels", "config");
  if (j.contains("reduction_factor"))
    c.reduction_factor = get_int(j, "reduction_factor", "config");
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (!j.contains("nodes") || !j["nodes"].is_array())
    throw ConfigError("config: missing array field \"nodes\"");
  for (const json& jn : j["nodes"]) c.nodes.push_back(module_from_json(jn));
  if (!j.contains("edges") || !j["edges"].is_array())
    throw ConfigError("config: missing array field \"edges\"");
  for (const json& je : j["edges"]) {
    Edge e;
    e.from = je.at("from").get<std::string>();
    e.to = je.at("to").get<std::string>();
    if (je.contains("port")) e.port = je["port"].get<std::string>();
    c.edges.push_back(e);
  }
  if (j.contains("shortcut_mask")) {
    for (const json& js : j["shortcut_mask"]) {
      c.shortcut_mask.push_back(ShortcutEntry{js.at("from").get<std::string>(),
                                              js.at("to").get<std::string>()});
    }
  }
  return c;
}

NetworkConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

void save_config(const NetworkConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config file: " + path);
  out << config_to_json(config).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "\n  ";
    out += parts[i];
  }
  return out;
}

struct GraphView {
  std::map<std::string, int> index;                 // name -> node index
  std::vector<std::vector<int>> consumers;          // edges + shortcuts
  std::vector<std::vector<int>> producers;
  std::vector<int> fed_by_input;                    // node indices fed by "input"
};

// Builds adjacency over modules, treating shortcut entries as edges.
GraphView graph_view(const NetworkConfig& c, std::vector<std::string>* errors) {
  GraphView g;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const std::string& n = c.nodes[i].name;
    if (n.empty()) errors->push_back("node #" + std::to_string(i) + ": empty name");
    if (n == "input")
      errors->push_back("node \"input\": the name is reserved for the network input");
    if (!g.index.emplace(n, static_cast<int>(i)).second)
      errors->push_back("node \"" + n + "\": duplicate name");
  }
  g.consumers.resize(c.nodes.size());
  g.producers.resize(c.nodes.size());

  auto connect = [&](const std::string& from, const std::string& to,
                     const char* what) {
    auto it_to = g.index.find(to);
    if (it_to == g.index.end()) {
      errors->push_back(std::string(what) + " references unknown node \"" + to +
                        "\"");
      return;
    }
    if (from == "input") {
      g.fed_by_input.push_back(it_to->second);
      return;
    }
    auto it_from = g.index.find(from);
    if (it_from == g.index.end()) {
      errors->push_back(std::string(what) + " references unknown node \"" +
                        from + "\"");
      return;
    }
    g.consumers[it_from->second].push_back(it_to->second);
    g.producers[it_to->second].push_back(it_from->second);
  };

  for (const Edge& e : c.edges) connect(e.from, e.to, "edge");
  for (const ShortcutEntry& s : c.shortcut_mask)
    connect(s.from, s.to, "shortcut_mask entry");
  return g;
}

}  // namespace

void validate(const NetworkConfig& c) {
  std::vector<std::string> errors;

  if (c.num_classes < 2) errors.push_back("config: num_classes must be >= 2");
  if (c.input_channels < 1)
    errors.push_back("config: input_channels must be >= 1");
  if (c.reduction_factor < 1)
    errors.push_back("config: reduction_factor must be >= 1");
  if (c.nodes.empty()) errors.push_back("config: no nodes");

  for (const ModuleSpec& m : c.nodes) {
    const std::string where = "node \"" + m.name + "\"";
    if (const auto* s = std::get_if<StemSpec>(&m.v)) {
      if (s->c_out < 1) errors.push_back(where + ": c_out must be >= 1");
    } else if (const auto* s = std::get_if<ResidualBottleneckSpec>(&m.v)) {
      if (s->c < 1) errors.push_back(where + ": c must be >= 1");
      if (s->compression_ratio < 2)
        errors.push_back(where + ": compression_ratio must be >= 2");
      else if (s->c % s->compression_ratio != 0)
        errors.push_back(where + ": compression_ratio " +
                         std::to_string(s->compression_ratio) +
                         " does not divide c=" + std::to_string(s->c));
    } else if (const auto* s = std::get_if<BottleneckReductionSpec>(&m.v)) {
      if (s->c_in < 1 || s->c_mid < 1 || s->c_out < 1)
        errors.push_back(where + ": channel counts must be >= 1");
      if (s->c_mid >= s->c_in)
        errors.push_back(where + ": c_mid=" + std::to_string(s->c_mid) +
                         " must be < c_in=" + std::to_string(s->c_in));
    } else if (const auto* s = std::get_if<RefineSpec>(&m.v)) {
      if (s->c_deep < 1 || s->c_skip < 1 || s->c_out < 1)
        errors.push_back(where + ": channel counts must be >= 1");
      if (s->upscale < 2) errors.push_back(where + ": upscale must be >= 2");
    } else if (const auto* s = std::get_if<HeadSpec>(&m.v)) {
      if (s->c_in < 1) errors.push_back(where + ": c_in must be >= 1");
      if (s->num_classes != c.num_classes)
        errors.push_back(where + ": num_classes " +
                         std::to_string(s->num_classes) +
                         " disagrees with config num_classes " +
                         std::to_string(c.num_classes));
      if (s->final_upscale < 1)
        errors.push_back(where + ": final_upscale must be >= 1");
    }
  }

  GraphView g = graph_view(c, &errors);
  if (!errors.empty())
    throw ConfigError("invalid network config:\n  " + join(errors));

  // Port / arity rules.
  std::vector<int> plain_in(c.nodes.size(), 0), deep_in(c.nodes.size(), 0),
      skip_in(c.nodes.size(), 0);
  for (int t : g.fed_by_input) ++plain_in[t];
  if (g.fed_by_input.size() != 1)
    errors.push_back("config: exactly one edge must come from \"input\", found " +
                     std::to_string(g.fed_by_input.size()));
  for (const Edge& e : c.edges) {
    if (e.from == "input") continue;
    auto it = g.index.find(e.to);
    if (it == g.index.end()) continue;
    bool to_refine = std::holds_alternative<RefineSpec>(c.nodes[it->second].v);
    if (e.port == "deep") {
      if (!to_refine)
        errors.push_back("edge " + e.from + "->" + e.to +
                         ": port \"deep\" is only valid on refine nodes");
      ++deep_in[it->second];
    } else if (e.port == "in") {
      if (to_refine)
        errors.push_back("edge " + e.from + "->" + e.to +
                         ": refine nodes take their deep input via port "
                         "\"deep\" and skips via shortcut_mask");
      ++plain_in[it->second];
    } else {
      errors.push_back("edge " + e.from + "->" + e.to + ": unknown port \"" +
                       e.port + "\"");
    }
  }
  for (const ShortcutEntry& s : c.shortcut_mask) {
    auto it = g.index.find(s.to);
    if (it == g.index.end()) continue;
    if (!std::holds_alternative<RefineSpec>(c.nodes[it->second].v))
      errors.push_back("shortcut_mask entry " + s.from + "->" + s.to +
                       ": target is not a refine node");
    else
      ++skip_in[it->second];
    if (s.from == "input")
      errors.push_back("shortcut_mask entry ->" + s.to +
                       ": the raw input cannot feed a skip port");
  }
  std::set<std::pair<std::string, std::string>> seen_shortcuts;
  for (const ShortcutEntry& s : c.shortcut_mask)
    if (!seen_shortcuts.emplace(s.from, s.to).second)
      errors.push_back("shortcut_mask entry " + s.from + "->" + s.to +
                       ": duplicate");

  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const std::string where = "node \"" + c.nodes[i].name + "\"";
    if (std::holds_alternative<RefineSpec>(c.nodes[i].v)) {
      if (deep_in[i] != 1)
        errors.push_back(where + ": needs exactly one deep-port edge, found " +
                         std::to_string(deep_in[i]));
      if (skip_in[i] < 1)
        errors.push_back(where +
                         ": its skip connection is absent from shortcut_mask");
    } else {
      if (plain_in[i] != 1)
        errors.push_back(where + ": needs exactly one inbound edge, found " +
                         std::to_string(plain_in[i]));
    }
  }

  // Exactly one output (a node nobody consumes).
  std::vector<std::string> sinks;
  for (std::size_t i = 0; i < c.nodes.size(); ++i)
    if (g.consumers[i].empty()) sinks.push_back(c.nodes[i].name);
  if (sinks.size() != 1) {
    std::string list;
    for (const std::string& s : sinks) list += " \"" + s + "\"";
    errors.push_back("config: expected exactly one output node, found " +
                     std::to_string(sinks.size()) + list);
  }

  // Reachability from the input and cycle detection (Kahn).
  {
    std::vector<int> indeg(c.nodes.size(), 0);
    for (std::size_t i = 0; i < c.nodes.size(); ++i)
      indeg[i] = static_cast<int>(g.producers[i].size());
    std::vector<int> queue = g.fed_by_input;
    std::vector<char> visited(c.nodes.size(), 0);
    for (int q : queue) visited[q] = 1;
    std::size_t head = 0;
    std::size_t done = 0;
    while (head < queue.size()) {
      int u = queue[head++];
      ++done;
      for (int v : g.consumers[u]) {
        if (--indeg[v] == 0 && !visited[v]) {
          visited[v] = 1;
          queue.push_back(v);
        }
      }
    }
    if (done != c.nodes.size()) {
      std::string list;
      for (std::size_t i = 0; i < c.nodes.size(); ++i)
        if (!visited[i] || indeg[i] > 0) list += " \"" + c.nodes[i].name + "\"";
      errors.push_back(
          "config: nodes unreachable from the input or on a cycle:" + list);
    }
  }

  if (!errors.empty())
    throw ConfigError("invalid network config:\n  " + join(errors));
}

// ---------------------------------------------------------------------------
// Topology expansion

namespace {

struct Expander {
  Topology topo;

  int add(PrimNode n) {
    topo.prims.push_back(std::move(n));
    return static_cast<int>(topo.prims.size() - 1);
  }

  int conv(const std::string& name, int module, int in, int c_in, int c_out,
           int k, int stride, int pad, bool bias = false, int require_div = 0) {
    PrimNode n;
    n.name = name;
    n.op = Op::Conv;
    n.in = {in};
    n.module = module;
    n.c_in = c_in;
    n.c_out = c_out;
    n.kh = n.kw = k;
    n.stride = stride;
    n.pad = pad;
    n.has_bias = bias;
    n.require_div = require_div;
    return add(std::move(n));
  }

  int bn(const std::string& name, int module, int in, int channels) {
    PrimNode n;
    n.name = name;
    n.op = Op::BatchNorm;
    n.in = {in};
    n.module = module;
    n.c_out = n.c_in = channels;
    return add(std::move(n));
  }

  int relu_node(const std::string& name, int module, int in, int channels) {
    PrimNode n;
    n.name = name;
    n.op = Op::Relu;
    n.in = {in};
    n.module = module;
    n.c_out = n.c_in = channels;
    return add(std::move(n));
  }

  int add_node(const std::string& name, int module, int a, int b,
               int channels) {
    PrimNode n;
    n.name = name;
    n.op = Op::Add;
    n.in = {a, b};
    n.module = module;
    n.c_out = n.c_in = channels;
    return add(std::move(n));
  }

  int upsample(const std::string& name, int module, int in, int scale,
               int channels) {
    PrimNode n;
    n.name = name;
    n.op = Op::Upsample;
    n.in = {in};
    n.module = module;
    n.scale = scale;
    n.c_out = n.c_in = channels;
    return add(std::move(n));
  }
};

}  // namespace

Topology build_topology(const NetworkConfig& config) {
  validate(config);

  std::map<std::string, int> index;
  for (std::size_t i = 0; i < config.nodes.size(); ++i)
    index[config.nodes[i].name] = static_cast<int>(i);

  // Topological order over modules, shortcut edges included.
  std::vector<std::vector<int>> consumers(config.nodes.size());
  std::vector<int> indeg(config.nodes.size(), 0);
  auto connect = [&](const std::string& from, const std::string& to) {
    if (from == "input") return;
    consumers[index.at(from)].push_back(index.at(to));
    ++indeg[index.at(to)];
  };
  for (const Edge& e : config.edges) connect(e.from, e.to);
  for (const ShortcutEntry& s : config.shortcut_mask) connect(s.from, s.to);

  std::vector<int> order;
  for (std::size_t i = 0; i < config.nodes.size(); ++i)
    if (indeg[i] == 0) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end());
  for (std::size_t head = 0; head < order.size(); ++head) {
    for (int v : consumers[order[head]])
      if (--indeg[v] == 0) order.push_back(v);
  }

  // Inputs per module: plain/deep producer and skip sources (in mask order).
  std::vector<std::string> main_in(config.nodes.size());
  std::vector<std::vector<std::string>> skip_in(config.nodes.size());
  for (const Edge& e : config.edges) main_in[index.at(e.to)] = e.from;
  for (const ShortcutEntry& s : config.shortcut_mask)
    skip_in[index.at(s.to)].push_back(s.from);

  Expander x;
  x.topo.config = config;
  x.topo.module_output.assign(config.nodes.size(), -1);
  x.topo.module_order = order;

  PrimNode input;
  input.name = "input";
  input.op = Op::Input;
  input.c_out = config.input_channels;
  x.add(std::move(input));

  auto out_channels = [&](const ModuleSpec& m) {
    struct Visitor {
      int operator()(const StemSpec& s) { return s.c_out; }
      int operator()(const ResidualBottleneckSpec& s) { return s.c; }
      int operator()(const BottleneckReductionSpec& s) { return s.c_out; }
      int operator()(const RefineSpec& s) { return s.c_out; }
      int operator()(const HeadSpec& s) { return s.num_classes; }
    };
    return std::visit(Visitor{}, m.v);
  };

  auto prim_of = [&](const std::string& producer) {
    if (producer == "input") return 0;
    return x.topo.module_output[index.at(producer)];
  };
  auto channels_of = [&](const std::string& producer) {
    if (producer == "input") return config.input_channels;
    return out_channels(config.nodes[index.at(producer)]);
  };

  std::vector<std::string> channel_errors;
  for (int mi : order) {
    const ModuleSpec& m = config.nodes[mi];
    const std::string& nm = m.name;
    const int in_prim = prim_of(main_in[mi]);
    const int in_ch = channels_of(main_in[mi]);

    if (const auto* s = std::get_if<StemSpec>(&m.v)) {
      int c = x.conv(nm + "/conv", mi, in_prim, in_ch, s->c_out, StemSpec::kernel,
                     StemSpec::stride, 1);
      int b = x.bn(nm + "/bn", mi, c, s->c_out);
      x.topo.module_output[mi] = x.relu_node(nm + "/relu", mi, b, s->c_out);
    } else if (const auto* s = std::get_if<ResidualBottleneckSpec>(&m.v)) {
      if (in_ch != s->c)
        channel_errors.push_back("node \"" + nm + "\": expects " +
                                 std::to_string(s->c) + " channels, producer \"" +
                                 main_in[mi] + "\" yields " +
                                 std::to_string(in_ch));
      const int mid = s->c / s->compression_ratio;
      int c1 = x.conv(nm + "/conv1", mi, in_prim, s->c, mid, 1, 1, 0);
      int b1 = x.bn(nm + "/bn1", mi, c1, mid);
      int r1 = x.relu_node(nm + "/relu1", mi, b1, mid);
      int c2 = x.conv(nm + "/conv2", mi, r1, mid, mid, 3, 1, 1);
      int b2 = x.bn(nm + "/bn2", mi, c2, mid);
      int r2 = x.relu_node(nm + "/relu2", mi, b2, mid);
      int c3 = x.conv(nm + "/conv3", mi, r2, mid, s->c, 1, 1, 0);
      int b3 = x.bn(nm + "/bn3", mi, c3, s->c);
      int a = x.add_node(nm + "/add", mi, b3, in_prim, s->c);
      x.topo.module_output[mi] = x.relu_node(nm + "/relu3", mi, a, s->c);
    } else if (const auto* s = std::get_if<BottleneckReductionSpec>(&m.v)) {
      if (in_ch != s->c_in)
        channel_errors.push_back("node \"" + nm + "\": expects " +
                                 std::to_string(s->c_in) +
                                 " channels, producer \"" + main_in[mi] +
                                 "\" yields " + std::to_string(in_ch));
      int c1 = x.conv(nm + "/conv1", mi, in_prim, s->c_in, s->c_mid, 1, 1, 0);
      int b1 = x.bn(nm + "/bn1", mi, c1, s->c_mid);
      int r1 = x.relu_node(nm + "/relu1", mi, b1, s->c_mid);
      int c2 = x.conv(nm + "/conv2", mi, r1, s->c_mid, s->c_out,
                      BottleneckReductionSpec::kernel,
                      BottleneckReductionSpec::stride, 0, false,
                      BottleneckReductionSpec::kernel);
      int b2 = x.bn(nm + "/bn2", mi, c2, s->c_out);
      x.topo.module_output[mi] = x.relu_node(nm + "/relu2", mi, b2, s->c_out);
    } else if (const auto* s = std::get_if<RefineSpec>(&m.v)) {
      if (in_ch != s->c_deep)
        channel_errors.push_back("node \"" + nm + "\": deep branch expects " +
                                 std::to_string(s->c_deep) +
                                 " channels, producer \"" + main_in[mi] +
                                 "\" yields " + std::to_string(in_ch));
      int up = x.upsample(nm + "/up", mi, in_prim, s->upscale, s->c_deep);
      int cd = x.conv(nm + "/conv_deep", mi, up, s->c_deep, s->c_out, 1, 1, 0);
      int bd = x.bn(nm + "/bn_deep", mi, cd, s->c_out);

      int skip = -1;
      for (std::size_t k = 0; k < skip_in[mi].size(); ++k) {
        const std::string& src = skip_in[mi][k];
        if (channels_of(src) != s->c_skip)
          channel_errors.push_back("node \"" + nm + "\": skip source \"" + src +
                                   "\" yields " +
                                   std::to_string(channels_of(src)) +
                                   " channels, expected " +
                                   std::to_string(s->c_skip));
        int p = prim_of(src);
        skip = (skip < 0)
                   ? p
                   : x.add_node(nm + "/skip_add" + std::to_string(k), mi, skip,
                                p, s->c_skip);
      }
      int cs = x.conv(nm + "/conv_skip", mi, skip, s->c_skip, s->c_out, 1, 1, 0);
      int bs = x.bn(nm + "/bn_skip", mi, cs, s->c_out);
      int a = x.add_node(nm + "/add", mi, bd, bs, s->c_out);
      int r1 = x.relu_node(nm + "/relu1", mi, a, s->c_out);
      int co = x.conv(nm + "/conv_out", mi, r1, s->c_out, s->c_out, 3, 1, 1);
      int bo = x.bn(nm + "/bn_out", mi, co, s->c_out);
      x.topo.module_output[mi] = x.relu_node(nm + "/relu2", mi, bo, s->c_out);
    } else if (const auto* s = std::get_if<HeadSpec>(&m.v)) {
      if (in_ch != s->c_in)
        channel_errors.push_back("node \"" + nm + "\": expects " +
                                 std::to_string(s->c_in) +
                                 " channels, producer \"" + main_in[mi] +
                                 "\" yields " + std::to_string(in_ch));
      int c1 = x.conv(nm + "/conv1", mi, in_prim, s->c_in, s->c_in, 3, 1, 1);
      int b1 = x.bn(nm + "/bn1", mi, c1, s->c_in);
      int r1 = x.relu_node(nm + "/relu1", mi, b1, s->c_in);
      int c2 = x.conv(nm + "/conv2", mi, r1, s->c_in, s->num_classes, 1, 1, 0,
                      /*bias=*/true);
      x.topo.module_output[mi] =
          s->final_upscale > 1
              ? x.upsample(nm + "/up", mi, c2, s->final_upscale,
                           s->num_classes)
              : c2;
    }
  }
  if (!channel_errors.empty())
    throw ConfigError("invalid network config:\n  " + join(channel_errors));

  // The unique sink's output prim is the network output.
  for (std::size_t i = 0; i < config.nodes.size(); ++i)
    if (consumers[i].empty()) x.topo.output_prim = x.topo.module_output[i];

  return std::move(x.topo);
}

// ---------------------------------------------------------------------------
// Shape inference

ShapeTable infer_shapes(const Topology& topo, const Shape4& input_shape) {
  const NetworkConfig& c = topo.config;
  if (input_shape.c != c.input_channels)
    throw ShapeError("input: expected " + std::to_string(c.input_channels) +
                     " channels, got " + std::to_string(input_shape.c));
  if (input_shape.h % c.reduction_factor != 0 ||
      input_shape.w % c.reduction_factor != 0)
    throw ShapeError("input: extents " + std::to_string(input_shape.h) + "x" +
                     std::to_string(input_shape.w) +
                     " are not divisible by the reduction factor " +
                     std::to_string(c.reduction_factor));

  ShapeTable table;
  table.input = input_shape;
  table.prim_shapes.resize(topo.prims.size());
  table.prim_shapes[0] = input_shape;

  auto module_name = [&](const PrimNode& p) {
    return p.module >= 0 ? c.nodes[p.module].name : std::string("input");
  };

  for (std::size_t i = 1; i < topo.prims.size(); ++i) {
    const PrimNode& p = topo.prims[i];
    const Shape4& a = table.prim_shapes[p.in[0]];
    switch (p.op) {
      case Op::Conv: {
        if (a.c != p.c_in)
          throw ShapeError("node \"" + module_name(p) + "\" (" + p.name +
                           "): expected " + std::to_string(p.c_in) +
                           " channels, got " + std::to_string(a.c));
        if (p.require_div > 0 &&
            (a.h % p.require_div != 0 || a.w % p.require_div != 0))
          throw ShapeError("node \"" + module_name(p) + "\": input extents " +
                           std::to_string(a.h) + "x" + std::to_string(a.w) +
                           " are not divisible by " +
                           std::to_string(p.require_div));
        int oh = conv_out_extent(a.h, p.kh, p.stride, p.pad);
        int ow = conv_out_extent(a.w, p.kw, p.stride, p.pad);
        if (oh < 1 || ow < 1)
          throw ShapeError("node \"" + module_name(p) + "\" (" + p.name +
                           "): non-positive output extents for input " +
                           a.str());
        table.prim_shapes[i] = Shape4{a.n, p.c_out, oh, ow};
        break;
      }
      case Op::BatchNorm:
      case Op::Relu:
        table.prim_shapes[i] = a;
        break;
      case Op::Upsample:
        table.prim_shapes[i] = Shape4{a.n, a.c, a.h * p.scale, a.w * p.scale};
        break;
      case Op::Add: {
        const Shape4& b = table.prim_shapes[p.in[1]];
        if (!(a == b))
          throw ShapeError("node \"" + module_name(p) + "\" (" + p.name +
                           "): branch shapes " + a.str() + " and " + b.str() +
                           " differ");
        table.prim_shapes[i] = a;
        break;
      }
      case Op::Input:
        break;
    }
  }

  for (int mi : topo.module_order) {
    table.modules.push_back(ShapeTable::Row{
        c.nodes[mi].name, c.nodes[mi].kind(),
        table.prim_shapes[topo.module_output[mi]]});
  }
  table.logits = table.prim_shapes[topo.output_prim];
  return table;
}

ShapeTable infer_shapes(const NetworkConfig& config,
                        const Shape4& input_shape) {
  return infer_shapes(build_topology(config), input_shape);
}

}  // namespace edgeseg
