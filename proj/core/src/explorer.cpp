#include "edgeseg/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "edgeseg/error.hpp"
#include "edgeseg/graph.hpp"
#include "edgeseg/trainer.hpp"

namespace edgeseg {

namespace fs = std::filesystem;
using nlohmann::json;

bool indicator(const PerfRecord& perf, const Requirements& req) {
  if (perf.failed) return false;
  if (!(perf.a >= req.acc_min)) return false;
  if (req.max_params_millions && perf.p > *req.max_params_millions)
    return false;
  if (req.max_flops_billions && perf.f > *req.max_flops_billions) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Mutation machinery

namespace {

constexpr int kMinWidth = 8;
constexpr int kMaxWidth = 1024;
constexpr int kMaxStageDepth = 8;

int round_to_multiple_of_8(double v) {
  int r = static_cast<int>(std::llround(v / 8.0)) * 8;
  return std::max(kMinWidth, r);
}

// Width fields coupled through the graph: scaling one scales its whole group.
// Slots: 0 = stem.c_out / rb.c / br.c_in / refine.c_skip / head.c_in as wired,
// plus the free knobs br.c_mid, br.c_out, refine.c_out.
struct WidthField {
  int node;  // config node index
  int slot;  // 0 = primary in/out, 1 = br.c_mid, 2 = br/refine out
};

struct WidthGroups {
  std::vector<std::vector<WidthField>> groups;
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Field ids: 3 per node (in/out coupling var, mid var, out var); unused slots
// are simply never referenced.
int field_id(int node, int slot) { return 3 * node + slot; }

WidthGroups width_groups(const NetworkConfig& c) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < c.nodes.size(); ++i)
    index[c.nodes[i].name] = static_cast<int>(i);

  UnionFind uf(3 * c.nodes.size());

  // A producer's output field id (the knob that sets its channel count).
  auto out_field = [&](int node) {
    const ModuleVariant& v = c.nodes[node].v;
    if (std::holds_alternative<StemSpec>(v)) return field_id(node, 0);
    if (std::holds_alternative<ResidualBottleneckSpec>(v))
      return field_id(node, 0);
    if (std::holds_alternative<BottleneckReductionSpec>(v))
      return field_id(node, 2);
    if (std::holds_alternative<RefineSpec>(v)) return field_id(node, 2);
    return -1;  // head output is num_classes, never scaled
  };
  // A consumer's input field id for a given port.
  auto in_field = [&](int node, bool skip_port) {
    const ModuleVariant& v = c.nodes[node].v;
    if (std::holds_alternative<RefineSpec>(v))
      return skip_port ? field_id(node, 1) : field_id(node, 0);
    if (std::holds_alternative<StemSpec>(v)) return -1;  // any input channels
    return field_id(node, 0);
  };

  for (const Edge& e : c.edges) {
    if (e.from == "input") continue;
    int pf = out_field(index.at(e.from));
    int cf = in_field(index.at(e.to), false);
    if (pf >= 0 && cf >= 0) uf.unite(pf, cf);
  }
  for (const ShortcutEntry& s : c.shortcut_mask) {
    int pf = out_field(index.at(s.from));
    int cf = in_field(index.at(s.to), true);
    if (pf >= 0 && cf >= 0) uf.unite(pf, cf);
  }

  // Collect the fields that actually exist per node.
  std::map<int, std::vector<WidthField>> by_root;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const int node = static_cast<int>(i);
    const ModuleVariant& v = c.nodes[i].v;
    std::vector<int> slots;
    if (std::holds_alternative<StemSpec>(v) ||
        std::holds_alternative<ResidualBottleneckSpec>(v)) {
      slots = {0};
    } else if (std::holds_alternative<BottleneckReductionSpec>(v)) {
      slots = {0, 1, 2};  // c_in, c_mid, c_out
    } else if (std::holds_alternative<RefineSpec>(v)) {
      slots = {0, 1, 2};  // c_deep, c_skip, c_out
    } else {
      slots = {0};  // head c_in
    }
    for (int s : slots)
      by_root[uf.find(field_id(node, s))].push_back(WidthField{node, s});
  }

  WidthGroups g;
  for (auto& [root, fields] : by_root) g.groups.push_back(std::move(fields));
  return g;
}

int read_field(const NetworkConfig& c, const WidthField& f) {
  const ModuleVariant& v = c.nodes[f.node].v;
  if (const auto* s = std::get_if<StemSpec>(&v)) return s->c_out;
  if (const auto* s = std::get_if<ResidualBottleneckSpec>(&v)) return s->c;
  if (const auto* s = std::get_if<BottleneckReductionSpec>(&v))
    return f.slot == 0 ? s->c_in : (f.slot == 1 ? s->c_mid : s->c_out);
  if (const auto* s = std::get_if<RefineSpec>(&v))
    return f.slot == 0 ? s->c_deep : (f.slot == 1 ? s->c_skip : s->c_out);
  return std::get<HeadSpec>(v).c_in;
}

void write_field(NetworkConfig& c, const WidthField& f, int value) {
  ModuleVariant& v = c.nodes[f.node].v;
  if (auto* s = std::get_if<StemSpec>(&v)) {
    s->c_out = value;
  } else if (auto* s = std::get_if<ResidualBottleneckSpec>(&v)) {
    s->c = value;
  } else if (auto* s = std::get_if<BottleneckReductionSpec>(&v)) {
    (f.slot == 0 ? s->c_in : (f.slot == 1 ? s->c_mid : s->c_out)) = value;
  } else if (auto* s = std::get_if<RefineSpec>(&v)) {
    (f.slot == 0 ? s->c_deep : (f.slot == 1 ? s->c_skip : s->c_out)) = value;
  } else {
    std::get<HeadSpec>(v).c_in = value;
  }
}

bool legal(const NetworkConfig& c) {
  try {
    validate(c);
    infer_shapes(c, Shape4{1, c.input_channels, c.reduction_factor,
                           c.reduction_factor});
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::optional<NetworkConfig> mutate_width(const NetworkConfig& c, Rng& rng,
                                          std::string* desc) {
  WidthGroups wg = width_groups(c);
  if (wg.groups.empty()) return std::nullopt;
  const auto& group = wg.groups[rng.uniform_int(wg.groups.size())];
  const double factor = rng.uniform_int(2) == 0 ? 0.75 : 1.25;

  NetworkConfig out = c;
  bool any_change = false;
  for (const WidthField& f : group) {
    const int old_v = read_field(c, f);
    int new_v = round_to_multiple_of_8(old_v * factor);
    new_v = std::clamp(new_v, kMinWidth, kMaxWidth);
    if (new_v != old_v) any_change = true;
    write_field(out, f, new_v);
  }
  if (!any_change || !legal(out)) return std::nullopt;
  std::ostringstream os;
  os << "scale width group {";
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (i) os << ",";
    os << c.nodes[group[i].node].name << "#" << group[i].slot;
  }
  os << "} by " << factor;
  *desc = os.str();
  return out;
}

std::optional<NetworkConfig> mutate_compression(const NetworkConfig& c,
                                                Rng& rng, std::string* desc) {
  std::vector<int> rbs;
  for (std::size_t i = 0; i < c.nodes.size(); ++i)
    if (std::holds_alternative<ResidualBottleneckSpec>(c.nodes[i].v))
      rbs.push_back(static_cast<int>(i));
  if (rbs.empty()) return std::nullopt;
  const int node = rbs[rng.uniform_int(rbs.size())];
  const auto& spec = std::get<ResidualBottleneckSpec>(c.nodes[node].v);

  std::vector<int> options;
  for (int r : {2, 4, 8})
    if (r != spec.compression_ratio && spec.c % r == 0) options.push_back(r);
  if (options.empty()) return std::nullopt;
  const int r = options[rng.uniform_int(options.size())];

  NetworkConfig out = c;
  std::get<ResidualBottleneckSpec>(out.nodes[node].v).compression_ratio = r;
  if (!legal(out)) return std::nullopt;
  *desc = "set " + c.nodes[node].name + " compression_ratio to " +
          std::to_string(r);
  return out;
}

std::optional<NetworkConfig> mutate_shortcut(const NetworkConfig& c, Rng& rng,
                                             std::string* desc) {
  std::map<std::string, int> per_refine;
  for (const ShortcutEntry& s : c.shortcut_mask) ++per_refine[s.to];

  struct Toggle {
    bool remove;
    ShortcutEntry entry;
  };
  std::vector<Toggle> toggles;
  // Removable: entries whose refine keeps at least one other feed.
  for (const ShortcutEntry& s : c.shortcut_mask)
    if (per_refine[s.to] >= 2) toggles.push_back({true, s});

  // Addable: any producer with matching channels and skip resolution.
  ShapeTable shapes;
  try {
    shapes = infer_shapes(c, Shape4{1, c.input_channels, c.reduction_factor,
                                    c.reduction_factor});
  } catch (const Error&) {
    return std::nullopt;
  }
  std::map<std::string, Shape4> out_shape;
  for (const auto& row : shapes.modules) out_shape[row.name] = row.output;

  std::set<std::pair<std::string, std::string>> existing;
  for (const ShortcutEntry& s : c.shortcut_mask) existing.emplace(s.from, s.to);

  for (const ModuleSpec& m : c.nodes) {
    const auto* refine = std::get_if<RefineSpec>(&m.v);
    if (!refine) continue;
    // Skip resolution = deep resolution * upscale = refine output resolution
    // before the head; equivalently any current source's shape.
    Shape4 want{};
    bool have_want = false;
    for (const ShortcutEntry& s : c.shortcut_mask) {
      if (s.to == m.name) {
        want = out_shape[s.from];
        have_want = true;
        break;
      }
    }
    if (!have_want) continue;
    for (const ModuleSpec& src : c.nodes) {
      if (src.name == m.name) continue;
      if (existing.count({src.name, m.name})) continue;
      auto it = out_shape.find(src.name);
      if (it == out_shape.end()) continue;
      if (!(it->second == want)) continue;
      if (it->second.c != refine->c_skip) continue;
      toggles.push_back({false, ShortcutEntry{src.name, m.name}});
    }
  }

  if (toggles.empty()) return std::nullopt;
  const Toggle& t = toggles[rng.uniform_int(toggles.size())];
  NetworkConfig out = c;
  if (t.remove) {
    out.shortcut_mask.erase(
        std::remove_if(out.shortcut_mask.begin(), out.shortcut_mask.end(),
                       [&](const ShortcutEntry& s) {
                         return s.from == t.entry.from && s.to == t.entry.to;
                       }),
        out.shortcut_mask.end());
    *desc = "remove shortcut " + t.entry.from + "->" + t.entry.to;
  } else {
    out.shortcut_mask.push_back(t.entry);
    *desc = "add shortcut " + t.entry.from + "->" + t.entry.to;
  }
  if (!legal(out)) return std::nullopt;
  return out;
}

std::optional<NetworkConfig> mutate_depth(const NetworkConfig& c, Rng& rng,
                                          std::string* desc) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < c.nodes.size(); ++i)
    index[c.nodes[i].name] = static_cast<int>(i);

  auto is_rb = [&](const std::string& name) {
    auto it = index.find(name);
    return it != index.end() &&
           std::holds_alternative<ResidualBottleneckSpec>(
               c.nodes[it->second].v);
  };

  // Stage length for an RB: walk the linear chain of RBs around it.
  std::map<std::string, std::string> producer_of;  // via plain edges
  std::map<std::string, std::vector<std::string>> consumers_of;
  for (const Edge& e : c.edges) {
    producer_of[e.to] = e.from;
    consumers_of[e.from].push_back(e.to);
  }
  auto stage_len = [&](const std::string& rb) {
    int len = 1;
    std::string cur = rb;
    while (is_rb(producer_of[cur])) {
      cur = producer_of[cur];
      ++len;
    }
    cur = rb;
    for (;;) {
      const auto& cs = consumers_of[cur];
      if (cs.size() != 1 || !is_rb(cs[0])) break;
      cur = cs[0];
      ++len;
    }
    return len;
  };

  std::set<std::string> mask_sources;
  for (const ShortcutEntry& s : c.shortcut_mask) mask_sources.insert(s.from);

  struct Choice {
    bool remove;
    std::string rb;
  };
  std::vector<Choice> choices;
  for (const ModuleSpec& m : c.nodes) {
    if (!std::holds_alternative<ResidualBottleneckSpec>(m.v)) continue;
    const int len = stage_len(m.name);
    if (len < kMaxStageDepth) choices.push_back({false, m.name});
    // Removal must keep the stage non-empty and not orphan a shortcut source.
    if (len > 1 && !mask_sources.count(m.name))
      choices.push_back({true, m.name});
  }
  if (choices.empty()) return std::nullopt;
  const Choice& ch = choices[rng.uniform_int(choices.size())];

  NetworkConfig out = c;
  if (ch.remove) {
    const std::string producer = producer_of[ch.rb];
    out.nodes.erase(std::remove_if(out.nodes.begin(), out.nodes.end(),
                                   [&](const ModuleSpec& m) {
                                     return m.name == ch.rb;
                                   }),
                    out.nodes.end());
    std::vector<Edge> edges;
    for (Edge e : out.edges) {
      if (e.to == ch.rb) continue;
      if (e.from == ch.rb) e.from = producer;
      edges.push_back(e);
    }
    out.edges = std::move(edges);
    *desc = "remove residual bottleneck " + ch.rb;
  } else {
    std::string name = ch.rb + "x";
    std::set<std::string> names;
    for (const ModuleSpec& m : c.nodes) names.insert(m.name);
    while (names.count(name)) name += "x";

    const auto& spec = std::get<ResidualBottleneckSpec>(
        c.nodes[index.at(ch.rb)].v);
    ModuleSpec dup;
    dup.name = name;
    dup.v = spec;
    // Insert right after the template node so the serialized order reads
    // naturally.
    auto pos = std::find_if(out.nodes.begin(), out.nodes.end(),
                            [&](const ModuleSpec& m) {
                              return m.name == ch.rb;
                            });
    out.nodes.insert(pos + 1, dup);
    for (Edge& e : out.edges)
      if (e.from == ch.rb) e.from = name;
    out.edges.push_back(Edge{ch.rb, name, "in"});
    *desc = "insert residual bottleneck " + name + " after " + ch.rb;
  }
  if (!legal(out)) return std::nullopt;
  return out;
}

}  // namespace

Proposal propose(const NetworkConfig& config, Rng& rng) {
  constexpr int kAttempts = 32;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::string desc;
    std::optional<NetworkConfig> out;
    switch (rng.uniform_int(4)) {
      case 0: out = mutate_width(config, rng, &desc); break;
      case 1: out = mutate_compression(config, rng, &desc); break;
      case 2: out = mutate_shortcut(config, rng, &desc); break;
      default: out = mutate_depth(config, rng, &desc); break;
    }
    if (out) return Proposal{std::move(*out), true, desc};
  }
  return Proposal{config, false, "no legal mutation found"};
}

PerfRecord evaluate(const NetworkConfig& config, const Dataset& train_set,
                    const Dataset& val_set, const EvalOptions& options) {
  if (train_set.empty() || val_set.empty())
    throw DataError("evaluate: needs a non-empty train/validation split");

  const double p =
      static_cast<double>(count_params(config).param_total()) / 1e6;
  const double f = static_cast<double>(
                       count_flops(config, val_set.samples[0].image.shape())
                           .macs_total) /
                   1e9;

  NetworkGraph<float> graph = assemble_network<float>(config, options.seed);
  TrainOptions topt;
  topt.epochs = options.budget_epochs;
  topt.lr = options.lr;
  topt.momentum = options.momentum;
  topt.batch = options.batch;
  topt.seed = options.seed;
  TrainResult tr = train(graph, train_set, nullptr, topt);
  if (tr.diverged) return PerfRecord::failure(p, f);

  const double acc =
      evaluate_metrics(graph, val_set).pixel_accuracy() * 100.0;
  if (!(acc > 0.0)) return PerfRecord::failure(p, f);
  return PerfRecord::make(acc, p, f);
}

namespace {

json perf_to_json(const PerfRecord& perf) {
  json j;
  j["a"] = perf.a;
  j["p"] = perf.p;
  j["f"] = perf.f;
  j["u"] = perf.failed ? json(nullptr) : json(perf.u);
  j["failed"] = perf.failed;
  return j;
}

}  // namespace

SearchState search(const NetworkConfig& initial, const Requirements& req,
                   const Dataset& train_set, const Dataset& val_set,
                   int iterations, std::uint64_t seed,
                   const EvalOptions& options, const std::string& out_dir) {
  if (iterations < 0) throw ArgumentError("search: iterations must be >= 0");

  SearchState st;
  st.seed = seed;
  st.iterations = iterations;
  st.best = initial;

  std::ofstream trace;
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "candidates");
    trace.open(fs::path(out_dir) / "trace.jsonl",
               std::ios::binary | std::ios::trunc);
    if (!trace) throw IoError("cannot write search trace in " + out_dir);
  }

  auto snapshot = [&](int k, const NetworkConfig& c) -> std::string {
    if (out_dir.empty()) return "";
    std::ostringstream name;
    name << "candidates/k";
    name.width(4);
    name.fill('0');
    name << k << ".json";
    save_config(c, (fs::path(out_dir) / name.str()).string());
    return name.str();
  };
  auto record = [&](TraceEntry e) {
    if (trace.is_open()) {
      json j;
      j["k"] = e.k;
      j["accepted"] = e.accepted;
      j["perf"] = perf_to_json(e.perf);
      j["digest"] = e.digest;
      j["config"] = e.snapshot_path;
      j["mutation"] = e.mutation;
      trace << j.dump() << "\n";
      trace.flush();
    }
    st.log.push_back(std::move(e));
  };

  Rng rng = Rng(seed).derive("propose");

  // k = 0: the initial design.
  PerfRecord perf0 = evaluate(initial, train_set, val_set, options);
  const bool feasible0 = indicator(perf0, req);
  if (feasible0) {
    st.accepted.emplace_back(config_digest(initial), perf0);
  } else {
    st.infeasible_start = true;
  }
  record(TraceEntry{0, feasible0, perf0, config_digest(initial),
                    snapshot(0, initial), "initial design"});

  for (int k = 1; k <= iterations; ++k) {
    Proposal prop = propose(st.best, rng);
    PerfRecord perf = evaluate(prop.config, train_set, val_set, options);
    const bool feasible = indicator(perf, req);
    // Evaluation is deterministic for a fixed seed, so an unchanged proposal
    // reproduces the incumbent's score and the strict inequality rejects it.
    const bool better =
        st.accepted.empty() || perf.u > st.accepted.back().second.u;
    const bool accept = feasible && better;
    if (accept) {
      st.accepted.emplace_back(config_digest(prop.config), perf);
      st.best = prop.config;
    }
    record(TraceEntry{k, accept, perf, config_digest(prop.config),
                      snapshot(k, prop.config), prop.mutation});
  }
  return st;
}

std::vector<bool> replay_accept_decisions(
    const SearchState& state, const Requirements& req,
    const std::function<double(double)>& u_transform) {
  std::vector<bool> decisions;
  bool have_best = false;
  double best_u = 0.0;
  for (const TraceEntry& e : state.log) {
    const bool feasible = indicator(e.perf, req);
    const double u = e.perf.failed ? -std::numeric_limits<double>::infinity()
                                   : u_transform(e.perf.u);
    const bool accept = feasible && (!have_best || u > best_u);
    if (accept) {
      have_best = true;
      best_u = u;
    }
    decisions.push_back(accept);
  }
  return decisions;
}

std::string trace_to_jsonl(const SearchState& state) {
  std::ostringstream os;
  for (const TraceEntry& e : state.log) {
    json j;
    j["k"] = e.k;
    j["accepted"] = e.accepted;
    j["perf"] = perf_to_json(e.perf);
    j["digest"] = e.digest;
    j["config"] = e.snapshot_path;
    j["mutation"] = e.mutation;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace edgeseg
