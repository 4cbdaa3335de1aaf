#include "uge/dataio.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "uge/binio.hpp"
#include "uge/rng.hpp"

namespace uge {

namespace {

std::vector<std::string> read_lines(const std::string& path, bool required) {
  std::ifstream in(path);
  if (!in) {
    if (required) throw std::runtime_error("missing required dataset file '" + path + "'");
    return {};
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

long parse_long(const std::string& tok, const std::string& file, size_t line_no) {
  size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(file + " line " + std::to_string(line_no) +
                             ": cannot parse integer from '" + tok + "'");
  }
  for (size_t i = used; i < tok.size(); ++i)
    if (!std::isspace(static_cast<unsigned char>(tok[i])))
      throw std::runtime_error(file + " line " + std::to_string(line_no) +
                               ": trailing characters after integer in '" + tok + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Dataset load_tu(const std::string& dir, const std::string& name_arg) {
  namespace fs = std::filesystem;
  std::string name = name_arg;
  if (name.empty()) {
    name = fs::path(dir).filename().string();
    if (name.empty()) name = fs::path(dir).parent_path().filename().string();
  }
  const std::string base = dir + "/" + name;

  const auto indicator = read_lines(base + "_graph_indicator.txt", true);
  const auto graph_label_lines = read_lines(base + "_graph_labels.txt", true);
  const auto edge_lines = read_lines(base + "_A.txt", true);
  const auto node_label_lines = read_lines(base + "_node_labels.txt", false);
  const auto attr_lines = read_lines(base + "_node_attributes.txt", false);

  const int total_nodes = static_cast<int>(indicator.size());
  const int num_graphs = static_cast<int>(graph_label_lines.size());
  if (num_graphs == 0) throw std::runtime_error(base + "_graph_labels.txt is empty");

  // node -> graph and node -> index within its graph
  std::vector<int> graph_of(total_nodes), local_of(total_nodes);
  std::vector<int> graph_size(num_graphs, 0);
  const std::string ind_file = base + "_graph_indicator.txt";
  for (int i = 0; i < total_nodes; ++i) {
    const long gid = parse_long(indicator[i], ind_file, i + 1);
    if (gid < 1 || gid > num_graphs)
      throw std::runtime_error(ind_file + " line " + std::to_string(i + 1) + ": graph id " +
                               std::to_string(gid) + " outside 1.." + std::to_string(num_graphs));
    graph_of[i] = static_cast<int>(gid) - 1;
    local_of[i] = graph_size[graph_of[i]]++;
  }

  std::vector<std::set<std::pair<int, int>>> edges(num_graphs);
  const std::string a_file = base + "_A.txt";
  for (size_t ln = 0; ln < edge_lines.size(); ++ln) {
    if (edge_lines[ln].empty()) continue;
    const auto toks = split_commas(edge_lines[ln]);
    if (toks.size() != 2)
      throw std::runtime_error(a_file + " line " + std::to_string(ln + 1) +
                               ": expected 'u, v', got '" + edge_lines[ln] + "'");
    const long u1 = parse_long(toks[0], a_file, ln + 1);
    const long v1 = parse_long(toks[1], a_file, ln + 1);
    if (u1 < 1 || u1 > total_nodes || v1 < 1 || v1 > total_nodes)
      throw std::runtime_error(a_file + " line " + std::to_string(ln + 1) +
                               ": node id outside 1.." + std::to_string(total_nodes));
    const int u = static_cast<int>(u1) - 1, v = static_cast<int>(v1) - 1;
    if (graph_of[u] != graph_of[v])
      throw std::runtime_error(a_file + " line " + std::to_string(ln + 1) +
                               ": edge connects nodes of different graphs");
    if (u == v)
      throw std::runtime_error(a_file + " line " + std::to_string(ln + 1) + ": self-loop");
    const int a = std::min(local_of[u], local_of[v]);
    const int b = std::max(local_of[u], local_of[v]);
    edges[graph_of[u]].insert({a, b});  // both directions collapse here
  }

  std::vector<std::vector<int>> node_labels;
  if (!node_label_lines.empty()) {
    const std::string f = base + "_node_labels.txt";
    if (static_cast<int>(node_label_lines.size()) != total_nodes)
      throw std::runtime_error(f + " has " + std::to_string(node_label_lines.size()) +
                               " rows, expected " + std::to_string(total_nodes));
    node_labels.assign(num_graphs, {});
    for (int g = 0; g < num_graphs; ++g) node_labels[g].resize(graph_size[g]);
    for (int i = 0; i < total_nodes; ++i)
      node_labels[graph_of[i]][local_of[i]] =
          static_cast<int>(parse_long(node_label_lines[i], f, i + 1));
  }

  std::vector<Matrix> attrs;
  if (!attr_lines.empty()) {
    const std::string f = base + "_node_attributes.txt";
    if (static_cast<int>(attr_lines.size()) != total_nodes)
      throw std::runtime_error(f + " has " + std::to_string(attr_lines.size()) +
                               " rows, expected " + std::to_string(total_nodes));
    int dim = -1;
    std::vector<std::vector<double>> rows(total_nodes);
    for (int i = 0; i < total_nodes; ++i) {
      const auto toks = split_commas(attr_lines[i]);
      if (dim == -1) dim = static_cast<int>(toks.size());
      if (static_cast<int>(toks.size()) != dim)
        throw std::runtime_error(f + " line " + std::to_string(i + 1) + ": expected " +
                                 std::to_string(dim) + " attributes, got " +
                                 std::to_string(toks.size()));
      for (const auto& t : toks) {
        try {
          rows[i].push_back(std::stod(t));
        } catch (const std::exception&) {
          throw std::runtime_error(f + " line " + std::to_string(i + 1) +
                                   ": cannot parse attribute '" + t + "'");
        }
      }
    }
    attrs.assign(num_graphs, Matrix());
    for (int g = 0; g < num_graphs; ++g) attrs[g] = Matrix(graph_size[g], dim);
    for (int i = 0; i < total_nodes; ++i)
      for (int j = 0; j < dim; ++j) attrs[graph_of[i]](local_of[i], j) = rows[i][j];
  }

  Dataset ds;
  ds.name = name;
  ds.graphs.reserve(num_graphs);
  for (int g = 0; g < num_graphs; ++g) {
    Graph graph;
    graph.n = graph_size[g];
    graph.edges.assign(edges[g].begin(), edges[g].end());
    if (!node_labels.empty()) graph.node_labels = node_labels[g];
    if (!attrs.empty()) graph.features = attrs[g];
    graph.validate();
    ds.graphs.push_back(std::move(graph));
  }

  const std::string l_file = base + "_graph_labels.txt";
  ds.original_labels.reserve(num_graphs);
  for (int g = 0; g < num_graphs; ++g)
    ds.original_labels.push_back(static_cast<int>(parse_long(graph_label_lines[g], l_file, g + 1)));
  std::vector<int> distinct = ds.original_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  ds.num_classes = static_cast<int>(distinct.size());
  ds.labels.reserve(num_graphs);
  for (int v : ds.original_labels)
    ds.labels.push_back(static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin()));
  return ds;
}

Dataset synth_cycles_vs_cliques(int count, int min_size, int max_size, uint64_t seed) {
  if (count < 2 || count % 2 != 0)
    throw std::invalid_argument("synth_cycles_vs_cliques: count must be even and >= 2");
  const int lo = std::max(4, min_size);
  if (max_size < lo)
    throw std::invalid_argument("synth_cycles_vs_cliques: max_size " + std::to_string(max_size) +
                                " below minimum usable size " + std::to_string(lo));
  CounterRng rng(seed, CounterRng::fnv1a("cycles-vs-cliques"));
  Dataset ds;
  ds.name = "cycles-vs-cliques";
  ds.num_classes = 2;
  for (int i = 0; i < count; ++i) {
    const int n = lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_size - lo + 1)));
    const int label = i % 2;
    ds.graphs.push_back(label == 0 ? make_cycle(n) : make_complete(n));
    ds.labels.push_back(label);
    ds.original_labels.push_back(label);
  }
  return ds;
}

int mutag_cycle_rule(const Graph& g) {
  const int cyclomatic = g.num_edges() - g.n + g.num_components();
  return cyclomatic >= 3 ? 1 : 2;
}

double mutag_rule_accuracy(const Dataset& ds) {
  if (ds.num_classes != 2)
    throw std::invalid_argument("mutag_rule_accuracy: dataset has " +
                                std::to_string(ds.num_classes) + " classes, expected 2");
  int hi = ds.original_labels[0], lo = ds.original_labels[0];
  for (int v : ds.original_labels) {
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  int hits = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const int predicted_original = mutag_cycle_rule(ds.graphs[i]) == 1 ? hi : lo;
    if (predicted_original == ds.original_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / ds.size();
}

namespace {
constexpr char kCkptMagic[8] = {'U', 'G', 'E', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& config_echo) {
  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.bytes(kCkptMagic, sizeof kCkptMagic);
    w.u32(kCkptVersion);
    w.str(config_echo);

    const auto names = params.param_names();
    w.u64(names.size());
    for (const auto& name : names) {
      const Matrix& m = params.param(name).value();
      w.str(name);
      w.u8(params.trainable(name) ? 1 : 0);
      w.u32(static_cast<uint32_t>(m.rows()));
      w.u32(static_cast<uint32_t>(m.cols()));
      w.f64s(m.data(), m.size());
    }

    const auto bn = params.bn_names();
    w.u64(bn.size());
    for (const auto& name : bn) {
      const auto& st = params.bn(name);
      w.str(name);
      w.u32(static_cast<uint32_t>(st.running_mean.cols()));
      w.f64s(st.running_mean.data(), st.running_mean.size());
      w.f64s(st.running_var.data(), st.running_var.size());
    }

    // Registry: dataset-owned parameter names grouped by the ds.<name>. prefix.
    std::map<std::string, std::vector<std::string>> registry;
    for (const auto& name : names) {
      if (name.rfind("ds.", 0) != 0) continue;
      const size_t dot = name.find('.', 3);
      if (dot == std::string::npos) continue;
      registry[name.substr(3, dot - 3)].push_back(name);
    }
    w.u64(registry.size());
    for (const auto& [ds, members] : registry) {
      w.str(ds);
      w.u64(members.size());
      for (const auto& m : members) w.str(m);
    }
    w.check();
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  BinReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != kCkptVersion)
    throw std::runtime_error("'" + path + "' has unsupported checkpoint version " +
                             std::to_string(version));

  Checkpoint ck;
  ck.config_echo = r.str();
  const uint64_t n_params = r.u64();
  for (uint64_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    const bool trainable = r.u8() != 0;
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    Matrix m(rows, cols);
    r.f64s(m.data(), m.size());
    ck.params.create(name, std::move(m), trainable);
  }
  const uint64_t n_bn = r.u64();
  for (uint64_t i = 0; i < n_bn; ++i) {
    const std::string name = r.str();
    const int channels = static_cast<int>(r.u32());
    auto& st = ck.params.bn_state(name, channels);
    r.f64s(st.running_mean.data(), st.running_mean.size());
    r.f64s(st.running_var.data(), st.running_var.size());
  }
  const uint64_t n_ds = r.u64();
  for (uint64_t i = 0; i < n_ds; ++i) {
    const std::string ds = r.str();
    const uint64_t count = r.u64();
    auto& members = ck.dataset_registry[ds];
    for (uint64_t j = 0; j < count; ++j) members.push_back(r.str());
  }
  return ck;
}

}  // namespace uge
