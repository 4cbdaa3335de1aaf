#include "uge/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <queue>
#include <stdexcept>
#include <thread>

#include "uge/binio.hpp"
#include "uge/spectral.hpp"

namespace uge {

const char* kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::WL: return "wl";
    case KernelKind::SP: return "sp";
    case KernelKind::FGSD: return "fgsd";
  }
  throw std::invalid_argument("kernel_kind_name: unknown kind");
}

KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "wl") return KernelKind::WL;
  if (name == "sp") return KernelKind::SP;
  if (name == "fgsd") return KernelKind::FGSD;
  throw std::invalid_argument("unknown kernel kind '" + name + "' (expected wl, sp or fgsd)");
}

uint32_t WlDict::intern(const std::string& signature) {
  auto it = ids_.find(signature);
  if (it != ids_.end()) return it->second;
  const uint32_t id = static_cast<uint32_t>(order_.size());
  ids_.emplace(signature, id);
  order_.push_back(signature);
  return id;
}

namespace {

std::vector<int> base_labels(const Graph& g) {
  if (g.node_labels) return *g.node_labels;
  return g.degrees();
}

std::vector<std::vector<int>> adjacency_lists(const Graph& g) {
  std::vector<std::vector<int>> adj(g.n);
  for (const auto& [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

}  // namespace

std::map<uint32_t, int> wl_features(const Graph& g, int iterations, WlDict& dict) {
  if (iterations < 0) throw std::invalid_argument("wl_features: negative iteration count");
  g.validate();
  const auto adj = adjacency_lists(g);
  const auto raw = base_labels(g);

  std::map<uint32_t, int> feats;
  std::vector<uint32_t> cur(g.n);
  for (int i = 0; i < g.n; ++i) {
    cur[i] = dict.intern("0|" + std::to_string(raw[i]));
    ++feats[cur[i]];
  }
  for (int round = 1; round <= iterations; ++round) {
    std::vector<uint32_t> next(g.n);
    for (int i = 0; i < g.n; ++i) {
      std::vector<uint32_t> nb;
      nb.reserve(adj[i].size());
      for (int j : adj[i]) nb.push_back(cur[j]);
      std::sort(nb.begin(), nb.end());
      std::string sig = std::to_string(round) + "|" + std::to_string(cur[i]) + "|";
      for (size_t t = 0; t < nb.size(); ++t) {
        if (t) sig += ',';
        sig += std::to_string(nb[t]);
      }
      next[i] = dict.intern(sig);
    }
    for (int i = 0; i < g.n; ++i) ++feats[next[i]];
    cur = std::move(next);
  }
  return feats;
}

std::map<std::array<int, 3>, int> sp_features(const Graph& g) {
  g.validate();
  const auto adj = adjacency_lists(g);
  const auto labels = base_labels(g);

  std::map<std::array<int, 3>, int> feats;
  std::vector<int> dist(g.n);
  for (int s = 0; s < g.n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (dist[v] == -1) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
      }
    }
    for (int t = s + 1; t < g.n; ++t) {
      if (dist[t] < 0) continue;  // different component: no path to count
      const int la = std::min(labels[s], labels[t]);
      const int lb = std::max(labels[s], labels[t]);
      ++feats[{la, lb, dist[t]}];
    }
  }
  return feats;
}

std::vector<double> fgsd_features(const Graph& g, int bins, double range_max) {
  if (bins < 2) throw std::invalid_argument("fgsd_features: need at least 2 bins");
  if (!(range_max > 0.0)) throw std::invalid_argument("fgsd_features: range_max must be > 0");
  g.validate();

  const auto dec = eigendecompose(laplacian(g));
  const auto comp = g.component_ids();
  const double width = range_max / bins;

  std::vector<double> hist(static_cast<size_t>(bins) + 1, 0.0);
  for (int x = 0; x < g.n; ++x) {
    for (int y = x + 1; y < g.n; ++y) {
      if (comp[x] != comp[y]) {
        hist[bins] += 1.0;  // infinite distance lands in the overflow cell
        continue;
      }
      double s = 0.0;
      for (int k = 0; k < g.n; ++k) {
        if (dec.eigenvalues[k] <= 1e-8) continue;
        const double d = dec.eigenvectors(x, k) - dec.eigenvectors(y, k);
        s += d * d / dec.eigenvalues[k];
      }
      // Resistance distances of symmetric graphs can sit exactly on a bin
      // boundary; nudging by 1e-9 of a bin keeps the choice stable across
      // eigendecompositions of permuted copies.
      const double pos = s / width + 1e-9;
      if (pos < static_cast<double>(bins))
        hist[static_cast<int>(pos)] += 1.0;
      else
        hist[bins] += 1.0;
    }
  }
  return hist;
}

namespace {

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> cursor{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = cursor.fetch_add(1); i < count; i = cursor.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <typename K>
double sparse_dot(const std::map<K, int>& a, const std::map<K, int>& b) {
  double s = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      s += static_cast<double>(ia->second) * ib->second;
      ++ia;
      ++ib;
    }
  }
  return s;
}

double dense_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename Feature>
KernelMatrix assemble(KernelKind kind, const KernelConfig& cfg,
                      const std::vector<Feature>& feats, int threads,
                      const std::function<double(const Feature&, const Feature&)>& dot) {
  const int m = static_cast<int>(feats.size());
  KernelMatrix out;
  out.kind = kind;
  out.config = cfg;
  out.raw_diag.resize(m);
  out.values = Matrix(m, m);

  for (int i = 0; i < m; ++i) {
    out.raw_diag[i] = dot(feats[i], feats[i]);
    if (out.raw_diag[i] <= 0.0)
      throw std::runtime_error(std::string("kernel_matrix: graph ") + std::to_string(i) +
                               " has an empty " + kernel_kind_name(kind) +
                               " feature map (zero self-similarity)");
  }
  parallel_for(m, threads, [&](int i) {
    out.values(i, i) = 1.0;
    for (int j = i + 1; j < m; ++j) {
      const double v = dot(feats[i], feats[j]) /
                       std::sqrt(out.raw_diag[i] * out.raw_diag[j]);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  });
  return out;
}

}  // namespace

KernelMatrix kernel_matrix(const std::vector<Graph>& graphs, KernelKind kind,
                           const KernelConfig& cfg, int threads) {
  const int m = static_cast<int>(graphs.size());
  if (m == 0) throw std::invalid_argument("kernel_matrix: empty dataset");

  if (kind == KernelKind::WL) {
    WlDict dict;
    std::vector<std::map<uint32_t, int>> feats(m);
    // Dictionary ids must come out of one deterministic pass in dataset
    // order, so this stage stays sequential no matter the thread budget.
    for (int i = 0; i < m; ++i) feats[i] = wl_features(graphs[i], cfg.wl_iterations, dict);
    auto out = assemble<std::map<uint32_t, int>>(
        kind, cfg, feats, threads,
        [](const auto& a, const auto& b) { return sparse_dot(a, b); });
    out.wl_signatures = dict.signatures();
    return out;
  }
  if (kind == KernelKind::SP) {
    std::vector<std::map<std::array<int, 3>, int>> feats(m);
    parallel_for(m, threads, [&](int i) { feats[i] = sp_features(graphs[i]); });
    return assemble<std::map<std::array<int, 3>, int>>(
        kind, cfg, feats, threads,
        [](const auto& a, const auto& b) { return sparse_dot(a, b); });
  }
  std::vector<std::vector<double>> feats(m);
  parallel_for(m, threads,
               [&](int i) { feats[i] = fgsd_features(graphs[i], cfg.fgsd_bins, cfg.fgsd_range_max); });
  return assemble<std::vector<double>>(
      kind, cfg, feats, threads,
      [](const auto& a, const auto& b) { return dense_dot(a, b); });
}

Matrix batch_slice(const KernelMatrix& k, const std::vector<int>& indices) {
  const int b = static_cast<int>(indices.size());
  Matrix out(b, b);
  for (int i = 0; i < b; ++i) {
    const int gi = indices[i];
    if (gi < 0 || gi >= k.size())
      throw std::out_of_range("batch_slice: graph index " + std::to_string(gi) +
                              " outside 0.." + std::to_string(k.size() - 1));
    for (int j = 0; j < b; ++j) out(i, j) = k.values(gi, indices[j]);
  }
  k.slice_reads += static_cast<uint64_t>(b) * b;
  return out;
}

namespace {

constexpr char kKernelMagic[8] = {'U', 'G', 'E', 'K', 'E', 'R', 'N', '1'};
constexpr uint32_t kKernelVersion = 1;

}  // namespace

void save_kernel_cache(const std::string& path, const KernelMatrix& k) {
  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.bytes(kKernelMagic, sizeof kKernelMagic);
    w.u32(kKernelVersion);
    w.u32(static_cast<uint32_t>(k.kind));
    w.u32(static_cast<uint32_t>(k.config.wl_iterations));
    w.u32(static_cast<uint32_t>(k.config.fgsd_bins));
    w.f64(k.config.fgsd_range_max);
    const uint64_t m = static_cast<uint64_t>(k.size());
    w.u64(m);
    w.f64s(k.raw_diag.data(), k.raw_diag.size());
    w.f64s(k.values.data(), k.values.size());
    w.u64(k.wl_signatures.size());
    for (const auto& s : k.wl_signatures) w.str(s);
    w.check();
  }
  std::filesystem::rename(tmp, path);
}

KernelMatrix load_kernel_cache(const std::string& path) {
  BinReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kKernelMagic, sizeof magic) != 0)
    throw std::runtime_error("'" + path + "' is not a kernel cache (bad magic)");
  const uint32_t version = r.u32();
  if (version != kKernelVersion)
    throw std::runtime_error("'" + path + "' has unsupported kernel cache version " +
                             std::to_string(version));
  KernelMatrix k;
  const uint32_t kind = r.u32();
  if (kind > 2)
    throw std::runtime_error("'" + path + "' has unknown kernel kind " + std::to_string(kind));
  k.kind = static_cast<KernelKind>(kind);
  k.config.wl_iterations = static_cast<int>(r.u32());
  k.config.fgsd_bins = static_cast<int>(r.u32());
  k.config.fgsd_range_max = r.f64();
  const uint64_t m = r.u64();
  k.raw_diag.resize(m);
  r.f64s(k.raw_diag.data(), m);
  k.values = Matrix(static_cast<int>(m), static_cast<int>(m));
  r.f64s(k.values.data(), k.values.size());
  const uint64_t dict = r.u64();
  k.wl_signatures.reserve(dict);
  for (uint64_t i = 0; i < dict; ++i) k.wl_signatures.push_back(r.str());
  return k;
}

}  // namespace uge
