#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "uge/graph.hpp"
#include "uge/matrix.hpp"

namespace uge {

enum class KernelKind { WL = 0, SP = 1, FGSD = 2 };

const char* kernel_kind_name(KernelKind k);
KernelKind kernel_kind_from_name(const std::string& name);

struct KernelConfig {
  int wl_iterations = 3;
  int fgsd_bins = 200;
  double fgsd_range_max = 10.0;

  bool operator==(const KernelConfig&) const = default;
};

// Shared compressed-label dictionary for the subtree kernel. Signatures are
// interned in first-seen order over a canonical pass (graphs in dataset
// order, nodes in index order, refinement rounds outward), so every graph
// that shares a dictionary gets aligned feature ids.
class WlDict {
 public:
  uint32_t intern(const std::string& signature);
  const std::vector<std::string>& signatures() const { return order_; }
  size_t size() const { return order_.size(); }

 private:
  std::unordered_map<std::string, uint32_t> ids_;
  std::vector<std::string> order_;
};

// Sparse count features keyed by compressed label id. Covers rounds 0..h of
// label refinement; round r contributes its own ids, so counts from different
// rounds never collide. Nodes fall back to degree labels when the graph
// carries no categorical labels.
std::map<uint32_t, int> wl_features(const Graph& g, int iterations, WlDict& dict);

// Count features keyed by (label_a, label_b, distance) with label_a <=
// label_b, over unordered pairs of distinct nodes in the same connected
// component. Distances by breadth-first search; degree labels as fallback.
std::map<std::array<int, 3>, int> sp_features(const Graph& g);

// Histogram (bins equal-width cells over [0, range_max] plus one overflow
// cell) of the harmonic spectral distance S(x,y) = sum_{lambda_k > 0}
// (1/lambda_k) (u_k(x) - u_k(y))^2 over unordered pairs of distinct nodes.
// Eigenvalues below 1e-8 count as zero; pairs in different components go to
// the overflow cell.
std::vector<double> fgsd_features(const Graph& g, int bins, double range_max);

// Normalized gram matrix over a dataset: values(i,j) = raw(i,j) /
// sqrt(raw(i,i) * raw(j,j)), diagonal exactly 1. raw_diag keeps the
// unnormalized self-similarities. For WL the interned dictionary is part of
// the state so caches can be reused.
struct KernelMatrix {
  KernelKind kind = KernelKind::WL;
  KernelConfig config;
  std::vector<double> raw_diag;
  Matrix values;
  std::vector<std::string> wl_signatures;

  // Total kernel entries handed out through batch_slice; lets tests assert
  // that training touches O(B^2) entries per batch and nothing more.
  mutable uint64_t slice_reads = 0;

  int size() const { return values.rows(); }
};

// Builds the normalized kernel matrix for one dataset. A graph whose feature
// map is empty has zero self-similarity and cannot be normalized; that is
// reported as an error naming the graph index. threads > 1 parallelizes the
// distance/histogram extraction; the WL dictionary pass is always the same
// sequential canonical order.
KernelMatrix kernel_matrix(const std::vector<Graph>& graphs, KernelKind kind,
                           const KernelConfig& cfg, int threads = 1);

// B x B sub-matrix for the given graph indices (order preserved, repeats
// allowed). Out-of-range indices are errors.
Matrix batch_slice(const KernelMatrix& k, const std::vector<int>& indices);

// Self-describing binary cache: magic, format version, config echo, raw
// diagonal, normalized values, and the WL dictionary when applicable.
// Writing is atomic (temp file + rename). Loading verifies magic and version
// and reports truncation with the byte offset where data ran out.
void save_kernel_cache(const std::string& path, const KernelMatrix& k);
KernelMatrix load_kernel_cache(const std::string& path);

}  // namespace uge
