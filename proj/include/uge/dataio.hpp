#pragma once

#include <map>
#include <string>
#include <vector>

#include "uge/graph.hpp"
#include "uge/nn.hpp"

namespace uge {

// A labeled graph collection. labels are remapped to contiguous class ids
// 0..num_classes-1 in ascending order of the source values; original_labels
// keeps the values exactly as read.
struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  std::vector<int> labels;
  std::vector<int> original_labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(graphs.size()); }
};

// Reads the NAME_A.txt / NAME_graph_indicator.txt / NAME_graph_labels.txt
// triplet from dir (NAME defaults to the directory basename), plus optional
// NAME_node_labels.txt and NAME_node_attributes.txt. Node and graph ids are
// 1-indexed in the files and rebased to 0. Edges appearing in both
// directions collapse to one undirected edge. Malformed rows, edges crossing
// graph boundaries, and missing mandatory files are reported with the file
// and line involved.
Dataset load_tu(const std::string& dir, const std::string& name = "");

// count graphs, alternating cycles (label 0) and cliques (label 1), node
// counts uniform in [max(4, min_size), max_size]. count must be even and the
// size range non-empty. Deterministic in seed.
Dataset synth_cycles_vs_cliques(int count, int min_size, int max_size, uint64_t seed);

// Cycle-count rule: a graph with cyclomatic number |E| - |V| + #components
// >= 3 is predicted as class 1, otherwise class 2 (the labels used by the
// mutagenicity benchmark).
int mutag_cycle_rule(const Graph& g);

// Fraction of graphs whose rule prediction matches the dataset's original
// two-class labels; the numerically larger original label is taken as
// class 1 (mutagenic), the other as class 2.
double mutag_rule_accuracy(const Dataset& ds);

// Binary checkpoint: magic + version, the fully-resolved config echo, every
// named tensor (trainable flag, shape, float64 payload), batch-norm running
// statistics, and a registry of which parameter names belong to which
// dataset (derived from the "ds.<name>." prefix). Writes are atomic via a
// temp file + rename. Round trips are byte-exact: load followed by save
// reproduces the identical file.
struct Checkpoint {
  ModelParams params;
  std::string config_echo;
  std::map<std::string, std::vector<std::string>> dataset_registry;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& config_echo);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uge
