#pragma once

#include <cstddef>
#include <vector>

#include "vdyn/corpus.hpp"
#include "vdyn/model.hpp"

namespace vdyn {

// Mean learned rate matrix over every (sequence, position) pair of the given
// samples, using each position's realized token (EOS excluded).
// Non-hierarchical models only.
std::vector<double> avg_rate_matrix(TransmissionModel& model,
                                    const std::vector<Sample>& samples);

struct TreeEdge {
  int from = 0;  // smaller location index
  int to = 0;
  double weight = 0.0;
};

// Maximum spanning tree (Kruskal) of the symmetrized weight matrix. Only
// strictly positive weights form edges; a disconnected graph is an error that
// names the components. Ties prefer the lexicographically smallest (from, to).
std::vector<TreeEdge> max_spanning_tree(const std::vector<double>& weights, std::size_t m);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace vdyn
