#pragma once

#include <vector>

#include "vdyn/corpus.hpp"

namespace vdyn {

// Location-to-group assignment with per-group member lists (members keep
// location order, groups are indexed 0..G-1).
struct GroupStructure {
  std::vector<int> group_of;
  std::vector<std::vector<int>> members;

  int num_groups() const { return static_cast<int>(members.size()); }
  int num_locations() const { return static_cast<int>(group_of.size()); }

  static GroupStructure from_assignment(std::vector<int> group_of);
  static GroupStructure single_group(int m);
};

double great_circle_km(double lat1, double lon1, double lat2, double lon2);

// Average-linkage agglomerative clustering of locations on great-circle
// distance, merged down to n_groups clusters. Ties merge the lexicographically
// smallest cluster pair, and final group ids are ordered by each group's
// smallest location index, so the assignment is deterministic.
std::vector<int> cluster_locations(const LocationRegistry& locations, int n_groups);

}  // namespace vdyn
