#include "vdyn/groups.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vdyn/errors.hpp"

namespace vdyn {

GroupStructure GroupStructure::from_assignment(std::vector<int> group_of) {
  GroupStructure gs;
  int g_max = -1;
  for (int g : group_of) {
    if (g < 0) throw data_error("group assignment has an ungrouped location");
    g_max = std::max(g_max, g);
  }
  gs.members.resize(static_cast<std::size_t>(g_max + 1));
  for (std::size_t i = 0; i < group_of.size(); ++i)
    gs.members[static_cast<std::size_t>(group_of[i])].push_back(static_cast<int>(i));
  for (const auto& m : gs.members)
    if (m.empty()) throw data_error("group assignment has an empty group");
  gs.group_of = std::move(group_of);
  return gs;
}

GroupStructure GroupStructure::single_group(int m) {
  return from_assignment(std::vector<int>(static_cast<std::size_t>(m), 0));
}

double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double radius = 6371.0088;
  constexpr double deg = M_PI / 180.0;
  const double phi1 = lat1 * deg, phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg;
  const double dlam = (lon2 - lon1) * deg;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * radius * std::asin(std::min(1.0, std::sqrt(a)));
}

std::vector<int> cluster_locations(const LocationRegistry& locations, int n_groups) {
  const int m = locations.size();
  if (n_groups < 1 || n_groups > m)
    throw config_error("cluster_locations: need 1 <= n_groups <= number of locations");

  std::vector<double> dist(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const auto& a = locations.info(i);
      const auto& b = locations.info(j);
      dist[static_cast<std::size_t>(i) * m + j] = great_circle_km(a.lat, a.lon, b.lat, b.lon);
    }

  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < m; ++i) clusters.push_back({i});

  auto linkage = [&](const std::vector<int>& ca, const std::vector<int>& cb) {
    double s = 0.0;
    for (int i : ca)
      for (int j : cb) s += dist[static_cast<std::size_t>(i) * m + j];
    return s / (static_cast<double>(ca.size()) * static_cast<double>(cb.size()));
  };

  while (static_cast<int>(clusters.size()) > n_groups) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i + 1 < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = linkage(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    auto merged = clusters[bi];
    merged.insert(merged.end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(merged.begin(), merged.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    clusters[bi] = std::move(merged);
  }

  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  std::vector<int> group_of(static_cast<std::size_t>(m), -1);
  for (std::size_t g = 0; g < clusters.size(); ++g)
    for (int i : clusters[g]) group_of[static_cast<std::size_t>(i)] = static_cast<int>(g);
  return group_of;
}

}  // namespace vdyn
