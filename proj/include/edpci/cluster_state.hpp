#pragma once

#include <string>
#include <vector>

#include "error.hpp"
#include "kernels.hpp"

namespace edpci {

struct SubCluster {
  int size = 0;
  CovariateParams omega;
};

struct YCluster {
  int size = 0;
  OutcomeParams theta;
  std::vector<SubCluster> subs;
};

/// Nested partition: subject i sits in x-subcluster sx[i] of y-cluster sy[i].
/// Labels are kept dense (0-based) after every update.
struct ClusterState {
  std::vector<int> sy;
  std::vector<int> sx;
  std::vector<YCluster> clusters;

  int n() const { return static_cast<int>(sy.size()); }
  int k() const { return static_cast<int>(clusters.size()); }

  /// Throws Error when any bookkeeping invariant fails.
  void check_invariants() const {
    std::vector<std::vector<int>> counts(clusters.size());
    for (std::size_t j = 0; j < clusters.size(); ++j) counts[j].assign(clusters[j].subs.size(), 0);
    for (int i = 0; i < n(); ++i) {
      if (sy[i] < 0 || sy[i] >= k()) throw Error("subject " + std::to_string(i) + " has invalid y-label");
      if (sx[i] < 0 || sx[i] >= static_cast<int>(clusters[sy[i]].subs.size()))
        throw Error("subject " + std::to_string(i) + " has invalid x-label");
      ++counts[sy[i]][sx[i]];
    }
    int total = 0;
    for (std::size_t j = 0; j < clusters.size(); ++j) {
      const auto& c = clusters[j];
      if (c.size <= 0) throw Error("empty y-cluster " + std::to_string(j) + " left after compaction");
      if (c.subs.empty()) throw Error("y-cluster without x-subclusters");
      int sub_total = 0;
      for (std::size_t l = 0; l < c.subs.size(); ++l) {
        if (c.subs[l].size <= 0) throw Error("empty x-subcluster left after compaction");
        if (c.subs[l].size != counts[j][l]) throw Error("x-subcluster size does not match labels");
        if (c.subs[l].omega.treatment_probs.empty()) throw Error("occupied x-subcluster lacks parameters");
        sub_total += c.subs[l].size;
      }
      if (sub_total != c.size) throw Error("subcluster sizes do not sum to the y-cluster size");
      if (c.theta.beta.size() == 0) throw Error("occupied y-cluster lacks parameters");
      total += c.size;
    }
    if (total != n()) throw Error("cluster sizes do not sum to n");
  }

  std::vector<int> subcluster_counts() const {
    std::vector<int> out;
    for (const auto& c : clusters) out.push_back(static_cast<int>(c.subs.size()));
    return out;
  }
};

/// Concentration parameters of the y-level and x-level urns.
struct HyperState {
  double alpha_theta = 1.0;
  double alpha_omega = 1.0;
};

}  // namespace edpci
