#include "gdkd/partition.hpp"

#include <algorithm>
#include <numeric>

namespace gdkd {

const char* to_string(PartitionStrategy s) noexcept {
  switch (s) {
    case PartitionStrategy::TargetLabel: return "target_label";
    case PartitionStrategy::TopK: return "top_k";
    case PartitionStrategy::Top1TopKRest: return "top1_topk_rest";
    case PartitionStrategy::Explicit: return "explicit";
  }
  return "unknown";
}

Partition Partition::from_groups(std::vector<IndexSet> groups, Index num_classes,
                                 PartitionStrategy strategy) {
  if (groups.size() < 2) {
    throw Error(ErrorKind::Domain, "a partition needs at least two groups");
  }
  std::vector<std::size_t> owner(num_classes, groups.size());
  for (std::size_t m = 0; m < groups.size(); ++m) {
    auto& g = groups[m];
    if (g.empty()) {
      throw Error(ErrorKind::EmptyPartition, "group " + std::to_string(m) + " is empty");
    }
    std::sort(g.begin(), g.end());
    for (Index i : g) {
      if (i >= num_classes) {
        throw Error(ErrorKind::Domain, "class index " + std::to_string(i) + " out of range [0, " +
                                           std::to_string(num_classes) + ")");
      }
      if (owner[i] != groups.size()) {
        throw Error(ErrorKind::Domain,
                    "class " + std::to_string(i) + " appears in more than one group");
      }
      owner[i] = m;
    }
  }
  for (Index i = 0; i < num_classes; ++i) {
    if (owner[i] == groups.size()) {
      throw Error(ErrorKind::Domain, "class " + std::to_string(i) + " is not covered");
    }
  }
  Partition p;
  p.groups_ = std::move(groups);
  p.group_of_ = std::move(owner);
  p.num_classes_ = num_classes;
  p.strategy_ = strategy;
  return p;
}

IndexSet rank_classes(std::span<const double> z) {
  IndexSet order(z.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return z[a] > z[b]; });
  return order;
}

Partition partition_topk(std::span<const double> z_teacher, std::size_t k) {
  check_logits(z_teacher);
  const Index c = z_teacher.size();
  if (k < 1 || k >= c) {
    throw Error(ErrorKind::Domain,
                "top-k needs 1 <= k <= C-1 (k=" + std::to_string(k) + ", C=" + std::to_string(c) + ")");
  }
  const IndexSet order = rank_classes(z_teacher);
  IndexSet top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  IndexSet rest(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  return Partition::from_groups({std::move(top), std::move(rest)}, c, PartitionStrategy::TopK);
}

Partition partition_target(Index target, Index num_classes) {
  if (num_classes < 2) throw Error(ErrorKind::Domain, "need at least 2 classes");
  if (target >= num_classes) {
    throw Error(ErrorKind::Domain, "target " + std::to_string(target) + " out of range");
  }
  IndexSet rest;
  rest.reserve(num_classes - 1);
  for (Index i = 0; i < num_classes; ++i) {
    if (i != target) rest.push_back(i);
  }
  return Partition::from_groups({{target}, std::move(rest)}, num_classes,
                                PartitionStrategy::TargetLabel);
}

Partition partition_gdkd3(std::span<const double> z_teacher, std::size_t k) {
  check_logits(z_teacher);
  const Index c = z_teacher.size();
  if (k < 2 || k >= c) {
    throw Error(ErrorKind::Domain, "three-way partition needs 2 <= k <= C-1 (k=" +
                                       std::to_string(k) + ", C=" + std::to_string(c) + ")");
  }
  const IndexSet order = rank_classes(z_teacher);
  const auto kk = static_cast<std::ptrdiff_t>(k);
  IndexSet mid(order.begin() + 1, order.begin() + kk);
  IndexSet rest(order.begin() + kk, order.end());
  return Partition::from_groups({{order[0]}, std::move(mid), std::move(rest)}, c,
                                PartitionStrategy::Top1TopKRest);
}

DecomposedDistribution decompose(std::span<const double> p, const Partition& partition) {
  if (p.size() != partition.num_classes()) {
    throw Error(ErrorKind::Shape, "probability vector length does not match the partition");
  }
  DecomposedDistribution d;
  d.top_level.reserve(partition.size());
  d.leaves.reserve(partition.size());
  d.degenerate.reserve(partition.size());
  for (const IndexSet& g : partition.groups()) {
    double mass = 0.0;
    for (Index i : g) mass += p[i];
    Vec leaf(g.size());
    const bool empty_mass = mass <= 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      leaf[j] = empty_mass ? 1.0 / static_cast<double>(g.size()) : p[g[j]] / mass;
    }
    d.top_level.push_back(mass);
    d.leaves.push_back(std::move(leaf));
    d.degenerate.push_back(empty_mass);
  }
  return d;
}

void to_json(nlohmann::json& j, const Partition& partition) {
  j = nlohmann::json::array();
  for (const IndexSet& g : partition.groups()) j.push_back(g);
}

Partition partition_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidInput, "partition must be an array of arrays");
  std::vector<IndexSet> groups;
  Index total = 0;
  for (const auto& g : j) {
    if (!g.is_array()) throw Error(ErrorKind::InvalidInput, "partition group must be an array");
    groups.push_back(g.get<IndexSet>());
    total += groups.back().size();
  }
  return Partition::from_groups(std::move(groups), total);
}

}  // namespace gdkd
