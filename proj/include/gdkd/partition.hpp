#pragma once

// Class-index partitions and the two-level (group mass / within-group)
// decomposition of a probability vector.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdkd/numeric.hpp"

namespace gdkd {

enum class PartitionStrategy : std::uint8_t { TargetLabel, TopK, Top1TopKRest, Explicit };

const char* to_string(PartitionStrategy s) noexcept;

/// Mutually exclusive, jointly exhaustive index groups over {0..C-1}.
/// Every group is nonempty and stored in ascending index order; there are
/// always at least two groups. Construct only through the factories below.
class Partition {
 public:
  /// Validates and normalises (sorts) the groups. Throws Domain or
  /// EmptyPartition on violation.
  static Partition from_groups(std::vector<IndexSet> groups, Index num_classes,
                               PartitionStrategy strategy = PartitionStrategy::Explicit);

  const std::vector<IndexSet>& groups() const noexcept { return groups_; }
  const IndexSet& group(std::size_t m) const { return groups_.at(m); }
  std::size_t size() const noexcept { return groups_.size(); }
  Index num_classes() const noexcept { return num_classes_; }
  PartitionStrategy strategy() const noexcept { return strategy_; }

  /// Group id of every class.
  const std::vector<std::size_t>& membership() const noexcept { return group_of_; }

  bool operator==(const Partition& other) const { return groups_ == other.groups_; }

 private:
  Partition() = default;

  std::vector<IndexSet> groups_;
  std::vector<std::size_t> group_of_;
  Index num_classes_ = 0;
  PartitionStrategy strategy_ = PartitionStrategy::Explicit;
};

/// Class indices sorted by descending logit; equal logits keep ascending
/// index order.
IndexSet rank_classes(std::span<const double> z);

/// [{k largest teacher logits}, {rest}]. Requires 1 <= k <= C-1.
Partition partition_topk(std::span<const double> z_teacher, std::size_t k);

/// [{t}, {0..C-1} \ {t}].
Partition partition_target(Index target, Index num_classes);

/// [{rank 1}, {ranks 2..k}, {rest}]. Requires 2 <= k <= C-1.
Partition partition_gdkd3(std::span<const double> z_teacher, std::size_t k);

struct DecomposedDistribution {
  Vec top_level;                // group masses b_m
  std::vector<Vec> leaves;      // within-group distributions, ordered like the group
  std::vector<bool> degenerate; // group mass was exactly 0; leaf set to uniform
};

DecomposedDistribution decompose(std::span<const double> p, const Partition& partition);

void to_json(nlohmann::json& j, const Partition& partition);
/// Reads an array of class-index arrays; C is the total number of indices.
Partition partition_from_json(const nlohmann::json& j);

}  // namespace gdkd
