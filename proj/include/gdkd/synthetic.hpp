#pragma once

// Synthetic classification tasks with controllable class confusability.
// Classes come in linked groups; `overlap` pulls the cluster centres of a
// group towards a shared centre, so a well-trained model spreads its soft
// predictions over the group.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gdkd/numeric.hpp"

namespace gdkd {

struct SyntheticTaskSpec {
  std::size_t num_classes = 20;
  std::size_t input_dim = 16;
  std::size_t clusters_per_class = 2;
  double overlap = 0.8;             // in [0, 1]
  std::size_t linked_group_size = 4;
  double center_scale = 1.0;        // per-coordinate std of cluster centres
  double noise = 1.0;               // per-coordinate std of samples around a centre
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
};

void validate(const SyntheticTaskSpec& spec);
void to_json(nlohmann::json& j, const SyntheticTaskSpec& spec);
SyntheticTaskSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticTaskSpec base = {});

struct Dataset {
  std::size_t num_classes = 0;
  Matrix x_train;
  IndexSet y_train;
  Matrix x_test;
  IndexSet y_test;
};

/// Deterministic in spec.seed. Labels cycle through the classes so every
/// class is represented in both splits whenever n >= C.
Dataset gen_synthetic(const SyntheticTaskSpec& spec);

/// Git-style blob SHA-1 of the dataset's little-endian serialisation.
std::string dataset_hash(const Dataset& data);

}  // namespace gdkd
