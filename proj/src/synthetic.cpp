#include "gdkd/synthetic.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <random>

namespace gdkd {

void validate(const SyntheticTaskSpec& spec) {
  if (spec.num_classes < 2) throw Error(ErrorKind::Config, "num_classes must be >= 2");
  if (spec.input_dim == 0 || spec.clusters_per_class == 0 || spec.linked_group_size == 0 ||
      spec.n_train == 0 || spec.n_test == 0) {
    throw Error(ErrorKind::Config, "synthetic task counts must be positive");
  }
  if (!(spec.overlap >= 0.0 && spec.overlap <= 1.0)) {
    throw Error(ErrorKind::Config, "overlap must lie in [0, 1]");
  }
  if (!(spec.noise >= 0.0) || !(spec.center_scale > 0.0)) {
    throw Error(ErrorKind::Config, "noise must be >= 0 and center_scale > 0");
  }
}

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  j = {{"num_classes", s.num_classes},     {"input_dim", s.input_dim},
       {"clusters_per_class", s.clusters_per_class}, {"overlap", s.overlap},
       {"linked_group_size", s.linked_group_size},   {"center_scale", s.center_scale},
       {"noise", s.noise},                 {"n_train", s.n_train},
       {"n_test", s.n_test},               {"seed", s.seed}};
}

SyntheticTaskSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticTaskSpec s) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "task must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "num_classes") s.num_classes = v.get<std::size_t>();
      else if (key == "input_dim") s.input_dim = v.get<std::size_t>();
      else if (key == "clusters_per_class") s.clusters_per_class = v.get<std::size_t>();
      else if (key == "overlap") s.overlap = v.get<double>();
      else if (key == "linked_group_size") s.linked_group_size = v.get<std::size_t>();
      else if (key == "center_scale") s.center_scale = v.get<double>();
      else if (key == "noise") s.noise = v.get<double>();
      else if (key == "n_train") s.n_train = v.get<std::size_t>();
      else if (key == "n_test") s.n_test = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else throw Error(ErrorKind::Config, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "task field '" + key + "': " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "task field '" + key + "': " + e.what());
    }
  }
  return s;
}

Dataset gen_synthetic(const SyntheticTaskSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t c = spec.num_classes;
  const std::size_t d = spec.input_dim;
  const std::size_t q = spec.clusters_per_class;
  const std::size_t groups = (c + spec.linked_group_size - 1) / spec.linked_group_size;

  // Shared centre per (group, cluster) and a private offset per (class, cluster).
  Matrix shared(groups * q, d);
  for (double& v : shared.data) v = spec.center_scale * unit(rng);
  Matrix centers(c * q, d);
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t g = k / spec.linked_group_size;
    for (std::size_t j = 0; j < q; ++j) {
      for (std::size_t i = 0; i < d; ++i) {
        const double own = spec.center_scale * unit(rng);
        centers.at(k * q + j, i) = (1.0 - spec.overlap) * own + spec.overlap * shared.at(g * q + j, i);
      }
    }
  }

  std::uniform_int_distribution<std::size_t> pick_cluster(0, q - 1);
  auto draw = [&](std::size_t n, Matrix& x, IndexSet& y) {
    x = Matrix(n, d);
    y.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const Index label = s % c;
      const std::size_t cl = pick_cluster(rng);
      y[s] = label;
      for (std::size_t i = 0; i < d; ++i) {
        x.at(s, i) = centers.at(label * q + cl, i) + spec.noise * unit(rng);
      }
    }
  };
  Dataset data;
  data.num_classes = c;
  draw(spec.n_train, data.x_train, data.y_train);
  draw(spec.n_test, data.x_test, data.y_test);
  return data;
}

namespace {

void append_u64(std::string& buf, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void append_matrix(std::string& buf, const Matrix& m) {
  append_u64(buf, m.rows);
  append_u64(buf, m.cols);
  for (double v : m.data) append_u64(buf, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

std::string dataset_hash(const Dataset& data) {
  std::string body;
  append_u64(body, data.num_classes);
  append_matrix(body, data.x_train);
  for (Index y : data.y_train) append_u64(body, y);
  append_matrix(body, data.x_test);
  for (Index y : data.y_test) append_u64(body, y);

  const std::string blob = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned char byte : digest) {
    hex.push_back(kHex[byte >> 4]);
    hex.push_back(kHex[byte & 0xf]);
  }
  return hex;
}

}  // namespace gdkd
