#include "gdkd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "gdkd/partition.hpp"

namespace gdkd {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_labels(const LogitMatrix& m, std::span<const Index> labels) {
  if (labels.size() != m.rows) {
    throw Error(ErrorKind::Shape, std::to_string(m.rows) + " logit rows but " +
                                      std::to_string(labels.size()) + " labels");
  }
  for (Index y : labels) {
    if (y >= m.cols) throw Error(ErrorKind::Domain, "label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

ProfileSet class_profiles(const LogitMatrix& teacher, std::span<const Index> labels, double t) {
  check_labels(teacher, labels);
  check_temperature(t);
  const std::size_t c = teacher.cols;
  // Per-class lists of softmax rows, summed pairwise for order stability.
  std::vector<std::vector<Vec>> per_class(c);
  for (std::size_t r = 0; r < teacher.rows; ++r) {
    per_class[labels[r]].push_back(softmax(teacher.row(r), t));
  }
  ProfileSet out;
  for (Index k = 0; k < c; ++k) {
    const auto& rows = per_class[k];
    if (rows.empty()) {
      out.missing.push_back(k);
      continue;
    }
    ClassPredictionProfile prof;
    prof.class_id = k;
    prof.samples = rows.size();
    prof.mean_probs.resize(c);
    Vec column(rows.size());
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t s = 0; s < rows.size(); ++s) column[s] = rows[s][j];
      prof.mean_probs[j] = pairwise_sum(column) / static_cast<double>(rows.size());
    }
    prof.top_indices = rank_classes(prof.mean_probs);
    out.profiles.push_back(std::move(prof));
  }
  return out;
}

double multimodality_ratio(const ClassPredictionProfile& profile, std::size_t k) {
  const std::size_t c = profile.mean_probs.size();
  if (k < 2 || k > c) throw Error(ErrorKind::Domain, "multimodality ratio needs 2 <= k <= C");
  const double top = profile.mean_probs[profile.top_indices[0]];
  double rest = 0.0;
  for (std::size_t r = 1; r < k; ++r) rest += profile.mean_probs[profile.top_indices[r]];
  return rest > 0.0 ? top / rest : std::numeric_limits<double>::infinity();
}

EnhancementReport enhancement_check(std::span<const double> z_t, double t) {
  const Vec p = softmax(z_t, t);
  EnhancementReport r;
  r.top = argmax(z_t);
  for (Index i = 0; i < z_t.size(); ++i) {
    if (i != r.top) r.classes.push_back(i);
  }
  r.renormalized = subset_softmax(z_t, r.classes, t);
  r.original.reserve(r.classes.size());
  for (std::size_t j = 0; j < r.classes.size(); ++j) {
    r.original.push_back(p[r.classes[j]]);
    if (!(r.renormalized[j] > r.original[j])) r.holds = false;
  }
  return r;
}

Vec mean_sorted_curve(std::span<const ClassPredictionProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorKind::Domain, "no class profiles");
  const std::size_t c = profiles.front().mean_probs.size();
  std::vector<Vec> sorted;
  sorted.reserve(profiles.size());
  for (const auto& prof : profiles) {
    if (prof.mean_probs.size() != c) throw Error(ErrorKind::Shape, "profiles disagree on C");
    Vec s = prof.mean_probs;
    std::sort(s.begin(), s.end(), std::greater<>());
    sorted.push_back(std::move(s));
  }
  Vec curve(c);
  Vec column(sorted.size());
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t j = 0; j < sorted.size(); ++j) column[j] = sorted[j][r];
    curve[r] = pairwise_sum(column) / static_cast<double>(sorted.size());
  }
  return curve;
}

KneePoint knee_point_of_curve(std::span<const double> curve) {
  KneePoint out;
  out.curve.assign(curve.begin(), curve.end());
  const std::size_t c = curve.size();
  if (c < 3) return out;
  double scale = 0.0;
  for (double v : curve) scale = std::max(scale, std::abs(v));
  std::size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < c; ++i) {
    const double d2 = curve[i - 1] - 2.0 * curve[i] + curve[i + 1];
    if (d2 > best_val) {
      best_val = d2;
      best = i;
    }
  }
  if (!(best_val > 1e-12 * scale)) {
    out.degenerate = true;
    out.k = 1;
    return out;
  }
  out.k = std::clamp<std::size_t>(best, 1, c - 1);
  return out;
}

KneePoint knee_point_k(std::span<const ClassPredictionProfile> profiles) {
  return knee_point_of_curve(mean_sorted_curve(profiles));
}

DiscrepancyMatrix discrepancy_matrix(const LogitMatrix& teacher, const LogitMatrix& student,
                                     std::span<const Index> labels, double t, bool mask_diagonal) {
  if (teacher.rows == 0) throw Error(ErrorKind::Domain, "discrepancy matrix needs samples");
  if (teacher.rows != student.rows || teacher.cols != student.cols) {
    throw Error(ErrorKind::Shape, "teacher and student logit blocks differ in shape");
  }
  check_labels(teacher, labels);
  const std::size_t c = teacher.cols;
  DiscrepancyMatrix m;
  m.num_classes = c;
  m.diagonal_masked = mask_diagonal;
  m.logit_diff.assign(c * c, 0.0);
  m.prob_diff.assign(c * c, 0.0);
  m.row_counts.assign(c, 0);
  for (std::size_t r = 0; r < teacher.rows; ++r) {
    const auto zt = teacher.row(r);
    const auto zs = student.row(r);
    const Vec pt = softmax(zt, t);
    const Vec ps = softmax(zs, t);
    const Index y = labels[r];
    ++m.row_counts[y];
    for (std::size_t j = 0; j < c; ++j) {
      m.logit_diff[y * c + j] += std::abs(zt[j] - zs[j]);
      m.prob_diff[y * c + j] += std::abs(pt[j] - ps[j]);
    }
  }
  for (std::size_t y = 0; y < c; ++y) {
    if (m.row_counts[y] == 0) continue;
    const double n = static_cast<double>(m.row_counts[y]);
    for (std::size_t j = 0; j < c; ++j) {
      m.logit_diff[y * c + j] /= n;
      m.prob_diff[y * c + j] /= n;
    }
  }
  return m;
}

DiscrepancySummary summarize(const DiscrepancyMatrix& m) {
  DiscrepancySummary s;
  const std::size_t c = m.num_classes;
  Vec logit, prob;
  for (std::size_t y = 0; y < c; ++y) {
    if (m.row_counts[y] == 0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      if (m.diagonal_masked && j == y) continue;
      logit.push_back(m.logit_diff[y * c + j]);
      prob.push_back(m.prob_diff[y * c + j]);
    }
  }
  s.entries = logit.size();
  if (s.entries > 0) {
    s.mean_logit_diff = pairwise_sum(logit) / static_cast<double>(s.entries);
    s.mean_prob_diff = pairwise_sum(prob) / static_cast<double>(s.entries);
  }
  return s;
}

double nontop_prob_discrepancy(const LogitMatrix& teacher, const LogitMatrix& student, double t) {
  if (teacher.rows == 0) throw Error(ErrorKind::Domain, "no samples");
  if (teacher.rows != student.rows || teacher.cols != student.cols) {
    throw Error(ErrorKind::Shape, "teacher and student logit blocks differ in shape");
  }
  Vec per_sample(teacher.rows);
  for (std::size_t r = 0; r < teacher.rows; ++r) {
    const Vec pt = softmax(teacher.row(r), t);
    const Vec ps = softmax(student.row(r), t);
    const Index top = argmax(teacher.row(r));
    double acc = 0.0;
    for (std::size_t j = 0; j < pt.size(); ++j) {
      if (j != top) acc += std::abs(pt[j] - ps[j]);
    }
    per_sample[r] = acc / static_cast<double>(pt.size() - 1);
  }
  return pairwise_sum(per_sample) / static_cast<double>(teacher.rows);
}

void write_profiles_csv(std::ostream& os, std::span<const ClassPredictionProfile> profiles) {
  os << "class_id,rank,class,prob\n";
  for (const auto& prof : profiles) {
    for (std::size_t r = 0; r < prof.top_indices.size(); ++r) {
      const Index j = prof.top_indices[r];
      os << prof.class_id << ',' << r + 1 << ',' << j << ',' << fmt(prof.mean_probs[j]) << '\n';
    }
  }
}

void write_enhancement_csv(std::ostream& os, const LogitMatrix& teacher, double t) {
  os << "sample,top,class,p,p_renormalized\n";
  for (std::size_t r = 0; r < teacher.rows; ++r) {
    const EnhancementReport e = enhancement_check(teacher.row(r), t);
    for (std::size_t j = 0; j < e.classes.size(); ++j) {
      os << r << ',' << e.top << ',' << e.classes[j] << ',' << fmt(e.original[j]) << ','
         << fmt(e.renormalized[j]) << '\n';
    }
  }
}

void write_discrepancy_csv(std::ostream& os, const DiscrepancyMatrix& m) {
  os << "true_class,class,logit_diff,prob_diff,masked\n";
  for (std::size_t y = 0; y < m.num_classes; ++y) {
    for (std::size_t j = 0; j < m.num_classes; ++j) {
      const bool masked = m.diagonal_masked && y == j;
      os << y << ',' << j << ',' << fmt(m.logit_at(y, j)) << ',' << fmt(m.prob_at(y, j)) << ','
         << (masked ? 1 : 0) << '\n';
    }
  }
}

nlohmann::json to_json(const ProfileSet& set) {
  nlohmann::json j;
  j["missing_classes"] = set.missing;
  j["profiles"] = nlohmann::json::array();
  for (const auto& p : set.profiles) {
    j["profiles"].push_back({{"class_id", p.class_id},
                             {"samples", p.samples},
                             {"mean_probs", p.mean_probs},
                             {"top_indices", p.top_indices}});
  }
  return j;
}

nlohmann::json to_json(const KneePoint& knee) {
  return {{"k", knee.k}, {"degenerate", knee.degenerate}, {"curve", knee.curve}};
}

nlohmann::json to_json(const DiscrepancyMatrix& m) {
  const DiscrepancySummary s = summarize(m);
  return {{"num_classes", m.num_classes},
          {"diagonal_masked", m.diagonal_masked},
          {"mean_logit_diff", s.mean_logit_diff},
          {"mean_prob_diff", s.mean_prob_diff},
          {"entries", s.entries}};
}

}  // namespace gdkd
