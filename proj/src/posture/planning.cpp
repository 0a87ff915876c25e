#include "promo/posture/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "promo/motion/rotation.hpp"

namespace promo::posture {

void CandidateSet::validate() const {
  if (scripts.empty()) throw DomainError("candidate set needs at least one frame");
  if (poses.size() != scripts.size()) throw ShapeError("candidate set: one pose list per script");
  const std::size_t L = poses.front().size();
  if (L == 0) throw DomainError("candidate set needs at least one candidate");
  for (const auto& row : poses) {
    if (row.size() != L) throw ShapeError("candidate set: ragged candidate lists");
    for (const auto& p : row) p.validate();
  }
}

namespace {

bool degenerate(const float* values) {
  for (int j = 0; j < motion::kJointCount; ++j)
    if (!motion::valid_sixd(values + 6 * j)) return true;
  return false;
}

motion::PoseVector to_pose(const float* values) {
  motion::PoseVector p;
  std::copy(values, values + motion::kPoseDim, p.values.begin());
  return p;
}

std::vector<motion::PoseVector> candidates_for(const PostureDenoiser& denoiser, const ScriptCondition& cond,
                                               std::size_t i, std::size_t L, double w, std::uint64_t seed) {
  const diffusion::GuidanceConfig guidance{.w = w};
  std::vector<std::uint64_t> seeds(L);
  for (std::size_t j = 0; j < L; ++j) seeds[j] = derive_seed(seed, {i, j});
  const auto x = diffusion::sample<ScriptCondition>(denoiser, denoiser.schedule(),
                                                    std::vector<const ScriptCondition*>(L, &cond), guidance,
                                                    {motion::kPoseDim}, seeds);
  std::vector<motion::PoseVector> out;
  for (std::size_t j = 0; j < L; ++j) {
    const float* row = x.row(j).data();
    if (!degenerate(row)) {
      out.push_back(to_pose(row));
      continue;
    }
    const auto retry = diffusion::sample<ScriptCondition>(denoiser, denoiser.schedule(), {&cond}, guidance,
                                                          {motion::kPoseDim}, {derive_seed(seed, {i, j, 1})});
    if (degenerate(retry.row(0).data()))
      throw DomainError("candidate " + std::to_string(j) + " of script " + std::to_string(i) +
                        " is degenerate after one resample");
    out.push_back(to_pose(retry.row(0).data()));
  }
  return out;
}

}  // namespace

CandidateSet generate_candidates(const PostureDenoiser& denoiser, const std::vector<script::PostureScript>& scripts,
                                 std::size_t L, double w, std::uint64_t seed, unsigned threads) {
  if (L == 0) throw DomainError("candidate count L must be at least 1");
  if (scripts.empty()) throw DomainError("generate_candidates needs at least one script");
  CandidateSet set;
  set.scripts = scripts;
  set.poses.resize(scripts.size());
  std::vector<ScriptCondition> conds;
  for (const auto& s : scripts) conds.push_back(ScriptCondition::from_script(s, denoiser.config().max_tokens));

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, scripts.size());
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t worker) {
    try {
      for (std::size_t i = worker; i < scripts.size(); i += workers)
        set.poses[i] = candidates_for(denoiser, conds[i], i, L, w, seed);
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(work, k);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return set;
}

void PlanningMatrices::validate(double tol) const {
  const std::size_t F = frames(), L = candidates();
  if (F == 0 || L == 0) throw DomainError("planning matrices need F >= 1 and L >= 1");
  if (transition.size() != F - 1) throw ShapeError("planning matrices: expected F-1 transition matrices");
  auto check_row = [&](const std::vector<double>& row, const char* what) {
    if (row.size() != L) throw ShapeError(std::string("planning matrices: ") + what + " has wrong length");
    double sum = 0.0;
    for (double p : row) {
      if (!(p > 0.0) || !std::isfinite(p)) throw DomainError(std::string("planning matrices: non-positive ") + what);
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw DomainError(std::string("planning matrices: ") + what + " does not sum to 1");
  };
  for (const auto& e : emission) check_row(e, "emission");
  for (const auto& a : transition) {
    if (a.size() != L) throw ShapeError("planning matrices: transition has wrong row count");
    for (const auto& row : a) check_row(row, "transition row");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) sum += out[i] = std::exp(logits[i] - m);
  for (double& v : out) v /= sum;
  return out;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("embedding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::vector<double>> rows_of(const nn::Tensor<float>& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r].assign(t.row(r).begin(), t.row(r).end());
  return out;
}

std::vector<std::vector<std::vector<double>>> pose_embeddings(const CandidateSet& c, const RetrievalModel& enc) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& row : c.poses) out.push_back(rows_of(enc.encode_poses(row)));
  return out;
}

}  // namespace

std::vector<std::vector<std::vector<double>>> transition_from_embeddings(
    const std::vector<std::vector<std::vector<double>>>& e) {
  if (e.size() < 2) throw DomainError("transition matrices need F >= 2");
  std::vector<std::vector<std::vector<double>>> out;
  for (std::size_t i = 1; i < e.size(); ++i) {
    std::vector<std::vector<double>> a;
    for (const auto& prev : e[i - 1]) {
      std::vector<double> logits;
      for (const auto& cur : e[i]) logits.push_back(dot(prev, cur));
      a.push_back(softmax(logits));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<std::vector<double>> emission_from_embeddings(const std::vector<std::vector<double>>& scripts,
                                                          const std::vector<std::vector<std::vector<double>>>& poses) {
  if (scripts.empty() || scripts.size() != poses.size()) throw ShapeError("emission: one script embedding per frame");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    std::vector<double> logits;
    for (const auto& p : poses[i]) logits.push_back(dot(scripts[i], p));
    out.push_back(softmax(logits));
  }
  return out;
}

std::vector<std::vector<std::vector<double>>> build_transition(const CandidateSet& c, const RetrievalModel& enc) {
  return transition_from_embeddings(pose_embeddings(c, enc));
}

std::vector<std::vector<double>> build_emission(const CandidateSet& c, const RetrievalModel& enc) {
  return emission_from_embeddings(rows_of(enc.encode_scripts(c.scripts)), pose_embeddings(c, enc));
}

PlanningMatrices build_matrices(const CandidateSet& c, const RetrievalModel& enc) {
  c.validate();
  const auto poses = pose_embeddings(c, enc);
  PlanningMatrices m;
  m.emission = emission_from_embeddings(rows_of(enc.encode_scripts(c.scripts)), poses);
  if (c.frames() >= 2) m.transition = transition_from_embeddings(poses);
  return m;
}

PosePath viterbi_select(const PlanningMatrices& m) {
  m.validate();
  const std::size_t F = m.frames(), L = m.candidates();
  std::vector<double> score(L), next(L);
  std::vector<std::vector<int>> back(F, std::vector<int>(L, 0));
  for (std::size_t k = 0; k < L; ++k) score[k] = std::log(m.emission[0][k]);
  for (std::size_t i = 1; i < F; ++i) {
    const auto& a = m.transition[i - 1];
    for (std::size_t k = 0; k < L; ++k) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t j = 0; j < L; ++j) {
        const double s = score[j] + std::log(a[j][k]);
        if (s > best) best = s, arg = static_cast<int>(j);
      }
      next[k] = best + std::log(m.emission[i][k]);
      back[i][k] = arg;
    }
    score.swap(next);
  }
  PosePath path;
  path.indices.assign(F, 0);
  int k = 0;
  for (std::size_t j = 1; j < L; ++j)
    if (score[j] > score[k]) k = static_cast<int>(j);
  path.log_prob = score[k];
  for (std::size_t i = F; i-- > 0;) {
    path.indices[i] = k;
    k = back[i][k];
  }
  return path;
}

PosePath brute_force_select(const PlanningMatrices& m) {
  m.validate();
  const std::size_t F = m.frames(), L = m.candidates();
  double count = 1.0;
  for (std::size_t i = 0; i < F; ++i) count *= static_cast<double>(L);
  if (count > 1e6) throw DomainError("brute_force_select: more than 10^6 paths");
  // Enumerate with the last index most significant so that the first maximum
  // met is the one the Viterbi backtrace prefers.
  std::vector<int> g(F, 0);
  PosePath best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  while (true) {
    double s = std::log(m.emission[0][g[0]]);
    for (std::size_t i = 1; i < F; ++i) s = (s + std::log(m.transition[i - 1][g[i - 1]][g[i]])) + std::log(m.emission[i][g[i]]);
    if (s > best.log_prob) best = {g, s};
    std::size_t i = 0;
    while (i < F && ++g[i] == static_cast<int>(L)) g[i++] = 0;
    if (i == F) break;
  }
  return best;
}

std::vector<motion::PoseVector> path_poses(const CandidateSet& c, const PosePath& path) {
  if (path.indices.size() != c.frames()) throw ShapeError("path length differs from frame count");
  std::vector<motion::PoseVector> out;
  for (std::size_t i = 0; i < path.indices.size(); ++i) out.push_back(c.poses[i].at(static_cast<std::size_t>(path.indices[i])));
  return out;
}

}  // namespace promo::posture
