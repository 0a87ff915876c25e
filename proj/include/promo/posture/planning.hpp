#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promo/posture/denoiser.hpp"
#include "promo/posture/encoders.hpp"

namespace promo::posture {

struct CandidateSet {
  std::vector<script::PostureScript> scripts;
  std::vector<std::vector<motion::PoseVector>> poses;  // [frame][candidate]

  std::size_t frames() const { return scripts.size(); }
  std::size_t candidates() const { return poses.empty() ? 0 : poses.front().size(); }
  void validate() const;
};

/// L candidates for each script. Candidate (i, j) is sampled from the seed
/// derive_seed(seed, {i, j}); a candidate with a degenerate 6D block is drawn
/// once more from derive_seed(seed, {i, j, 1}) before DomainError is thrown.
/// Scripts are distributed over `threads` workers, each sampling its script's
/// L candidates as one batch, so the result does not depend on `threads`.
CandidateSet generate_candidates(const PostureDenoiser& denoiser, const std::vector<script::PostureScript>& scripts,
                                 std::size_t L, double w, std::uint64_t seed, unsigned threads = 1);

struct PlanningMatrices {
  std::vector<std::vector<std::vector<double>>> transition;  // F-1 matrices, L x L, row-stochastic
  std::vector<std::vector<double>> emission;                 // F vectors of length L

  std::size_t frames() const { return emission.size(); }
  std::size_t candidates() const { return emission.empty() ? 0 : emission.front().size(); }
  /// Shape, positivity and normalization to within tol.
  void validate(double tol = 1e-9) const;
};

std::vector<double> softmax(std::span<const double> logits);

/// A^i[j][k] = softmax_k(e^{i-1}_j . e^i_k) from pose embeddings [frame][candidate][dim].
std::vector<std::vector<std::vector<double>>> transition_from_embeddings(
    const std::vector<std::vector<std::vector<double>>>& pose_embeddings);
/// E^i[j] = softmax_j(s^i . e^i_j).
std::vector<std::vector<double>> emission_from_embeddings(
    const std::vector<std::vector<double>>& script_embeddings,
    const std::vector<std::vector<std::vector<double>>>& pose_embeddings);

std::vector<std::vector<std::vector<double>>> build_transition(const CandidateSet& candidates,
                                                               const RetrievalModel& encoders);
std::vector<std::vector<double>> build_emission(const CandidateSet& candidates, const RetrievalModel& encoders);
PlanningMatrices build_matrices(const CandidateSet& candidates, const RetrievalModel& encoders);

struct PosePath {
  std::vector<int> indices;
  double log_prob = 0.0;
};

/// Maximizes log E^1[g1] + sum_i (log A^i[g_{i-1}][g_i] + log E^i[g_i]).
/// Among equal scores the path with the smallest last index wins, then the
/// smallest previous index, and so on backwards.
PosePath viterbi_select(const PlanningMatrices& m);

/// Exhaustive search with the same objective, accumulation order and tie rule.
/// Throws DomainError when L^F exceeds 10^6.
PosePath brute_force_select(const PlanningMatrices& m);

/// Key poses along a path.
std::vector<motion::PoseVector> path_poses(const CandidateSet& candidates, const PosePath& path);

}  // namespace promo::posture
