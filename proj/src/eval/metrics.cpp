#include "promo/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace promo::eval {

using nn::Tensor;
using Vec3 = motion::Vec3;

namespace {

Eigen::MatrixXd to_matrix(const Tensor<float>& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
  return m;
}

void check_paired(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0)
    throw ShapeError(std::string(what) + ": motion and text features must be nonempty matrices of equal shape");
}

/// Square root of a symmetric PSD matrix, eigenvalues floored at 0.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

RPrecision r_precision(const Tensor<float>& motion_features, const Tensor<float>& text_features,
                       const std::vector<std::size_t>& ks) {
  check_paired(motion_features, text_features, "r_precision");
  const std::size_t n = motion_features.rows();
  if (ks.empty()) throw DomainError("r_precision: no K values");
  for (std::size_t k : ks)
    if (k == 0 || k > n) throw DomainError("r_precision: every K must lie in [1, N]");
  const Eigen::MatrixXd m = to_matrix(motion_features), t = to_matrix(text_features);
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd dist = (t.rowwise() - m.row(ii)).rowwise().norm();
    std::size_t closer = 0;
    for (Eigen::Index j = 0; j < dist.size(); ++j)
      if (dist(j) < dist(ii)) ++closer;
    ranks[i] = static_cast<double>(closer + 1);
  }
  RPrecision r;
  r.ks = ks;
  r.n = n;
  for (std::size_t k : ks)
    r.recall.push_back(static_cast<double>(std::count_if(ranks.begin(), ranks.end(),
                                                         [k](double rank) { return rank <= static_cast<double>(k); })) /
                       static_cast<double>(n));
  std::sort(ranks.begin(), ranks.end());
  r.median_rank = n % 2 ? ranks[n / 2] : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
  return r;
}

GaussianStats GaussianStats::fit(const Tensor<float>& features) {
  if (features.rank() != 2 || features.rows() < 2) throw DomainError("gaussian stats need at least 2 feature rows");
  const Eigen::MatrixXd x = to_matrix(features);
  GaussianStats g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  return g;
}

void GaussianStats::validate() const {
  if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size() || mean.size() == 0)
    throw DomainError("gaussian stats: covariance must be square and match the mean");
  if (!mean.allFinite() || !covariance.allFinite()) throw DomainError("gaussian stats: non-finite values");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw DomainError("gaussian stats: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-8) throw DomainError("gaussian stats: covariance is not positive semidefinite");
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  a.validate();
  b.validate();
  if (a.mean.size() != b.mean.size()) throw DomainError("fid: dimension mismatch");
  const Eigen::MatrixXd ra = sqrt_psd(a.covariance);
  Eigen::MatrixXd inner = ra * b.covariance * ra;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = sqrt_psd(inner).trace();
  const double value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

double multimodal_distance(const Tensor<float>& motion_features, const Tensor<float>& text_features) {
  check_paired(motion_features, text_features, "multimodal_distance");
  const Eigen::MatrixXd diff = to_matrix(motion_features) - to_matrix(text_features);
  return diff.rowwise().norm().mean();
}

JointTrajectory JointTrajectory::from_motion(const motion::MotionSequence& seq, const Eigen::Vector2d& initial_xy,
                                             const motion::Skeleton& skeleton) {
  return JointTrajectory{motion::motion_joint_positions(seq, skeleton, initial_xy)};
}

void JointTrajectory::validate() const {
  if (frames.empty()) throw DomainError("joint trajectory has no frames");
  for (const auto& f : frames)
    for (const Vec3& p : f)
      if (!p.allFinite()) throw DomainError("joint trajectory has non-finite positions");
}

double smoothness(const JointTrajectory& traj) {
  traj.validate();
  const std::size_t F = traj.frames.size();
  if (F < 3) throw DomainError("smoothness needs at least 3 frames");
  double total = 0.0;
  for (std::size_t f = 1; f + 1 < F; ++f)
    for (int j = 0; j < motion::kJointCount; ++j)
      total += (traj.frames[f + 1][j] - 2.0 * traj.frames[f][j] + traj.frames[f - 1][j]).squaredNorm();
  return total / static_cast<double>((F - 2) * motion::kJointCount);
}

std::string_view to_string(PositionVariant v) {
  switch (v) {
    case PositionVariant::root_joint: return "root_joint";
    case PositionVariant::global_traj: return "global_traj";
    case PositionVariant::mean_local: return "mean_local";
    case PositionVariant::mean_global: return "mean_global";
  }
  throw DomainError("unknown position variant");
}

PositionVariant position_variant_from_string(std::string_view s) {
  for (PositionVariant v : kAllPositionVariants)
    if (to_string(v) == s) return v;
  throw DomainError("unknown position variant: " + std::string(s));
}

namespace {

struct Selection {
  std::vector<int> joints;
  bool planar = false;  // xy only
  bool local = false;   // subtract the frame's root position
};

Selection select(PositionVariant v) {
  Selection s;
  switch (v) {
    case PositionVariant::root_joint: s.joints = {0}; break;
    case PositionVariant::global_traj:
      s.joints = {0};
      s.planar = true;
      break;
    case PositionVariant::mean_local:
      for (int j = 1; j < motion::kJointCount; ++j) s.joints.push_back(j);
      s.local = true;
      break;
    case PositionVariant::mean_global:
      for (int j = 0; j < motion::kJointCount; ++j) s.joints.push_back(j);
      break;
  }
  return s;
}

Vec3 coords(const motion::JointPositions& frame, int joint, const Selection& s) {
  Vec3 p = frame[joint];
  if (s.local) p -= frame[0];
  if (s.planar) p.z() = 0.0;
  return p;
}

void check_pairs(const std::vector<JointTrajectory>& gen, const std::vector<JointTrajectory>& ref,
                 std::size_t min_frames, const char* what) {
  if (gen.empty() || gen.size() != ref.size())
    throw ShapeError(std::string(what) + ": need equal, nonzero numbers of generated and reference trajectories");
  for (std::size_t n = 0; n < gen.size(); ++n) {
    gen[n].validate();
    ref[n].validate();
    if (gen[n].frames.size() != ref[n].frames.size())
      throw ShapeError(std::string(what) + ": trajectory frame counts differ");
    if (gen[n].frames.size() < min_frames)
      throw DomainError(std::string(what) + ": needs at least " + std::to_string(min_frames) + " frames");
  }
}

Vec3 variance(const JointTrajectory& t, int joint, const Selection& s) {
  const std::size_t F = t.frames.size();
  Vec3 mean = Vec3::Zero();
  for (const auto& f : t.frames) mean += coords(f, joint, s);
  mean /= static_cast<double>(F);
  Vec3 var = Vec3::Zero();
  for (const auto& f : t.frames) var += (coords(f, joint, s) - mean).cwiseAbs2();
  return var / static_cast<double>(F - 1);
}

}  // namespace

double ape(const std::vector<JointTrajectory>& gen, const std::vector<JointTrajectory>& ref, PositionVariant variant) {
  check_pairs(gen, ref, 1, "ape");
  const Selection s = select(variant);
  double total = 0.0;
  for (int j : s.joints) {
    double joint_error = 0.0;
    for (std::size_t n = 0; n < gen.size(); ++n) {
      double e = 0.0;
      for (std::size_t f = 0; f < gen[n].frames.size(); ++f)
        e += (coords(gen[n].frames[f], j, s) - coords(ref[n].frames[f], j, s)).norm();
      joint_error += e / static_cast<double>(gen[n].frames.size());
    }
    total += joint_error / static_cast<double>(gen.size());
  }
  return total / static_cast<double>(s.joints.size());
}

double ape(const JointTrajectory& gen, const JointTrajectory& ref, PositionVariant variant) {
  return ape(std::vector<JointTrajectory>{gen}, std::vector<JointTrajectory>{ref}, variant);
}

double ave(const std::vector<JointTrajectory>& gen, const std::vector<JointTrajectory>& ref, PositionVariant variant) {
  check_pairs(gen, ref, 2, "ave");
  const Selection s = select(variant);
  double total = 0.0;
  for (int j : s.joints) {
    double joint_error = 0.0;
    for (std::size_t n = 0; n < gen.size(); ++n) joint_error += (variance(gen[n], j, s) - variance(ref[n], j, s)).norm();
    total += joint_error / static_cast<double>(gen.size());
  }
  return total / static_cast<double>(s.joints.size());
}

double ave(const JointTrajectory& gen, const JointTrajectory& ref, PositionVariant variant) {
  return ave(std::vector<JointTrajectory>{gen}, std::vector<JointTrajectory>{ref}, variant);
}

nlohmann::json MetricRecord::to_json() const {
  return {{"metric", metric}, {"variant", variant}, {"value", value}, {"n", n}};
}

MetricRecord MetricRecord::from_json(const nlohmann::json& j) {
  return {j.at("metric").get<std::string>(), j.at("variant").get<std::string>(), j.at("value").get<double>(),
          j.at("n").get<std::size_t>()};
}

nlohmann::json report_json(const std::vector<MetricRecord>& records) {
  nlohmann::json r = nlohmann::json::array();
  for (const auto& rec : records) r.push_back(rec.to_json());
  return {{"records", r}, {"ave_averaging", "samples_then_joints"}};
}

}  // namespace promo::eval
