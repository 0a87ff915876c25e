#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "promo/motion/motion.hpp"
#include "promo/nn/tensor.hpp"

namespace promo::eval {

struct RPrecision {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // R@K as a fraction, one per k
  double median_rank = 0.0;    // 1-based; mean of the two middle ranks for even N
  std::size_t n = 0;
};

/// Ranks all N text features by Euclidean distance to each motion feature.
/// The true description's rank is 1 + the number of texts strictly closer, so
/// ties resolve in its favor.
RPrecision r_precision(const nn::Tensor<float>& motion_features, const nn::Tensor<float>& text_features,
                       const std::vector<std::size_t>& ks = {1, 2, 3});

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  /// Sample mean and unbiased covariance of the rows; needs at least 2 rows.
  static GaussianStats fit(const nn::Tensor<float>& features);
  /// Throws DomainError unless the covariance is square, matches the mean,
  /// is symmetric within 1e-8 and has no eigenvalue below -1e-8.
  void validate() const;
};

/// Frechet distance between Gaussians. The matrix square roots use symmetric
/// eigendecompositions with eigenvalues floored at 0.
double fid(const GaussianStats& a, const GaussianStats& b);

/// Mean over i of |m_i - t_i|.
double multimodal_distance(const nn::Tensor<float>& motion_features, const nn::Tensor<float>& text_features);

/// World-space joint positions per frame (meters).
struct JointTrajectory {
  std::vector<motion::JointPositions> frames;

  static JointTrajectory from_motion(const motion::MotionSequence& seq,
                                     const Eigen::Vector2d& initial_xy = Eigen::Vector2d::Zero(),
                                     const motion::Skeleton& skeleton = motion::Skeleton::canonical());
  /// Throws DomainError on an empty or non-finite trajectory.
  void validate() const;
};

/// Mean over frames and joints of the squared norm of the second temporal
/// difference. Needs at least 3 frames.
double smoothness(const JointTrajectory& traj);

enum class PositionVariant { root_joint, global_traj, mean_local, mean_global };

std::string_view to_string(PositionVariant v);
PositionVariant position_variant_from_string(std::string_view s);
inline constexpr PositionVariant kAllPositionVariants[] = {PositionVariant::root_joint, PositionVariant::global_traj,
                                                           PositionVariant::mean_local, PositionVariant::mean_global};

/// Average positional error. root_joint uses the root's xyz, global_traj its
/// xy, mean_global every joint in the world frame and mean_local the 21
/// non-root joints relative to the root of the same frame. Per-joint errors
/// are averaged over frames and samples, then over the variant's joints.
double ape(const std::vector<JointTrajectory>& generated, const std::vector<JointTrajectory>& reference,
           PositionVariant variant);
double ape(const JointTrajectory& generated, const JointTrajectory& reference, PositionVariant variant);

/// Average variance error: per joint the element-wise temporal variance
/// (divisor F - 1) of the selected coordinates, |var - var_ref| averaged over
/// samples, then over the variant's joints. Needs at least 2 frames.
double ave(const std::vector<JointTrajectory>& generated, const std::vector<JointTrajectory>& reference,
           PositionVariant variant);
double ave(const JointTrajectory& generated, const JointTrajectory& reference, PositionVariant variant);

struct MetricRecord {
  std::string metric;
  std::string variant;
  double value = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static MetricRecord from_json(const nlohmann::json& j);
};

/// {"records": [...], "ave_averaging": "samples_then_joints"}.
nlohmann::json report_json(const std::vector<MetricRecord>& records);

}  // namespace promo::eval
