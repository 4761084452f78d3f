#pragma once

#include <span>
#include <vector>

#include "hierloc/descriptors.hpp"

namespace hierloc {

/// One putative correspondence between two same-level octants.
struct Correspondence {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();  // query octant centroid
  Eigen::Vector3d p = Eigen::Vector3d::Zero();  // candidate octant centroid
  double feature_distance = 0.0;
  int q_index = -1;
  int p_index = -1;
};

struct ScaleCorrespondences {
  int level = 1;
  std::vector<Correspondence> pairs;  // ascending feature_distance
};

/// Nearest candidate feature for every query feature (descriptor L2),
/// keeping the lambda pairs with smallest distance. Ties break on
/// (query index, candidate index).
ScaleCorrespondences match_scale(const FeatureLevel& query, const FeatureLevel& candidate,
                                 int lambda, int level = 1);

/// Pairwise length-consistency matrix: entry (i, j) is
/// max(1 - sigma^2 / sigma_d^2, 0) where sigma is the difference of the
/// two correspondences' intra-cloud centroid distances. Unit diagonal,
/// symmetric, entries in [0, 1]. Needs >= 2 correspondences.
Eigen::MatrixXd consistency_matrix(const ScaleCorrespondences& corrs, double sigma_d);

struct PowerIterationResult {
  Eigen::VectorXd vec;  // unit L2, entries >= 0
  int iterations = 0;
  bool converged = true;
};

/// Leading eigenvector by power iteration from the uniform vector.
/// Converged when successive iterates differ by < tol in max norm. A
/// matrix with no dominant direction (e.g. identity) returns the uniform
/// vector unchanged.
PowerIterationResult leading_eigenvector(const Eigen::MatrixXd& matrix, double tol = 1e-8,
                                         int max_iter = 1000);

/// Sorts descending, then min-max scales to [0, 1]. A constant vector
/// maps to all-ones.
Eigen::VectorXd normalize_sorted(const Eigen::VectorXd& v);

struct FitnessReport {
  double beta = 0.0;
  std::vector<double> per_scale;
};

/// Per scale, the mean of the top ceil(head_fraction * len) entries of
/// the sorted-normalised eigenvector; beta is the weighted sum. Weights
/// must sum to 1.
FitnessReport fitness_score(std::span<const Eigen::VectorXd> normed,
                            std::span<const double> weights, double head_fraction);

struct MsgvConfig {
  std::vector<int> lambda = {512, 256, 128};  // per scale, finest first
  double sigma_d = 1.6;                       // metres
  std::vector<double> weights = {};           // empty = equal
  double head_fraction = 0.25;
  double power_tol = 1e-8;
  int power_max_iter = 1000;
};

struct CandidateScore {
  int original_rank = 0;  // position in the input candidate list
  double beta = 0.0;
  std::vector<double> per_scale;
  std::vector<int> eigen_iterations;  // per scale; 0 where skipped
};

/// Scores every candidate against the query and returns them in
/// decreasing beta order; equal scores keep the original retrieval order.
/// Candidates with fewer than two correspondences at every scale get
/// beta 0. Candidate scoring is independent and runs in parallel.
std::vector<CandidateScore> rerank(const FeaturePyramid& query,
                                   std::span<const FeaturePyramid* const> candidates,
                                   const MsgvConfig& cfg);

}  // namespace hierloc
