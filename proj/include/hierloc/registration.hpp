#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hierloc/descriptors.hpp"

namespace hierloc {

struct CoarseMatch {
  int q_index = -1;
  int p_index = -1;
  double score = 0.0;
};

struct CoarseMatchSet {
  std::vector<CoarseMatch> pairs;  // score non-increasing
};

/// Gaussian correlation between unit-norm coarse descriptors:
/// G(a, b) = exp(-|f_a - f_b|^2); entries in (0, 1].
Eigen::MatrixXd coarse_correlation(const FeatureLevel& q, const FeatureLevel& p);

/// Elementwise product of the row-normalised and column-normalised
/// matrix, suppressing entries that are ambiguous along either axis.
Eigen::MatrixXd dual_normalize(const Eigen::MatrixXd& g);

/// Global top-n_c entries; ties break on (row, col) ascending.
CoarseMatchSet select_coarse(const Eigen::MatrixXd& g_normalized, int n_c);

struct FinePair {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  double confidence = 0.0;
  int q_fine = -1;  // finest-level octant index
  int p_fine = -1;
};

/// One coarse correspondence expanded to its descendant fine octants.
struct PatchCorrespondence {
  int coarse_q = -1;
  int coarse_p = -1;
  double coarse_score = 0.0;
  std::vector<int> q_fine, p_fine;
  std::vector<Eigen::Vector3d> q_centroids, p_centroids;
  Eigen::MatrixXd q_features, p_features;  // |patch| x d1
  Eigen::MatrixXd assignment;              // filled after sinkhorn (dustbin dropped)
  std::vector<FinePair> fine_pairs;        // filled after filtering
};

/// Maps each selected coarse pair to the finest-level octants, centroids
/// and features beneath it. Assignments are not computed here.
std::vector<PatchCorrespondence> expand_patches(const OctreePyramid& pyr_q,
                                                const OctreePyramid& pyr_p,
                                                const FeaturePyramid& feats_q,
                                                const FeaturePyramid& feats_p,
                                                const CoarseMatchSet& coarse);

/// Scaled feature similarity: Fq Fp^T / sqrt(d1).
Eigen::MatrixXd patch_cost(const Eigen::MatrixXd& fq, const Eigen::MatrixXd& fp, int d1);

/// Log-domain Sinkhorn on the cost augmented with a dustbin row and
/// column valued alpha. Marginals: unit mass per real row/column, the
/// dustbin row absorbs the column count and vice versa. Returns the
/// exponentiated augmented assignment, shape (rows+1) x (cols+1).
Eigen::MatrixXd sinkhorn(const Eigen::MatrixXd& cost, double alpha, int iters);

struct AssignmentPick {
  int row = -1;
  int col = -1;
  double z = 0.0;
};

/// Keeps (j, l) iff Z(j, l) >= gamma_z, l is among row j's top k and j is
/// among column l's top k. Ties on equal confidence break by index.
std::vector<AssignmentPick> fine_matches(const Eigen::MatrixXd& z_no_dustbin, double gamma_z,
                                         int k_mutual);

struct WeightedPair {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  double w = 1.0;
};

/// Closed-form weighted least squares: minimises sum w |R q + t - p|^2
/// via weighted centroids and an SVD of the weighted cross-covariance,
/// reflection-corrected so det(R) = +1. Needs >= 3 pairs, positive total
/// weight and non-collinear geometry.
RigidTransform weighted_kabsch(std::span<const WeightedPair> pairs);

struct RegistrationResult {
  RigidTransform transform;
  int inlier_count = 0;
  double inlier_ratio = 0.0;
  int candidate_count = 0;
  int iterations_run = 0;
  std::vector<int> per_candidate_inliers;
  int total_pairs = 0;
};

/// Hypothesise-and-verify: one weighted-least-squares candidate per patch
/// with >= 3 fine pairs, verified by inlier count over the union of all
/// fine pairs (residual < tau_a), then refined n_r times on the surviving
/// inliers. Patches below 3 pairs still contribute pairs to the global
/// set. The best hypothesis seen is never discarded: if refinement drops
/// the inlier count, the earlier best is returned.
RegistrationResult local_to_global(std::span<const PatchCorrespondence> patches, double tau_a,
                                   int n_r);

/// Classic 3-point RANSAC with a Kabsch hypothesis per sample and a final
/// least-squares refit on the best inlier set. Deterministic under seed.
RegistrationResult ransac_register(std::span<const WeightedPair> pairs, double tau_a,
                                   int max_iters, std::uint64_t seed);

struct PoseError {
  double rre_deg = 0.0;
  double rte_m = 0.0;
  bool success = false;
};

inline constexpr double kSuccessRteMetres = 2.0;
inline constexpr double kSuccessRreDegrees = 5.0;

/// Relative rotation error (degrees), relative translation error
/// (metres); success iff RTE < 2 m and RRE < 5 deg, both strict.
PoseError evaluate_pose(const RigidTransform& estimate, const RigidTransform& ground_truth);

struct RegConfig {
  int n_c = 256;
  double gamma_z = 0.05;
  int k_mutual = 3;
  // Unit-norm descriptors bound the Eq.-style scaled similarity by
  // 1/sqrt(d1), so the dustbin score must sit at or below that range or it
  // absorbs all assignment mass.
  double alpha = 0.0;
  int sinkhorn_iters = 100;
  double tau_a = 1.6;  // metres
  int n_r = 5;
};

/// Full coarse-to-fine pipeline between two feature bundles.
RegistrationResult register_bundles(const PyramidBundle& query, const PyramidBundle& target,
                                    const RegConfig& cfg);

/// The patch pipeline up to (and including) fine matching, exposed so the
/// registration stages can be timed and inspected separately.
std::vector<PatchCorrespondence> build_patch_correspondences(const PyramidBundle& query,
                                                             const PyramidBundle& target,
                                                             const RegConfig& cfg);

}  // namespace hierloc
