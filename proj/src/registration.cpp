#include "hierloc/registration.hpp"

#include <Eigen/SVD>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hierloc/parallel.hpp"
#include "hierloc/rng.hpp"

namespace hierloc {

Eigen::MatrixXd coarse_correlation(const FeatureLevel& q, const FeatureLevel& p) {
  if (q.size() == 0 || p.size() == 0) throw DataError("empty-features: coarse_correlation");
  if (q.dim() != p.dim()) throw InvalidArgument("dim-mismatch: coarse feature dims");
  // |f_a - f_b|^2 = 2 - 2 f_a . f_b for unit descriptors.
  const Eigen::MatrixXd dots = q.descriptors * p.descriptors.transpose();
  return (-(2.0 - 2.0 * dots.array()).max(0.0)).exp();
}

Eigen::MatrixXd dual_normalize(const Eigen::MatrixXd& g) {
  if (g.rows() == 0 || g.cols() == 0) throw DataError("empty-features: dual_normalize");
  const Eigen::VectorXd row_sums = g.rowwise().sum();
  const Eigen::VectorXd col_sums = g.colwise().sum();
  if ((row_sums.array() <= 0.0).any() || (col_sums.array() <= 0.0).any())
    throw DataError("zero-row-or-column: dual_normalize needs positive mass in every row and column");
  Eigen::MatrixXd out(g.rows(), g.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      out(r, c) = (g(r, c) / row_sums(r)) * (g(r, c) / col_sums(c));
  return out;
}

CoarseMatchSet select_coarse(const Eigen::MatrixXd& g_normalized, int n_c) {
  if (n_c < 1) throw InvalidArgument("n_c must be >= 1");
  CoarseMatchSet set;
  set.pairs.reserve(static_cast<std::size_t>(g_normalized.size()));
  for (Eigen::Index r = 0; r < g_normalized.rows(); ++r)
    for (Eigen::Index c = 0; c < g_normalized.cols(); ++c)
      set.pairs.push_back({static_cast<int>(r), static_cast<int>(c), g_normalized(r, c)});

  std::sort(set.pairs.begin(), set.pairs.end(), [](const CoarseMatch& a, const CoarseMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.q_index != b.q_index) return a.q_index < b.q_index;
    return a.p_index < b.p_index;
  });
  if (set.pairs.size() > static_cast<std::size_t>(n_c))
    set.pairs.resize(static_cast<std::size_t>(n_c));
  return set;
}

std::vector<PatchCorrespondence> expand_patches(const OctreePyramid& pyr_q,
                                                const OctreePyramid& pyr_p,
                                                const FeaturePyramid& feats_q,
                                                const FeaturePyramid& feats_p,
                                                const CoarseMatchSet& coarse) {
  std::vector<PatchCorrespondence> patches;
  patches.reserve(coarse.pairs.size());

  std::vector<int> q_idx(coarse.pairs.size()), p_idx(coarse.pairs.size());
  for (std::size_t i = 0; i < coarse.pairs.size(); ++i) {
    q_idx[i] = coarse.pairs[i].q_index;
    p_idx[i] = coarse.pairs[i].p_index;
  }
  const auto q_groups = group_by_parent(pyr_q, q_idx);
  const auto p_groups = group_by_parent(pyr_p, p_idx);

  const FeatureLevel& fq1 = feats_q.finest();
  const FeatureLevel& fp1 = feats_p.finest();

  for (std::size_t i = 0; i < coarse.pairs.size(); ++i) {
    PatchCorrespondence patch;
    patch.coarse_q = coarse.pairs[i].q_index;
    patch.coarse_p = coarse.pairs[i].p_index;
    patch.coarse_score = coarse.pairs[i].score;
    patch.q_fine = q_groups[i];
    patch.p_fine = p_groups[i];
    if (patch.q_fine.empty() || patch.p_fine.empty())
      throw DataError("empty-patch: coarse octant without fine descendants");

    patch.q_centroids.reserve(patch.q_fine.size());
    patch.q_features.resize(static_cast<Eigen::Index>(patch.q_fine.size()), fq1.dim());
    for (std::size_t j = 0; j < patch.q_fine.size(); ++j) {
      patch.q_centroids.push_back(fq1.centroids[static_cast<std::size_t>(patch.q_fine[j])]);
      patch.q_features.row(static_cast<Eigen::Index>(j)) =
          fq1.descriptors.row(patch.q_fine[j]);
    }
    patch.p_centroids.reserve(patch.p_fine.size());
    patch.p_features.resize(static_cast<Eigen::Index>(patch.p_fine.size()), fp1.dim());
    for (std::size_t j = 0; j < patch.p_fine.size(); ++j) {
      patch.p_centroids.push_back(fp1.centroids[static_cast<std::size_t>(patch.p_fine[j])]);
      patch.p_features.row(static_cast<Eigen::Index>(j)) =
          fp1.descriptors.row(patch.p_fine[j]);
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

Eigen::MatrixXd patch_cost(const Eigen::MatrixXd& fq, const Eigen::MatrixXd& fp, int d1) {
  if (fq.cols() != d1 || fp.cols() != d1)
    throw InvalidArgument("dim-mismatch: patch features must have dim " + std::to_string(d1));
  return fq * fp.transpose() / std::sqrt(static_cast<double>(d1));
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

Eigen::MatrixXd sinkhorn(const Eigen::MatrixXd& cost, double alpha, int iters) {
  if (iters < 1) throw InvalidArgument("sinkhorn iterations must be >= 1");
  if (!cost.allFinite() || !std::isfinite(alpha))
    throw InvalidArgument("non-finite-input: sinkhorn");
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (m == 0 || n == 0) throw DataError("empty-features: sinkhorn");

  Eigen::MatrixXd k(m + 1, n + 1);
  k.topLeftCorner(m, n) = cost;
  k.row(m).setConstant(alpha);
  k.col(n).setConstant(alpha);

  // Prescribed log-marginals: unit mass per real point, the dustbin row
  // absorbs n points and the dustbin column m.
  Eigen::VectorXd log_a = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXd log_b = Eigen::VectorXd::Zero(n + 1);
  log_a(m) = std::log(static_cast<double>(n));
  log_b(n) = std::log(static_cast<double>(m));

  Eigen::VectorXd u = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n + 1);

  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i <= m; ++i)
      u(i) = log_a(i) - log_sum_exp(k.row(i).transpose() + v);
    for (Eigen::Index j = 0; j <= n; ++j)
      v(j) = log_b(j) - log_sum_exp(k.col(j) + u);
  }

  Eigen::MatrixXd z(m + 1, n + 1);
  for (Eigen::Index i = 0; i <= m; ++i)
    for (Eigen::Index j = 0; j <= n; ++j) z(i, j) = std::exp(k(i, j) + u(i) + v(j));
  return z;
}

std::vector<AssignmentPick> fine_matches(const Eigen::MatrixXd& z, double gamma_z, int k_mutual) {
  if (gamma_z < 0.0 || gamma_z >= 1.0) throw InvalidArgument("gamma_z must be in [0, 1)");
  if (k_mutual < 1) throw InvalidArgument("k_mutual must be >= 1");

  const Eigen::Index rows = z.rows();
  const Eigen::Index cols = z.cols();
  if (rows == 0 || cols == 0) return {};

  // rank_in_row(j, l) < k_mutual iff l is among row j's top k.
  auto top_of = [&](bool by_row, Eigen::Index fixed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(by_row ? cols : rows));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      const double va = by_row ? z(fixed, a) : z(a, fixed);
      const double vb = by_row ? z(fixed, b) : z(b, fixed);
      if (va != vb) return va > vb;
      return a < b;
    });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k_mutual)));
    return idx;
  };

  std::vector<std::vector<bool>> row_top(static_cast<std::size_t>(rows),
                                         std::vector<bool>(static_cast<std::size_t>(cols), false));
  for (Eigen::Index j = 0; j < rows; ++j)
    for (const Eigen::Index l : top_of(true, j))
      row_top[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] = true;

  std::vector<std::vector<bool>> col_top(static_cast<std::size_t>(rows),
                                         std::vector<bool>(static_cast<std::size_t>(cols), false));
  for (Eigen::Index l = 0; l < cols; ++l)
    for (const Eigen::Index j : top_of(false, l))
      col_top[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] = true;

  std::vector<AssignmentPick> picks;
  for (Eigen::Index j = 0; j < rows; ++j)
    for (Eigen::Index l = 0; l < cols; ++l)
      if (z(j, l) >= gamma_z && row_top[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] &&
          col_top[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)])
        picks.push_back({static_cast<int>(j), static_cast<int>(l), z(j, l)});
  return picks;
}

RigidTransform weighted_kabsch(std::span<const WeightedPair> pairs) {
  if (pairs.size() < 3) throw DataError("insufficient-pairs: weighted_kabsch needs >= 3");
  double wsum = 0.0;
  for (const auto& pr : pairs) {
    if (pr.w < 0.0) throw InvalidArgument("weights must be non-negative");
    wsum += pr.w;
  }
  if (!(wsum > 0.0)) throw DataError("insufficient-pairs: total weight must be positive");

  Eigen::Vector3d qc = Eigen::Vector3d::Zero();
  Eigen::Vector3d pc = Eigen::Vector3d::Zero();
  for (const auto& pr : pairs) {
    qc += pr.w * pr.q;
    pc += pr.w * pr.p;
  }
  qc /= wsum;
  pc /= wsum;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (const auto& pr : pairs) h += pr.w * (pr.q - qc) * (pr.p - pc).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Rank < 2 leaves a rotation axis unconstrained.
  const double scale = sv(0);
  if (scale <= 0.0 || sv(1) <= scale * 1e-12)
    throw DataError("degenerate-geometry: cross-covariance rank < 2");

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = pc - t.rotation * qc;
  return t;
}

namespace {

struct Hypothesis {
  RigidTransform transform;
  int inliers = 0;
  double mean_residual = std::numeric_limits<double>::infinity();
  int source = -1;  // candidate patch index, or refinement iteration
};

/// Counts pairs with |T q - p| < tau_a and their mean residual.
void score_hypothesis(const RigidTransform& t, std::span<const WeightedPair> all, double tau_a,
                      int& inliers, double& mean_residual) {
  inliers = 0;
  double acc = 0.0;
  for (const auto& pr : all) {
    const double res = (t.rotation * pr.q + t.translation - pr.p).norm();
    if (res < tau_a) {
      ++inliers;
      acc += res;
    }
  }
  mean_residual = inliers > 0 ? acc / inliers : std::numeric_limits<double>::infinity();
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.inliers != b.inliers) return a.inliers > b.inliers;
  if (a.mean_residual != b.mean_residual) return a.mean_residual < b.mean_residual;
  return a.source < b.source;
}

}  // namespace

RegistrationResult local_to_global(std::span<const PatchCorrespondence> patches, double tau_a,
                                   int n_r) {
  if (!(tau_a > 0.0)) throw InvalidArgument("tau_a must be positive");
  if (n_r < 1) throw InvalidArgument("n_r must be >= 1");

  // Global dense set: union of all patch pairs, deduplicated on the fine
  // index pair keeping the highest confidence.
  std::map<std::pair<int, int>, WeightedPair> dedup;
  for (const auto& patch : patches)
    for (const auto& fp : patch.fine_pairs) {
      WeightedPair wp{fp.q, fp.p, fp.confidence};
      const auto key = std::make_pair(fp.q_fine, fp.p_fine);
      const auto it = dedup.find(key);
      if (it == dedup.end() || wp.w > it->second.w) dedup[key] = wp;
    }
  std::vector<WeightedPair> all;
  all.reserve(dedup.size());
  for (const auto& [key, wp] : dedup) all.push_back(wp);

  // One candidate per patch with enough confident pairs.
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < patches.size(); ++i)
    if (patches[i].fine_pairs.size() >= 3) eligible.push_back(i);
  if (eligible.empty())
    throw DataError("no-valid-patch: every patch has fewer than 3 fine pairs");

  std::vector<Hypothesis> candidates(eligible.size());
  std::vector<char> solved(eligible.size(), 0);
  parallel_for(eligible.size(), [&](std::size_t e) {
    const auto& patch = patches[eligible[e]];
    std::vector<WeightedPair> local;
    local.reserve(patch.fine_pairs.size());
    for (const auto& fp : patch.fine_pairs) local.push_back({fp.q, fp.p, fp.confidence});
    try {
      Hypothesis h;
      h.transform = weighted_kabsch(local);
      h.source = static_cast<int>(eligible[e]);
      score_hypothesis(h.transform, all, tau_a, h.inliers, h.mean_residual);
      candidates[e] = h;
      solved[e] = 1;
    } catch (const DataError&) {
      solved[e] = 0;  // degenerate patch, not a candidate
    }
  });

  RegistrationResult result;
  result.total_pairs = static_cast<int>(all.size());

  bool any = false;
  for (std::size_t e = 0; e < eligible.size(); ++e) {
    if (!solved[e]) continue;
    result.per_candidate_inliers.push_back(candidates[e].inliers);
    ++result.candidate_count;
    any = true;
  }
  if (!any) throw DataError("degenerate-geometry: no patch produced a valid candidate");

  // Iterative refinement on the surviving inliers, keeping Sinkhorn
  // confidences as the least-squares weights. Every candidate is refined
  // against the global set and the selection re-run, so a hypothesis that
  // starts with only a locally-correct translation can still migrate into
  // the dominant consensus. No candidate ever loses its best state.
  parallel_for(eligible.size(), [&](std::size_t e) {
    if (!solved[e]) return;
    Hypothesis best_e = candidates[e];
    Hypothesis current = best_e;
    for (int it = 0; it < n_r; ++it) {
      std::vector<WeightedPair> inliers;
      inliers.reserve(all.size());
      for (const auto& pr : all)
        if ((current.transform.rotation * pr.q + current.transform.translation - pr.p).norm() <
            tau_a)
          inliers.push_back(pr);
      if (inliers.size() < 3) break;
      Hypothesis refined;
      try {
        refined.transform = weighted_kabsch(inliers);
      } catch (const DataError&) {
        break;
      }
      refined.source = current.source;
      score_hypothesis(refined.transform, all, tau_a, refined.inliers, refined.mean_residual);
      if (better(refined, best_e)) best_e = refined;
      current = refined;
    }
    candidates[e] = best_e;
  });
  result.iterations_run = n_r;

  Hypothesis best;
  bool have_best = false;
  for (std::size_t e = 0; e < eligible.size(); ++e) {
    if (!solved[e]) continue;
    if (!have_best || better(candidates[e], best)) {
      best = candidates[e];
      have_best = true;
    }
  }

  result.transform = best.transform;
  result.inlier_count = best.inliers;
  result.inlier_ratio =
      all.empty() ? 0.0 : static_cast<double>(best.inliers) / static_cast<double>(all.size());
  return result;
}

RegistrationResult ransac_register(std::span<const WeightedPair> pairs, double tau_a,
                                   int max_iters, std::uint64_t seed) {
  if (pairs.size() < 3) throw DataError("insufficient-pairs: ransac needs >= 3");
  if (!(tau_a > 0.0)) throw InvalidArgument("tau_a must be positive");
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");

  Rng rng(seed);
  const std::size_t n = pairs.size();

  Hypothesis best;
  bool have_best = false;

  for (int it = 0; it < max_iters; ++it) {
    std::size_t a = rng.uniform_index(n);
    std::size_t b = rng.uniform_index(n);
    std::size_t c = rng.uniform_index(n);
    if (a == b || b == c || a == c) continue;

    const WeightedPair sample[3] = {{pairs[a].q, pairs[a].p, 1.0},
                                    {pairs[b].q, pairs[b].p, 1.0},
                                    {pairs[c].q, pairs[c].p, 1.0}};
    Hypothesis h;
    try {
      h.transform = weighted_kabsch(sample);
    } catch (const DataError&) {
      continue;  // collinear sample
    }
    h.source = it;
    score_hypothesis(h.transform, pairs, tau_a, h.inliers, h.mean_residual);
    if (!have_best || better(h, best)) {
      best = h;
      have_best = true;
    }
  }
  if (!have_best) throw DataError("degenerate-geometry: ransac found no valid hypothesis");

  // Final unweighted refit on the best inlier set.
  std::vector<WeightedPair> inliers;
  for (const auto& pr : pairs)
    if ((best.transform.rotation * pr.q + best.transform.translation - pr.p).norm() < tau_a)
      inliers.push_back({pr.q, pr.p, 1.0});
  if (inliers.size() >= 3) {
    try {
      Hypothesis refit;
      refit.transform = weighted_kabsch(inliers);
      refit.source = max_iters;
      score_hypothesis(refit.transform, pairs, tau_a, refit.inliers, refit.mean_residual);
      if (better(refit, best)) best = refit;
    } catch (const DataError&) {
      // keep the sampled hypothesis
    }
  }

  RegistrationResult result;
  result.transform = best.transform;
  result.inlier_count = best.inliers;
  result.total_pairs = static_cast<int>(n);
  result.inlier_ratio = static_cast<double>(best.inliers) / static_cast<double>(n);
  result.candidate_count = max_iters;
  result.iterations_run = 1;
  return result;
}

PoseError evaluate_pose(const RigidTransform& estimate, const RigidTransform& ground_truth) {
  validate_transform(estimate, 1e-6);
  validate_transform(ground_truth, 1e-6);
  PoseError err;
  const double cos_angle =
      std::clamp(((ground_truth.rotation.transpose() * estimate.rotation).trace() - 1.0) / 2.0,
                 -1.0, 1.0);
  err.rre_deg = std::acos(cos_angle) * 180.0 / M_PI;
  err.rte_m = (ground_truth.translation - estimate.translation).norm();
  err.success = err.rte_m < kSuccessRteMetres && err.rre_deg < kSuccessRreDegrees;
  return err;
}

std::vector<PatchCorrespondence> build_patch_correspondences(const PyramidBundle& query,
                                                             const PyramidBundle& target,
                                                             const RegConfig& cfg) {
  const Eigen::MatrixXd g = coarse_correlation(query.features.coarsest(), target.features.coarsest());
  const Eigen::MatrixXd g_norm = dual_normalize(g);
  const CoarseMatchSet coarse = select_coarse(g_norm, cfg.n_c);

  std::vector<PatchCorrespondence> patches =
      expand_patches(query.pyramid, target.pyramid, query.features, target.features, coarse);

  const int d1 = query.features.finest().dim();
  parallel_for(patches.size(), [&](std::size_t i) {
    PatchCorrespondence& patch = patches[i];
    const Eigen::MatrixXd cost = patch_cost(patch.q_features, patch.p_features, d1);
    const Eigen::MatrixXd z_aug = sinkhorn(cost, cfg.alpha, cfg.sinkhorn_iters);
    patch.assignment = z_aug.topLeftCorner(cost.rows(), cost.cols());
    for (const auto& pick : fine_matches(patch.assignment, cfg.gamma_z, cfg.k_mutual)) {
      FinePair fp;
      fp.q = patch.q_centroids[static_cast<std::size_t>(pick.row)];
      fp.p = patch.p_centroids[static_cast<std::size_t>(pick.col)];
      fp.confidence = pick.z;
      fp.q_fine = patch.q_fine[static_cast<std::size_t>(pick.row)];
      fp.p_fine = patch.p_fine[static_cast<std::size_t>(pick.col)];
      patch.fine_pairs.push_back(fp);
    }
  });
  return patches;
}

RegistrationResult register_bundles(const PyramidBundle& query, const PyramidBundle& target,
                                    const RegConfig& cfg) {
  const std::vector<PatchCorrespondence> patches = build_patch_correspondences(query, target, cfg);
  return local_to_global(patches, cfg.tau_a, cfg.n_r);
}

}  // namespace hierloc
