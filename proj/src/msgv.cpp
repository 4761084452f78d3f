#include "hierloc/msgv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hierloc/parallel.hpp"

namespace hierloc {

ScaleCorrespondences match_scale(const FeatureLevel& query, const FeatureLevel& candidate,
                                 int lambda, int level) {
  if (query.size() == 0 || candidate.size() == 0)
    throw DataError("empty-features: match_scale");
  if (lambda < 1) throw InvalidArgument("lambda must be >= 1");
  if (query.dim() != candidate.dim())
    throw InvalidArgument("dim-mismatch: feature dims " + std::to_string(query.dim()) + " vs " +
                          std::to_string(candidate.dim()));

  // Descriptors are unit-norm, so squared L2 distance is 2 - 2 dot.
  const Eigen::MatrixXd dots = query.descriptors * candidate.descriptors.transpose();

  ScaleCorrespondences out;
  out.level = level;
  out.pairs.reserve(query.size());
  for (Eigen::Index qi = 0; qi < dots.rows(); ++qi) {
    Eigen::Index best = 0;
    double best_dot = dots(qi, 0);
    for (Eigen::Index pi = 1; pi < dots.cols(); ++pi) {
      if (dots(qi, pi) > best_dot) {
        best_dot = dots(qi, pi);
        best = pi;
      }
    }
    Correspondence c;
    c.q = query.centroids[static_cast<std::size_t>(qi)];
    c.p = candidate.centroids[static_cast<std::size_t>(best)];
    c.feature_distance = std::sqrt(std::max(0.0, 2.0 - 2.0 * best_dot));
    c.q_index = static_cast<int>(qi);
    c.p_index = static_cast<int>(best);
    out.pairs.push_back(c);
  }

  std::sort(out.pairs.begin(), out.pairs.end(), [](const Correspondence& a, const Correspondence& b) {
    if (a.feature_distance != b.feature_distance) return a.feature_distance < b.feature_distance;
    if (a.q_index != b.q_index) return a.q_index < b.q_index;
    return a.p_index < b.p_index;
  });
  if (out.pairs.size() > static_cast<std::size_t>(lambda))
    out.pairs.resize(static_cast<std::size_t>(lambda));
  return out;
}

Eigen::MatrixXd consistency_matrix(const ScaleCorrespondences& corrs, double sigma_d) {
  if (!(sigma_d > 0.0)) throw InvalidArgument("invalid-sigma: sigma_d must be positive");
  const std::size_t n = corrs.pairs.size();
  if (n < 2) throw DataError("too-few-correspondences: need >= 2");

  const double inv_sd2 = 1.0 / (sigma_d * sigma_d);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dq = (corrs.pairs[i].q - corrs.pairs[j].q).norm();
      const double dp = (corrs.pairs[i].p - corrs.pairs[j].p).norm();
      const double sigma = std::abs(dq - dp);
      const double v = std::max(1.0 - sigma * sigma * inv_sd2, 0.0);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return m;
}

PowerIterationResult leading_eigenvector(const Eigen::MatrixXd& matrix, double tol, int max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
    throw InvalidArgument("non-symmetric-input: matrix must be square and non-empty");
  if (((matrix - matrix.transpose()).array().abs() > 1e-9).any())
    throw InvalidArgument("non-symmetric-input: matrix is not symmetric");
  if ((matrix.array() < -1e-12).any())
    throw InvalidArgument("matrix entries must be non-negative");

  const Eigen::Index n = matrix.rows();
  PowerIterationResult res;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));

  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = matrix * v;
    const double norm = w.norm();
    if (norm == 0.0) {
      // Zero matrix: no dominant direction, keep the uniform start.
      res.vec = v;
      res.iterations = it;
      return res;
    }
    w /= norm;
    const double delta = (w - v).cwiseAbs().maxCoeff();
    v = std::move(w);
    if (delta < tol) {
      res.vec = v.cwiseMax(0.0);
      res.iterations = it;
      return res;
    }
  }
  res.vec = v.cwiseMax(0.0);
  res.iterations = max_iter;
  res.converged = false;
  return res;
}

Eigen::VectorXd normalize_sorted(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw InvalidArgument("normalize_sorted: empty vector");
  Eigen::VectorXd out = v;
  std::sort(out.data(), out.data() + out.size(), std::greater<double>());
  const double max = out(0);
  const double min = out(out.size() - 1);
  if (max == min) return Eigen::VectorXd::Ones(v.size());
  return (out.array() - min) / (max - min);
}

FitnessReport fitness_score(std::span<const Eigen::VectorXd> normed,
                            std::span<const double> weights, double head_fraction) {
  if (normed.size() != weights.size())
    throw InvalidArgument("weight-mismatch: " + std::to_string(normed.size()) + " scales vs " +
                          std::to_string(weights.size()) + " weights");
  if (!(head_fraction > 0.0) || head_fraction > 1.0)
    throw InvalidArgument("head_fraction must be in (0, 1]");
  double wsum = 0.0;
  for (const double w : weights) {
    if (w < 0.0) throw InvalidArgument("weight-mismatch: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw InvalidArgument("weight-mismatch: weights must sum to 1");

  FitnessReport report;
  report.per_scale.resize(normed.size(), 0.0);
  for (std::size_t s = 0; s < normed.size(); ++s) {
    const Eigen::VectorXd& v = normed[s];
    if (v.size() == 0) continue;  // skipped scale contributes 0
    const auto head =
        static_cast<Eigen::Index>(std::ceil(head_fraction * static_cast<double>(v.size())));
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < head; ++i) acc += sorted[static_cast<std::size_t>(i)];
    report.per_scale[s] = acc / static_cast<double>(head);
    report.beta += weights[s] * report.per_scale[s];
  }
  report.beta = std::clamp(report.beta, 0.0, 1.0);
  return report;
}

std::vector<CandidateScore> rerank(const FeaturePyramid& query,
                                   std::span<const FeaturePyramid* const> candidates,
                                   const MsgvConfig& cfg) {
  if (candidates.empty()) throw DataError("rerank: no candidates");
  const std::size_t num_scales = cfg.lambda.size();
  if (num_scales == 0 || query.levels.size() < num_scales)
    throw InvalidArgument("rerank: lambda must list one cap per scored scale");

  std::vector<double> weights = cfg.weights;
  if (weights.empty())
    weights.assign(num_scales, 1.0 / static_cast<double>(num_scales));
  if (weights.size() != num_scales)
    throw InvalidArgument("weight-mismatch: need one weight per scale");

  std::vector<CandidateScore> scores(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t c) {
    const FeaturePyramid& cand = *candidates[c];
    CandidateScore& score = scores[c];
    score.original_rank = static_cast<int>(c);
    score.eigen_iterations.assign(num_scales, 0);

    std::vector<Eigen::VectorXd> normed(num_scales);
    for (std::size_t s = 0; s < num_scales; ++s) {
      const int lambda = cfg.lambda[s];
      if (cand.levels.size() <= s) continue;
      const FeatureLevel& ql = query.levels[s];
      const FeatureLevel& cl = cand.levels[s];
      if (ql.size() == 0 || cl.size() == 0) continue;

      const ScaleCorrespondences corrs = match_scale(ql, cl, lambda, static_cast<int>(s) + 1);
      if (corrs.pairs.size() < 2) continue;  // scale skipped, contributes 0

      const Eigen::MatrixXd m = consistency_matrix(corrs, cfg.sigma_d);
      const PowerIterationResult eig = leading_eigenvector(m, cfg.power_tol, cfg.power_max_iter);
      score.eigen_iterations[s] = eig.iterations;

      Eigen::VectorXd v = normalize_sorted(eig.vec);
      // Pad (or truncate) to the configured cap so the head statistic is
      // comparable across candidates with different correspondence counts.
      Eigen::VectorXd padded = Eigen::VectorXd::Zero(lambda);
      const Eigen::Index n = std::min<Eigen::Index>(v.size(), lambda);
      padded.head(n) = v.head(n);
      normed[s] = std::move(padded);
    }

    const FitnessReport fit = fitness_score(normed, weights, cfg.head_fraction);
    score.beta = fit.beta;
    score.per_scale = fit.per_scale;
  });

  std::stable_sort(scores.begin(), scores.end(), [](const CandidateScore& a, const CandidateScore& b) {
    return a.beta > b.beta;
  });
  return scores;
}

}  // namespace hierloc
