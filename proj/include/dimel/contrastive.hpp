#pragma once

#include "dimel/numkernel/tape.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dimel::contrastive {

using FeatureVector = std::vector<double>;

enum class LossMode {
    standard,  ///< Σ log(1 + Σ_j exp(s_n_j - s_p))
    paper,     ///< Σ [ -s_p / Σ_j s_n_j + log Σ_j exp(s_n_j) ]
};

LossMode parse_loss_mode(std::string_view text);
std::string to_string(LossMode mode);

/// Minimum |Σ_j sim(g, n_j)| accepted by the paper-form loss.
inline constexpr double kPaperMinDenominator = 1e-6;

/// One (fused, positive, negatives) triple. Similarity is always cosine.
struct LossPair {
    FeatureVector anchor;
    FeatureVector positive;
    std::vector<FeatureVector> negatives;
};

using LossBatch = std::vector<LossPair>;

/// Rejects empty negative lists, ragged dimensions and non-finite entries.
void validate(const LossBatch& batch);

double npair_standard(const LossBatch& batch);
/// Throws DegenerateBatchError when any pair's negative-similarity sum is
/// smaller than kPaperMinDenominator in magnitude.
double npair_paper(const LossBatch& batch);
double npair(const LossBatch& batch, LossMode mode);

/// Differentiable loss of one pair. anchor and positive are 1×d, negatives K×d.
nk::Var pair_loss(nk::Var anchor, nk::Var positive, nk::Var negatives, LossMode mode);

/// Differentiable batch loss: every vector becomes a tape variable; the
/// returned handles allow gradient inspection.
struct BatchVars {
    nk::Var loss;
    std::vector<nk::Var> anchors;
    std::vector<nk::Var> positives;
    std::vector<nk::Var> negatives;  ///< K×d per pair
};
BatchVars batch_loss(nk::Tape& tape, const LossBatch& batch, LossMode mode);

/// Positions of candidates whose id differs from gold_id. Every occurrence of
/// the gold id is excluded.
std::vector<std::size_t> negative_indices(std::string_view gold_id,
                                          std::span<const std::string> candidate_ids);

/// Builds the loss triple for one sample: negatives are the candidate
/// embeddings minus every gold occurrence. Throws ConfigError when nothing is
/// left.
LossPair batch_from_candidates(const FeatureVector& fused, std::string_view gold_id,
                               const FeatureVector& gold_embedding,
                               std::span<const std::string> candidate_ids,
                               std::span<const FeatureVector> candidate_embeddings);

} // namespace dimel::contrastive
