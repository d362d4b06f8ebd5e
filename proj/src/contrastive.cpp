#include "dimel/contrastive.hpp"

#include "dimel/errors.hpp"

#include <cmath>

namespace dimel::contrastive {

using nk::Tensor2;
using nk::Var;

LossMode parse_loss_mode(std::string_view text) {
    if (text == "standard") return LossMode::standard;
    if (text == "paper") return LossMode::paper;
    throw ConfigError("unknown loss_mode '" + std::string(text) + "' (expected standard|paper)");
}

std::string to_string(LossMode mode) {
    return mode == LossMode::standard ? "standard" : "paper";
}

namespace {

void check_finite(const FeatureVector& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw ContractError(std::string(what) + " contains a non-finite value");
    }
}

Tensor2 stack(const std::vector<FeatureVector>& rows) {
    Tensor2 out(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
    return out;
}

} // namespace

void validate(const LossBatch& batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const LossPair& pair = batch[i];
        const std::size_t d = pair.anchor.size();
        if (pair.negatives.empty()) {
            throw ConfigError("loss pair " + std::to_string(i) + " has no negatives");
        }
        if (pair.positive.size() != d) throw DimensionError("loss pair positive has wrong dimension");
        check_finite(pair.anchor, "loss anchor");
        check_finite(pair.positive, "loss positive");
        for (const FeatureVector& n : pair.negatives) {
            if (n.size() != d) throw DimensionError("loss pair negative has wrong dimension");
            check_finite(n, "loss negative");
        }
    }
}

Var pair_loss(Var anchor, Var positive, Var negatives, LossMode mode) {
    if (!anchor.value().all_finite() || !positive.value().all_finite() ||
        !negatives.value().all_finite()) {
        throw ContractError("loss input contains a non-finite value");
    }
    if (negatives.rows() == 0) throw ConfigError("loss pair has no negatives");
    Var neg_sims = nk::cosine_rows(anchor, negatives);
    Var pos_sim = nk::cosine_rows(anchor, positive);
    if (mode == LossMode::standard) {
        Var zero = anchor.tape->constant(Tensor2(1, 1));
        Var margins = nk::sub_scalar(neg_sims, pos_sim);
        Var parts[] = {zero, margins};
        return nk::logsumexp(nk::concat_cols(parts));
    }
    Var denom = nk::sum(neg_sims);
    const double dv = denom.value()(0, 0);
    if (!(std::abs(dv) >= kPaperMinDenominator)) {
        throw DegenerateBatchError("paper-form loss denominator " + std::to_string(dv) +
                                   " is below 1e-6 in magnitude; resample or use loss_mode=standard");
    }
    return nk::add(nk::scale(nk::div(pos_sim, denom), -1.0), nk::logsumexp(neg_sims));
}

BatchVars batch_loss(nk::Tape& tape, const LossBatch& batch, LossMode mode) {
    validate(batch);
    if (batch.empty()) throw ConfigError("empty loss batch");
    BatchVars out;
    std::vector<Var> losses;
    for (const LossPair& pair : batch) {
        out.anchors.push_back(tape.variable(Tensor2::row_vector(pair.anchor)));
        out.positives.push_back(tape.variable(Tensor2::row_vector(pair.positive)));
        out.negatives.push_back(tape.variable(stack(pair.negatives)));
        losses.push_back(pair_loss(out.anchors.back(), out.positives.back(), out.negatives.back(), mode));
    }
    out.loss = losses.size() == 1 ? losses[0] : nk::sum(nk::concat_cols(losses));
    return out;
}

double npair(const LossBatch& batch, LossMode mode) {
    validate(batch);
    double total = 0.0;
    for (const LossPair& pair : batch) {
        nk::Tape tape;
        Var loss = pair_loss(tape.constant(Tensor2::row_vector(pair.anchor)),
                             tape.constant(Tensor2::row_vector(pair.positive)),
                             tape.constant(stack(pair.negatives)), mode);
        total += loss.value()(0, 0);
    }
    return total;
}

double npair_standard(const LossBatch& batch) { return npair(batch, LossMode::standard); }
double npair_paper(const LossBatch& batch) { return npair(batch, LossMode::paper); }

std::vector<std::size_t> negative_indices(std::string_view gold_id,
                                          std::span<const std::string> candidate_ids) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < candidate_ids.size(); ++i)
        if (candidate_ids[i] != gold_id) out.push_back(i);
    return out;
}

LossPair batch_from_candidates(const FeatureVector& fused, std::string_view gold_id,
                               const FeatureVector& gold_embedding,
                               std::span<const std::string> candidate_ids,
                               std::span<const FeatureVector> candidate_embeddings) {
    if (candidate_ids.size() != candidate_embeddings.size()) {
        throw DimensionError("candidate ids and embeddings differ in length");
    }
    LossPair pair{fused, gold_embedding, {}};
    for (std::size_t i : negative_indices(gold_id, candidate_ids))
        pair.negatives.push_back(candidate_embeddings[i]);
    if (pair.negatives.empty()) {
        throw ConfigError("candidate set for gold '" + std::string(gold_id) + "' has no negatives");
    }
    return pair;
}

} // namespace dimel::contrastive
