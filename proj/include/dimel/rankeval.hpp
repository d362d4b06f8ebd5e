#pragma once

#include "dimel/candgen.hpp"
#include "dimel/datastore.hpp"
#include "dimel/fusion.hpp"

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dimel::rankeval {

enum class TiePolicy {
    pessimistic,  ///< ties with gold count against it
    optimistic,   ///< ties with gold count for it
};

TiePolicy parse_tie_policy(std::string_view text);
std::string to_string(TiePolicy policy);

struct RankResult {
    std::string sample_id;
    std::size_t gold_rank = 0;  ///< 1-based
    std::size_t candidate_count = 0;
    double gold_similarity = 0.0;

    friend bool operator==(const RankResult&, const RankResult&) = default;
};

struct EvalReport {
    std::string dataset;
    std::vector<std::size_t> ks;
    std::vector<double> accuracies;  ///< parallel to ks
    std::size_t sample_count = 0;
    std::vector<RankResult> results;

    /// Accuracy for k; throws EvaluationError when k was not requested.
    double accuracy(std::size_t k) const;
};

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10, 20};

/// Rank of the gold candidate among all candidates by cosine to `fused`:
/// 1 + (number of non-gold candidates scoring >= gold) under the pessimistic
/// policy, > gold under the optimistic one. Candidates are matched to gold by
/// id. Throws EvaluationError when gold_id is absent.
RankResult rank_of_gold(std::span<const double> fused, std::string_view gold_id,
                        std::span<const std::string> candidate_ids,
                        std::span<const std::vector<double>> candidate_embeddings,
                        TiePolicy policy = TiePolicy::pessimistic);

/// Fraction of results with gold_rank <= k for each k (ascending).
EvalReport topk_accuracy(const std::vector<RankResult>& results,
                         const std::vector<std::size_t>& ks = kDefaultKs);

struct EvalOptions {
    std::vector<std::size_t> ks = kDefaultKs;
    TiePolicy tie_policy = TiePolicy::pessimistic;
    std::string dataset_name = "dataset";
    std::size_t workers = 0;  ///< 0 = hardware concurrency
};

/// Runs the model over every sample and ranks its candidate set. Candidate
/// sets are matched to samples by mention id.
EvalReport evaluate(const fusion::AttentionParams& params, const Dataset& dataset,
                    const std::vector<candgen::CandidateSet>& candidates,
                    const EvalOptions& options = {});

/// Header, one "T@k<TAB>accuracy" line per k, then (optionally) one rank line
/// per sample. Numbers use shortest round-trip formatting.
void write_report(std::ostream& out, const EvalReport& report, bool per_sample);
std::string format_report(const EvalReport& report, bool per_sample);

} // namespace dimel::rankeval
