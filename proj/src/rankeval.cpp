#include "dimel/rankeval.hpp"

#include "dimel/errors.hpp"
#include "dimel/numkernel/parallel.hpp"
#include "dimel/numkernel/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <unordered_map>

namespace dimel::rankeval {

TiePolicy parse_tie_policy(std::string_view text) {
    if (text == "pessimistic") return TiePolicy::pessimistic;
    if (text == "optimistic") return TiePolicy::optimistic;
    throw ConfigError("unknown tie policy '" + std::string(text) + "' (expected pessimistic|optimistic)");
}

std::string to_string(TiePolicy policy) {
    return policy == TiePolicy::pessimistic ? "pessimistic" : "optimistic";
}

double EvalReport::accuracy(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return accuracies[i];
    throw EvaluationError("report has no accuracy for k=" + std::to_string(k));
}

RankResult rank_of_gold(std::span<const double> fused, std::string_view gold_id,
                        std::span<const std::string> candidate_ids,
                        std::span<const std::vector<double>> candidate_embeddings,
                        TiePolicy policy) {
    if (candidate_ids.size() != candidate_embeddings.size()) {
        throw DimensionError("candidate ids and embeddings differ in length");
    }
    const auto gold_it = std::find(candidate_ids.begin(), candidate_ids.end(), gold_id);
    if (gold_it == candidate_ids.end()) {
        throw EvaluationError("gold entity '" + std::string(gold_id) + "' is not among the candidates");
    }
    const std::size_t gold_pos = static_cast<std::size_t>(gold_it - candidate_ids.begin());
    RankResult result;
    result.candidate_count = candidate_ids.size();
    result.gold_similarity = nk::cosine(fused, candidate_embeddings[gold_pos]);
    std::size_t ahead = 0;
    for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
        if (candidate_ids[i] == gold_id) continue;
        const double s = nk::cosine(fused, candidate_embeddings[i]);
        ahead += policy == TiePolicy::pessimistic ? (s >= result.gold_similarity)
                                                  : (s > result.gold_similarity);
    }
    result.gold_rank = 1 + ahead;
    return result;
}

EvalReport topk_accuracy(const std::vector<RankResult>& results, const std::vector<std::size_t>& ks) {
    if (results.empty()) throw EvaluationError("cannot compute top-k accuracy over zero results");
    if (ks.empty() || !std::is_sorted(ks.begin(), ks.end()) || ks.front() == 0) {
        throw ContractError("top-k list must be non-empty, positive and ascending");
    }
    EvalReport report;
    report.ks = ks;
    report.sample_count = results.size();
    report.results = results;
    for (std::size_t k : ks) {
        const auto hits = std::count_if(results.begin(), results.end(),
                                        [k](const RankResult& r) { return r.gold_rank <= k; });
        report.accuracies.push_back(static_cast<double>(hits) / static_cast<double>(results.size()));
    }
    return report;
}

EvalReport evaluate(const fusion::AttentionParams& params, const Dataset& dataset,
                    const std::vector<candgen::CandidateSet>& candidates, const EvalOptions& options) {
    if (params.dim != dataset.dim()) {
        throw DimensionError("model hidden size " + std::to_string(params.dim) +
                             " does not match dataset dimension " + std::to_string(dataset.dim()));
    }
    std::unordered_map<std::string, const candgen::CandidateSet*> by_mention;
    for (const candgen::CandidateSet& set : candidates) by_mention[set.mention_id] = &set;

    // Resolve everything up front so failures are reported before any work.
    std::vector<const candgen::CandidateSet*> sets(dataset.samples.size());
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const MentionSample& s = dataset.samples[i];
        auto it = by_mention.find(s.id);
        if (it == by_mention.end()) throw DataError("no candidate set for sample '" + s.id + "'");
        sets[i] = it->second;
        for (const std::string& id : sets[i]->entity_ids) {
            if (!dataset.entity.contains(id)) throw DataError("no embedding for entity '" + id + "'");
        }
        if (std::find(sets[i]->entity_ids.begin(), sets[i]->entity_ids.end(), s.gold_entity_id) ==
            sets[i]->entity_ids.end()) {
            throw EvaluationError("candidate set of sample '" + s.id + "' does not contain gold '" +
                                  s.gold_entity_id + "'");
        }
    }

    std::vector<RankResult> results(dataset.samples.size());
    nk::parallel_for(
        dataset.samples.size(),
        [&](std::size_t i) {
            const MentionSample& s = dataset.samples[i];
            const auto fused = fusion::forward(dataset.bundle(s), params).fused;
            std::vector<std::vector<double>> embeddings;
            embeddings.reserve(sets[i]->entity_ids.size());
            for (const std::string& id : sets[i]->entity_ids) embeddings.push_back(dataset.entity.vector(id));
            results[i] = rank_of_gold(fused, s.gold_entity_id, sets[i]->entity_ids, embeddings,
                                      options.tie_policy);
            results[i].sample_id = s.id;
        },
        options.workers);

    EvalReport report = topk_accuracy(results, options.ks);
    report.dataset = options.dataset_name;
    return report;
}

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

} // namespace

void write_report(std::ostream& out, const EvalReport& report, bool per_sample) {
    out << "dataset\t" << report.dataset << "\n";
    out << "ks\t";
    for (std::size_t i = 0; i < report.ks.size(); ++i) out << (i ? "," : "") << report.ks[i];
    out << "\n";
    out << "samples\t" << report.sample_count << "\n";
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        out << "T@" << report.ks[i] << "\t" << shortest(report.accuracies[i]) << "\n";
    }
    if (per_sample) {
        for (const RankResult& r : report.results) {
            out << "rank\t" << r.sample_id << "\t" << r.gold_rank << "\t" << r.candidate_count << "\t"
                << shortest(r.gold_similarity) << "\n";
        }
    }
}

std::string format_report(const EvalReport& report, bool per_sample) {
    std::ostringstream out;
    write_report(out, report, per_sample);
    return std::move(out).str();
}

} // namespace dimel::rankeval
