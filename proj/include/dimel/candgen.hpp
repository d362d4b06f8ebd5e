#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dimel {
struct EntityRecord;
}

namespace dimel::candgen {

/// Lowercases, trims and collapses whitespace runs to one space; returns the
/// result as code points.
std::u32string normalize(std::string_view text);

/// Levenshtein distance over code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

/// 1 - lev(a, b) / max(|a|, |b|) on already-normalized input (1 when both empty).
double full_ratio(std::u32string_view a, std::u32string_view b);

/// Best full_ratio of the shorter string against every equally long window of
/// the longer one. 0 when the shorter string is empty and the longer is not.
double partial_ratio(std::u32string_view a, std::u32string_view b);

/// max(full_ratio, partial_ratio) after normalization; symmetric, in [0, 1].
double similarity_ratio(std::string_view a, std::string_view b);

struct CandidateSet {
    std::string mention_id;
    std::vector<std::string> entity_ids;  ///< best first
    std::vector<double> scores;           ///< parallel to entity_ids, non-increasing
    bool gold_included = false;

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Top-k entities by similarity_ratio(mention, name), ties broken by ascending
/// id. When gold_id is set and inject_gold is true, a gold entity that missed
/// the cut replaces the last slot; with inject_gold false, gold_included only
/// reports whether it made the cut. Scoring runs on `workers` threads
/// (0 = hardware concurrency).
CandidateSet generate_candidates(std::string_view mention, const std::vector<EntityRecord>& entities,
                                 std::size_t k, const std::optional<std::string>& gold_id,
                                 bool inject_gold = true, std::size_t workers = 1);

} // namespace dimel::candgen
