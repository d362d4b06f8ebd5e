#include "dimel/candgen.hpp"

#include "dimel/datastore.hpp"
#include "dimel/errors.hpp"
#include "dimel/numkernel/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace dimel::candgen {

namespace {

std::u32string decode_utf8(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3
                                          : (lead >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > text.size()) {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        char32_t cp = len == 1 ? lead : lead & (0x7F >> len);
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto byte = static_cast<unsigned char>(text[i + k]);
            if ((byte & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (byte & 0x3F);
        }
        if (!ok) {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

// Simple one-to-one lowercase for Latin, Greek and Cyrillic capitals.
char32_t fold(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 0x20;
    if (c < 0x80) return c;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if (c >= 0x100 && c <= 0x137 && c != 0x130) return c | 1;
    if (c >= 0x139 && c <= 0x148) return (c & 1) ? c + 1 : c;
    if (c >= 0x14A && c <= 0x177) return c | 1;
    if (c == 0x178) return 0xFF;
    if (c >= 0x179 && c <= 0x17E) return (c & 1) ? c + 1 : c;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
    if (c >= 0x410 && c <= 0x42F) return c + 0x20;
    if (c >= 0x400 && c <= 0x40F) return c + 0x50;
    return c;
}

bool is_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
           c == 0xA0;
}

} // namespace

std::u32string normalize(std::string_view text) {
    std::u32string out;
    bool pending_space = false;
    for (char32_t c : decode_utf8(text)) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(U' ');
        pending_space = false;
        out.push_back(fold(c));
    }
    return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t above = row[j];
            row[j] = std::min({above + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = above;
        }
    }
    return row[b.size()];
}

double full_ratio(std::u32string_view a, std::u32string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double partial_ratio(std::u32string_view a, std::u32string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    if (a.empty()) return b.empty() ? 1.0 : 0.0;
    double best = 0.0;
    for (std::size_t start = 0; start + a.size() <= b.size(); ++start) {
        best = std::max(best, full_ratio(a, b.substr(start, a.size())));
        if (best == 1.0) break;
    }
    return best;
}

double similarity_ratio(std::string_view a, std::string_view b) {
    const std::u32string na = normalize(a);
    const std::u32string nb = normalize(b);
    return std::max(full_ratio(na, nb), partial_ratio(na, nb));
}

CandidateSet generate_candidates(std::string_view mention, const std::vector<EntityRecord>& entities,
                                 std::size_t k, const std::optional<std::string>& gold_id,
                                 bool inject_gold, std::size_t workers) {
    if (k == 0) throw ConfigError("candidate count k must be at least 1");
    if (entities.empty()) throw DataError("candidate generation over an empty entity list");

    std::optional<std::size_t> gold_index;
    if (gold_id) {
        for (std::size_t i = 0; i < entities.size(); ++i) {
            if (entities[i].id == *gold_id) {
                gold_index = i;
                break;
            }
        }
        if (!gold_index) throw DataError("gold entity '" + *gold_id + "' is not in the entity list");
    }

    const std::u32string needle = normalize(mention);
    std::vector<double> scores(entities.size());
    nk::parallel_for(
        entities.size(),
        [&](std::size_t i) {
            const std::u32string name = normalize(entities[i].name);
            scores[i] = std::max(full_ratio(needle, name), partial_ratio(needle, name));
        },
        workers);

    std::vector<std::size_t> order(entities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return entities[x].id < entities[y].id;
    };
    const std::size_t take = std::min(k, entities.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      better);
    order.resize(take);

    CandidateSet out;
    bool gold_present = false;
    for (std::size_t i : order) gold_present = gold_present || (gold_index && i == *gold_index);
    if (gold_index && !gold_present && inject_gold) {
        order.back() = *gold_index;
        gold_present = true;
    }
    out.gold_included = gold_present;
    for (std::size_t i : order) {
        out.entity_ids.push_back(entities[i].id);
        out.scores.push_back(scores[i]);
    }
    return out;
}

} // namespace dimel::candgen
