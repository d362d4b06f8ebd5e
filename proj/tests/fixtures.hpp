#pragma once

#include "dimel/datastore.hpp"
#include "dimel/enhance.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace fixtures {

struct CategoryScript {
    std::vector<dimel::EntityRecord> entities;
    std::string script;  // mock provider JSON lines
    std::array<std::size_t, dimel::enhance::kAllCategories.size()> expected{};
};

/// Entity list plus a mock script whose replies fall into each category the
/// requested number of times. Empty outcomes are spread across blank replies,
/// malformed replies, exhausted retries and entities missing from the script;
/// a share of the others fail transiently before answering.
inline CategoryScript category_script(std::size_t total, std::size_t empty, std::size_t refusal,
                                      std::size_t speculative, std::size_t needs_verification,
                                      std::size_t fictional, std::size_t max_retries) {
    using dimel::enhance::Category;
    CategoryScript out;
    std::vector<Category> plan;
    auto push = [&](Category c, std::size_t n) { plan.insert(plan.end(), n, c); };
    push(Category::empty, empty);
    push(Category::refusal, refusal);
    push(Category::speculative, speculative);
    push(Category::needs_verification, needs_verification);
    push(Category::fictional, fictional);
    push(Category::enhanced, total - plan.size());
    // deterministic interleave so categories are not contiguous
    std::vector<Category> order(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) order[(i * 7919) % plan.size()] = plan[i];

    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::string id = "Q" + std::to_string(100000 + i);
        const std::string name = "Person " + std::to_string(i);
        out.entities.push_back({id, name, "Original text about " + name + ".", dimel::RepresentationSource::original});
        ++out.expected[static_cast<std::size_t>(order[i])];

        nlohmann::ordered_json line;
        line["id"] = id;
        switch (order[i]) {
        case Category::empty:
            switch (i % 4) {
            case 0: line["response"] = ""; break;
            case 1: line["response"] = "  \n "; line["malformed"] = true; break;
            case 2: line["response"] = "never seen"; line["fail_times"] = max_retries + 1; break;
            default: continue;  // not scripted at all
            }
            break;
        case Category::refusal: line["response"] = "Sorry, I cannot provide an introduction to this entity."; break;
        case Category::speculative: line["response"] = name + " is a common English given name."; break;
        case Category::needs_verification: line["response"] = "It is possible that " + name + " was a clerk."; break;
        case Category::fictional: line["response"] = name + " is a fictional name, so there is no information."; break;
        case Category::enhanced: line["response"] = name + " (born 1950) is a painter and teacher."; break;
        }
        if (order[i] != Category::empty && i % 5 == 0) line["fail_times"] = 1 + i % max_retries;
        out.script += line.dump() + "\n";
    }
    return out;
}

} // namespace fixtures
