#include "dimel/datastore.hpp"
#include "dimel/errors.hpp"
#include "dimel/numkernel/random.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace dimel {

namespace {

constexpr std::array kSyllables{"ka", "lo", "ren", "mi", "to", "sa", "vel", "do", "ri", "an",
                                "bel", "cor", "du", "fen", "gar", "hal", "is", "jor", "ke", "lun",
                                "mar", "nor", "ol", "pe", "qui", "ros", "tan", "ul", "vor", "wen"};
constexpr std::array kFiller{"was", "seen", "at", "the", "summit", "with", "friends", "during",
                             "a", "visit", "to", "city", "hall", "on", "stage", "after",
                             "award", "ceremony", "in", "spring"};
constexpr std::array kCaptions{"A man and a woman on the red carpet", "A person speaking at a podium",
                               "A group of people standing outside", "A portrait of a smiling person",
                               "A man in a suit waving to a crowd"};
constexpr std::array kRoles{"politician", "athlete", "musician", "scientist", "actor", "writer"};

std::string capitalized(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::string make_word(nk::CounterRng& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[rng.below(kSyllables.size())];
    return capitalized(w);
}

std::string padded(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06zu", prefix, n);
    return buf;
}

std::vector<double> random_unit(nk::CounterRng& rng, std::size_t d) {
    std::vector<double> v(d);
    double n2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (double& x : v) x /= n;
    return v;
}

std::vector<double> round_to_float(std::vector<double> v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    return v;
}

// rows = row_scale * normalize(row_signal * u + xi), xi ~ N(0, I/d)
nk::Tensor2 planted_rows(nk::CounterRng& rng, const std::vector<double>& u, std::size_t rows,
                         const MockConfig& cfg) {
    const std::size_t d = u.size();
    nk::Tensor2 out(rows, d);
    const double spread = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(d);
        double n2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = cfg.row_signal * u[j] + spread * rng.normal();
            n2 += row[j] * row[j];
        }
        const double n = std::sqrt(n2);
        for (std::size_t j = 0; j < d; ++j) out(r, j) = static_cast<float>(cfg.row_scale * row[j] / n);
    }
    return out;
}

} // namespace

Dataset mock_generate(const MockConfig& cfg) {
    if (cfg.entities < 2) throw ConfigError("mock dataset needs at least 2 entities");
    if (cfg.dim < 2) throw ConfigError("mock dataset needs dimension of at least 2");
    if (cfg.text_rows == 0 || cfg.image_rows == 0) throw ConfigError("mock sequences need at least one row");
    if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
        throw ConfigError("mock heads " + std::to_string(cfg.heads) + " must divide dimension " +
                          std::to_string(cfg.dim));
    }
    if (!(cfg.noise_sigma >= 0.0) || !(cfg.row_scale >= 0.0)) {
        throw ConfigError("mock noise_sigma and row_scale must be non-negative");
    }
    const std::size_t d = cfg.dim;
    Dataset ds;
    ds.text = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.image = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.expert = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.entity = EmbeddingTable(static_cast<std::uint32_t>(d));
    ds.mention = EmbeddingTable(static_cast<std::uint32_t>(d));

    // Entities: unique names, target directions, noisy embeddings.
    nk::CounterRng name_rng(cfg.seed, 1);
    nk::CounterRng direction_rng(cfg.seed, 2);
    nk::CounterRng noise_rng(cfg.seed, 3);
    std::unordered_set<std::string> used_names;
    std::vector<std::vector<double>> directions;
    for (std::size_t e = 0; e < cfg.entities; ++e) {
        std::string name;
        do {
            name = make_word(name_rng, 1 + name_rng.below(2)) + " " +
                   make_word(name_rng, 2 + name_rng.below(2));
        } while (!used_names.insert(name).second);
        EntityRecord rec;
        rec.id = padded("E", e);
        rec.name = name;
        rec.representation = name + " is a " + kRoles[name_rng.below(kRoles.size())] +
                             " known from synthetic record " + rec.id + ".";
        ds.entities.push_back(rec);

        directions.push_back(random_unit(direction_rng, d));
        std::vector<double> emb = directions.back();
        for (double& x : emb) x += cfg.noise_sigma * noise_rng.normal();
        ds.entity.add(rec.id, std::span<const double>(emb));
    }

    const fusion::AttentionParams identity =
        fusion::init_params(0, d, cfg.heads, fusion::InitScheme::identity);

    for (std::size_t i = 0; i < cfg.samples; ++i) {
        nk::CounterRng rng(cfg.seed, 1000 + i);
        const std::size_t gold = rng.below(cfg.entities);
        const EntityRecord& entity = ds.entities[gold];
        const std::vector<double>& u = directions[gold];

        MentionSample s;
        s.id = padded("S", i);
        s.image_id = padded("IMG", i);
        s.gold_entity_id = entity.id;
        // Mention: full name, surname only, or a one-letter typo.
        const std::string surname = entity.name.substr(entity.name.find(' ') + 1);
        switch (rng.below(3)) {
        case 0: s.mention = entity.name; break;
        case 1: s.mention = surname; break;
        default: {
            s.mention = entity.name;
            const std::size_t pos = rng.below(s.mention.size());
            if (s.mention[pos] != ' ') s.mention[pos] = static_cast<char>('a' + rng.below(26));
        }
        }
        s.text = s.mention;
        const std::size_t words = 4 + rng.below(8);
        for (std::size_t w = 0; w < words; ++w) s.text += std::string(" ") + kFiller[rng.below(kFiller.size())];
        s.expert_c1 = kCaptions[rng.below(kCaptions.size())];
        s.expert_c2 = entity.name;

        fusion::FeatureBundle b;
        b.text = planted_rows(rng, u, cfg.text_rows, cfg);
        b.image = planted_rows(rng, u, cfg.image_rows, cfg);
        // Solve f_c = u - (f_t + f_v) under the identity model by fixed-point
        // iteration; attention outputs are convex combinations of short rows,
        // so the map contracts quickly.
        b.expert = u;
        for (int iter = 0; iter < 200; ++iter) {
            const auto fused = fusion::forward(b, identity).fused;
            double change = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double delta = u[j] - fused[j];
                b.expert[j] += delta;
                change = std::max(change, std::abs(delta));
            }
            if (change < 1e-15) break;
        }
        b.expert = round_to_float(b.expert);

        for (std::size_t r = 0; r < b.text.rows(); ++r)
            ds.text.add(s.id + "#" + std::to_string(r), b.text.row(r));
        for (std::size_t r = 0; r < b.image.rows(); ++r)
            ds.image.add(s.image_id + "#" + std::to_string(r), b.image.row(r));
        ds.expert.add(s.id, std::span<const double>(b.expert));
        std::vector<double> mention = u;
        for (double& x : mention) x += cfg.noise_sigma * rng.normal();
        ds.mention->add(s.id, std::span<const double>(mention));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace dimel
