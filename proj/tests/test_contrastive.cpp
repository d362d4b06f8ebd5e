#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dimel/contrastive.hpp"
#include "dimel/errors.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace dimel;
using namespace dimel::contrastive;
using testsupport::random_vector;

namespace {

double cos_ref(const FeatureVector& a, const FeatureVector& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

double standard_ref(const LossBatch& batch) {
    double total = 0;
    for (const auto& p : batch) {
        const double sp = cos_ref(p.anchor, p.positive);
        double inner = 1.0;
        for (const auto& n : p.negatives) inner += std::exp(cos_ref(p.anchor, n) - sp);
        total += std::log(inner);
    }
    return total;
}

double paper_ref(const LossBatch& batch) {
    double total = 0;
    for (const auto& p : batch) {
        double denom = 0, z = 0;
        for (const auto& n : p.negatives) {
            denom += cos_ref(p.anchor, n);
            z += std::exp(cos_ref(p.anchor, n));
        }
        total += -cos_ref(p.anchor, p.positive) / denom + std::log(z);
    }
    return total;
}

LossBatch random_batch(nk::CounterRng& rng, std::size_t pairs, std::size_t k, std::size_t d) {
    LossBatch batch;
    for (std::size_t i = 0; i < pairs; ++i) {
        LossPair p{random_vector(rng, d), random_vector(rng, d), {}};
        // negatives share a component with the anchor so their cosine sum stays away from zero
        for (std::size_t j = 0; j < k; ++j) {
            FeatureVector n = random_vector(rng, d, -0.3, 0.3);
            for (std::size_t c = 0; c < d; ++c) n[c] += p.anchor[c];
            p.negatives.push_back(n);
        }
        batch.push_back(p);
    }
    return batch;
}

} // namespace

TEST_CASE("paper loss on the hand example") {
    const double r = std::numbers::sqrt2 / 2;
    const LossBatch batch{{{1, 0}, {1, 0}, {{r, r}}}};
    CHECK(npair_paper(batch) == doctest::Approx(-0.7071067811865474).epsilon(1e-12));
    CHECK(npair(batch, LossMode::paper) == npair_paper(batch));
}

TEST_CASE("paper loss rejects a vanishing denominator") {
    const LossBatch batch{{{1, 0}, {1, 0}, {{0, 1}}}};
    CHECK_THROWS_AS(npair_paper(batch), DegenerateBatchError);
    const LossBatch cancel{{{1, 0}, {1, 0}, {{1, 1}, {-1, 1}}}};
    CHECK_THROWS_AS(npair_paper(cancel), DegenerateBatchError);
    try {
        npair_paper(batch);
    } catch (const DegenerateBatchError& e) {
        CHECK(std::string(e.what()).find("loss_mode") != std::string::npos);
    }
    CHECK_NOTHROW(npair_standard(batch));
}

TEST_CASE("standard loss closed forms") {
    // sim(g, p) = sim(g, n) = sqrt(2)/2
    const LossBatch equal{{{1, 0}, {1, 1}, {{1, -1}}}};
    CHECK(npair_standard(equal) == doctest::Approx(0.6931471805599453).epsilon(1e-14));

    const LossBatch hand{{{1, 0}, {1, 0}, {{1, 1}}}};
    CHECK(npair_standard(hand) == doctest::Approx(0.5573857638961929).epsilon(1e-12));

    // g = p, every negative = -g
    for (std::size_t k : {1, 5, 99}) {
        LossPair p{{0.3, -0.4, 1.2}, {0.3, -0.4, 1.2}, {}};
        for (std::size_t j = 0; j < k; ++j) p.negatives.push_back({-0.3, 0.4, -1.2});
        const double loss = npair_standard({p});
        CHECK(loss == doctest::Approx(std::log1p(double(k) * std::exp(-2.0))).epsilon(1e-12));
        CHECK(loss > 0.0);
    }
    CHECK(npair_standard({{{1, 0}, {1, 0}, {{-1, 0}}}}) == doctest::Approx(0.1269280110429726).epsilon(1e-12));
}

TEST_CASE("both modes match scalar loops") {
    nk::CounterRng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto batch = random_batch(rng, 1 + rng.below(4), 1 + rng.below(6), 2 + rng.below(10));
        CHECK(std::abs(npair_standard(batch) - standard_ref(batch)) < 1e-10);
        CHECK(std::abs(npair_paper(batch) - paper_ref(batch)) < 1e-10);
    }
}

TEST_CASE("additivity and permutation invariance") {
    nk::CounterRng rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        auto batch = random_batch(rng, 4, 5, 6);
        for (LossMode mode : {LossMode::standard, LossMode::paper}) {
            double parts = 0;
            for (const auto& p : batch) parts += npair({p}, mode);
            CHECK(npair(batch, mode) == doctest::Approx(parts).epsilon(1e-13));
            auto shuffled = batch;
            for (auto& p : shuffled) std::reverse(p.negatives.begin(), p.negatives.end());
            CHECK(npair(shuffled, mode) == doctest::Approx(npair(batch, mode)).epsilon(1e-13));
        }
    }
}

TEST_CASE("standard loss is monotone in the similarities") {
    // rotate positive toward / negative toward the anchor in 2-D
    auto at = [](double angle) { return FeatureVector{std::cos(angle), std::sin(angle)}; };
    const FeatureVector g{1, 0};
    double previous = INFINITY;
    for (double a = 3.0; a >= 0.0; a -= 0.25) {
        const double loss = npair_standard({{g, at(a), {at(1.0), at(2.0)}}});
        CHECK(loss < previous);
        previous = loss;
    }
    previous = -INFINITY;
    for (double a = 3.0; a >= 0.0; a -= 0.25) {
        const double loss = npair_standard({{g, at(0.5), {at(a), at(2.0)}}});
        CHECK(loss > previous);
        previous = loss;
    }
}

TEST_CASE("gradients match finite differences") {
    nk::CounterRng rng(19);
    for (LossMode mode : {LossMode::standard, LossMode::paper}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto batch = random_batch(rng, 3, 4, 5);
            nk::Tape tape;
            const auto vars = batch_loss(tape, batch, mode);
            tape.backward(vars.loss);
            CHECK(vars.loss.value()(0, 0) == doctest::Approx(npair(batch, mode)).epsilon(1e-13));
            for (std::size_t i = 0; i < batch.size(); ++i) {
                auto perturbed = batch;
                nk::Tensor2 anchor = nk::Tensor2::row_vector(perturbed[i].anchor);
                auto f = [&] {
                    perturbed[i].anchor = anchor.data();
                    return npair(perturbed, mode);
                };
                const auto numeric = testsupport::numeric_gradient(f, anchor);
                CHECK(testsupport::relative_error(vars.anchors[i].grad(), numeric) < 1e-4);

                nk::Tensor2 negs = vars.negatives[i].value();
                auto fn = [&] {
                    for (std::size_t j = 0; j < negs.rows(); ++j)
                        perturbed[i].negatives[j].assign(negs.row(j).begin(), negs.row(j).end());
                    return npair(perturbed, mode);
                };
                perturbed = batch;
                const auto numeric_neg = testsupport::numeric_gradient(fn, negs);
                CHECK(testsupport::relative_error(vars.negatives[i].grad(), numeric_neg) < 1e-4);
            }
        }
    }
}

TEST_CASE("non-finite input is a contract violation") {
    CHECK_THROWS_AS(npair_standard({{{1, NAN}, {1, 0}, {{0, 1}}}}), ContractError);
    CHECK_THROWS_AS(npair_paper({{{1, 0}, {1, 0}, {{0, INFINITY}}}}), ContractError);
    CHECK_THROWS_AS(npair_standard({{{1, 0}, {1, 0}, {}}}), ConfigError);
    CHECK_THROWS_AS(npair_standard({{{1, 0}, {1, 0, 0}, {{0, 1}}}}), DimensionError);
}

TEST_CASE("batch_from_candidates") {
    auto make = [](std::size_t n, std::size_t gold_at) {
        std::vector<std::string> ids;
        std::vector<FeatureVector> embs;
        for (std::size_t i = 0; i < n; ++i) {
            ids.push_back("E" + std::to_string(i));
            embs.push_back({double(i) + 1.0, 1.0});
        }
        return std::pair{ids, embs};
    };
    {
        auto [ids, embs] = make(100, 42);
        const auto pair = batch_from_candidates({1, 1}, "E42", embs[42], ids, embs);
        CHECK(pair.negatives.size() == 99);
        CHECK(std::find(pair.negatives.begin(), pair.negatives.end(), embs[42]) == pair.negatives.end());
        CHECK(pair.positive == embs[42]);
    }
    {
        auto [ids, embs] = make(2, 0);
        CHECK(batch_from_candidates({1, 1}, "E0", embs[0], ids, embs).negatives.size() == 1);
    }
    {
        auto [ids, embs] = make(5, 0);
        ids[3] = "E1";
        CHECK(negative_indices("E1", ids) == std::vector<std::size_t>{0, 2, 4});
        CHECK(batch_from_candidates({1, 1}, "E1", embs[1], ids, embs).negatives.size() == 3);
    }
    {
        const std::vector<std::string> ids{"A", "A"};
        const std::vector<FeatureVector> embs{{1, 0}, {1, 0}};
        CHECK_THROWS_AS(batch_from_candidates({1, 1}, "A", embs[0], ids, embs), ConfigError);
    }
    CHECK(parse_loss_mode("paper") == LossMode::paper);
    CHECK(to_string(parse_loss_mode("standard")) == "standard");
    CHECK_THROWS_AS(parse_loss_mode("Paper"), ConfigError);
}
