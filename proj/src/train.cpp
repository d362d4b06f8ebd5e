#include "dimel/train.hpp"

#include "dimel/contrastive.hpp"
#include "dimel/errors.hpp"
#include "dimel/numkernel/adamw.hpp"
#include "dimel/numkernel/random.hpp"

#include <charconv>
#include <numeric>
#include <unordered_map>

namespace dimel::train {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    nk::CounterRng rng(seed, 0x73687566666c65ULL ^ epoch);  // "shuffle"
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

namespace {

struct PreparedSample {
    fusion::FeatureBundle bundle;
    nk::Tensor2 positive;   // 1×d
    nk::Tensor2 negatives;  // K×d
};

std::vector<const candgen::CandidateSet*> match_sets(const Dataset& dataset,
                                                     const std::vector<candgen::CandidateSet>& candidates) {
    std::unordered_map<std::string, const candgen::CandidateSet*> by_mention;
    for (const candgen::CandidateSet& set : candidates) by_mention[set.mention_id] = &set;
    std::vector<const candgen::CandidateSet*> out;
    for (const MentionSample& s : dataset.samples) {
        auto it = by_mention.find(s.id);
        if (it == by_mention.end()) throw DataError("no candidate set for sample '" + s.id + "'");
        out.push_back(it->second);
    }
    return out;
}

PreparedSample prepare(const Dataset& dataset, const MentionSample& sample,
                       const candgen::CandidateSet& set) {
    PreparedSample p;
    p.bundle = dataset.bundle(sample);
    p.positive = nk::Tensor2::row_vector(dataset.entity_embedding(sample.gold_entity_id));
    const auto negatives = contrastive::negative_indices(sample.gold_entity_id, set.entity_ids);
    p.negatives = nk::Tensor2(negatives.size(), dataset.dim());
    for (std::size_t r = 0; r < negatives.size(); ++r) {
        const auto v = dataset.entity_embedding(set.entity_ids[negatives[r]]);
        std::copy(v.begin(), v.end(), p.negatives.row(r).begin());
    }
    return p;
}

} // namespace

void validate_training_inputs(const RunConfig& config, const Dataset& dataset,
                              const std::vector<candgen::CandidateSet>& candidates) {
    config.validate();
    if (dataset.dim() != config.hidden_dim) {
        throw ConfigError("dataset dimension " + std::to_string(dataset.dim()) +
                          " does not match hidden_dim " + std::to_string(config.hidden_dim));
    }
    if (config.fuse_mention && !dataset.mention) {
        throw ConfigError("fuse_mention is set but the dataset has no mention embeddings");
    }
    const auto sets = match_sets(dataset, candidates);
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const MentionSample& s = dataset.samples[i];
        bool has_gold = false;
        std::size_t others = 0;
        for (const std::string& id : sets[i]->entity_ids) {
            if (!dataset.entity.contains(id)) throw DataError("no embedding for entity '" + id + "'");
            if (id == s.gold_entity_id) has_gold = true;
            else ++others;
        }
        if (!has_gold) {
            throw DataError("candidate set of sample '" + s.id + "' does not contain its gold entity");
        }
        if (others == 0) throw ConfigError("candidate set of sample '" + s.id + "' has no negatives");
    }
}

TrainResult train(const RunConfig& config, const Dataset& dataset,
                  const std::vector<candgen::CandidateSet>& candidates, const EpochCallback& on_epoch) {
    validate_training_inputs(config, dataset, candidates);
    const auto sets = match_sets(dataset, candidates);

    TrainResult result;
    fusion::AttentionParams params =
        fusion::init_params(config.seed, config.hidden_dim, config.heads, config.init, config.fuse_mention);
    result.initial = params;
    result.best_params = params;

    std::vector<nk::NamedParam> named = params.named();
    nk::AdamWState state = nk::make_adamw_state(named, config.adamw());
    double best_loss = 0.0;

    const std::size_t n = dataset.samples.size();
    for (std::size_t epoch = 1; epoch <= config.epochs && n > 0; ++epoch) {
        const auto order = epoch_order(config.seed, epoch, n);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            nk::Tape tape;
            const fusion::BoundParams bound = fusion::bind(tape, params, true);
            std::vector<nk::Var> losses;
            for (std::size_t pos = start; pos < end; ++pos) {
                const std::size_t idx = order[pos];
                const PreparedSample p = prepare(dataset, dataset.samples[idx], *sets[idx]);
                const fusion::FusedVars fused = fusion::forward(tape, p.bundle, bound);
                losses.push_back(contrastive::pair_loss(fused.fused, tape.constant(p.positive),
                                                        tape.constant(p.negatives), config.loss_mode));
            }
            const nk::Var loss = losses.size() == 1 ? losses[0] : nk::sum(nk::concat_cols(losses));
            epoch_total += loss.value()(0, 0);
            tape.backward(loss);
            std::vector<nk::Tensor2> grads;
            grads.reserve(bound.ordered.size());
            for (const nk::Var& v : bound.ordered) grads.push_back(tape.grad(v));
            nk::adamw_step(named, grads, state);
        }
        const double mean = epoch_total / static_cast<double>(n);
        result.epoch_losses.push_back(mean);
        if (result.best_epoch == 0 || mean < best_loss) {
            best_loss = mean;
            result.best_epoch = epoch;
            result.best_params = params;
        }
        if (on_epoch) on_epoch(epoch, mean);
    }
    result.final_params = std::move(params);
    return result;
}

std::string format_loss_curve(const std::vector<double>& losses) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, losses[i]);
        out += std::to_string(i + 1) + "\t" + std::string(buf, end) + "\n";
    }
    return out;
}

} // namespace dimel::train
