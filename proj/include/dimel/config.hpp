#pragma once

#include "dimel/contrastive.hpp"
#include "dimel/fusion.hpp"
#include "dimel/numkernel/adamw.hpp"
#include "dimel/rankeval.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dimel {

/// Resolved settings for one run. Sources apply in the order
/// defaults < environment (DIMEL_<KEY>) < config file < command-line flags.
struct RunConfig {
    std::size_t hidden_dim = 512;
    std::size_t heads = 8;
    double learning_rate = 5e-5;
    std::size_t batch_size = 64;
    std::size_t epochs = 300;
    contrastive::LossMode loss_mode = contrastive::LossMode::standard;
    std::uint64_t seed = 0;
    std::size_t candidate_k = 100;
    rankeval::TiePolicy tie_policy = rankeval::TiePolicy::pessimistic;
    std::size_t truncation_budget = 512;
    bool gold_injection = true;
    bool fuse_mention = false;
    fusion::InitScheme init = fusion::InitScheme::xavier;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    /// Sets one field from its textual form. Throws ConfigError on an unknown
    /// key or unparsable value.
    void set(std::string_view key, std::string_view value);
    /// Flat "key=value" lines; blank lines and '#' comments are ignored.
    void apply_text(std::string_view text);
    /// Applies every DIMEL_<KEY> variable present in the environment.
    void apply_environment();

    std::vector<std::pair<std::string, std::string>> entries() const;
    /// The resolved config in the same key=value format apply_text reads.
    std::string to_text() const;

    nk::AdamWHyper adamw() const;
    void validate() const;

    static const std::vector<std::string>& keys();
};

} // namespace dimel
