#pragma once

#include "dimel/candgen.hpp"
#include "dimel/config.hpp"
#include "dimel/datastore.hpp"
#include "dimel/fusion.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace dimel::train {

/// Permutation of [0, n) for one epoch. Depends only on (seed, epoch), so a
/// run resumed at any epoch sees the same order.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

struct TrainResult {
    fusion::AttentionParams initial;
    fusion::AttentionParams final_params;
    fusion::AttentionParams best_params;
    std::vector<double> epoch_losses;  ///< mean per-sample loss, one per epoch
    std::size_t best_epoch = 0;        ///< 1-based; 0 when no epoch ran
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Checks that every sample has a candidate set that contains its gold entity
/// and at least one other entity with an embedding.
void validate_training_inputs(const RunConfig& config, const Dataset& dataset,
                              const std::vector<candgen::CandidateSet>& candidates);

/// Mini-batch AdamW over the summed N-pair loss of each batch. Single
/// threaded; identical inputs give bit-identical results.
TrainResult train(const RunConfig& config, const Dataset& dataset,
                  const std::vector<candgen::CandidateSet>& candidates,
                  const EpochCallback& on_epoch = {});

/// "epoch<TAB>loss" per line, epochs numbered from 1.
std::string format_loss_curve(const std::vector<double>& losses);

} // namespace dimel::train
