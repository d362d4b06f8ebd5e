#pragma once

#include "dimel/numkernel/adamw.hpp"
#include "dimel/numkernel/tape.hpp"
#include "dimel/numkernel/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dimel::fusion {

using nk::Tensor2;
using FeatureVector = std::vector<double>;
/// L×d matrix, one row per token/patch (L = 1 for pooled features).
using FeatureSequence = Tensor2;

/// Inputs to one fusion forward pass.
struct FeatureBundle {
    FeatureSequence text;                ///< t
    FeatureSequence image;               ///< v
    FeatureVector expert;                ///< f_c
    std::optional<FeatureVector> mention; ///< m; unused unless the model fuses it

    std::size_t dim() const noexcept { return expert.size(); }
    /// Throws DimensionError / DomainError when the bundle is not well formed
    /// for hidden size d.
    void validate(std::size_t d) const;
};

struct HeadWeights {
    Tensor2 query;  ///< d × d/h
    Tensor2 key;    ///< d × d/h
    Tensor2 value;  ///< d × d/h

    friend bool operator==(const HeadWeights&, const HeadWeights&) = default;
};

struct BranchParams {
    std::vector<HeadWeights> heads;

    friend bool operator==(const BranchParams&, const BranchParams&) = default;
};

/// All learnable weights of the fusion model. There is no output projection:
/// head outputs are concatenated straight back to width d.
struct AttentionParams {
    std::size_t dim = 0;
    std::size_t heads = 0;
    BranchParams text;
    BranchParams image;
    /// d×d projection of the mention feature, present only when the model is
    /// configured to add m into the fused feature.
    std::optional<Tensor2> mention_projection;

    std::size_t head_dim() const noexcept { return heads ? dim / heads : 0; }
    bool fuses_mention() const noexcept { return mention_projection.has_value(); }

    /// Every tensor with a stable name ("text.head0.query", ...), sorted by name.
    std::vector<nk::NamedParam> named();
    std::vector<std::pair<std::string, const Tensor2*>> named() const;

    /// Checks d % h == 0 and every tensor's shape.
    void validate() const;

    friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct FusedFeatures {
    FeatureVector text;   ///< f_t
    FeatureVector image;  ///< f_v
    FeatureVector fused;  ///< g
};

/// "[CLS]" + caption + "[SEP]" + identity answer, byte for byte.
std::string expert_concat(std::string_view caption, std::string_view identity);

enum class InitScheme { xavier, identity };

/// Xavier-uniform (bound sqrt(6 / (d + d/h))) or identity-slice init. Identity
/// sets head i of every projection to columns [i*d/h, (i+1)*d/h) of I_d, so
/// concatenated value heads reproduce the attended rows unchanged.
AttentionParams init_params(std::uint64_t seed, std::size_t d, std::size_t h,
                            InitScheme scheme = InitScheme::xavier, bool fuse_mention = false);

/// g = f_v + f_c + f_t, summed in that order.
FeatureVector fuse(const FeatureVector& text, const FeatureVector& image,
                   const FeatureVector& expert);

// ---- differentiable form ----------------------------------------------------

struct BoundHead {
    nk::Var query, key, value;
};
struct BoundBranch {
    std::vector<BoundHead> heads;
};
struct BoundParams {
    BoundBranch text;
    BoundBranch image;
    std::optional<nk::Var> mention_projection;
    /// Same order as AttentionParams::named().
    std::vector<nk::Var> ordered;
};

/// Places params on the tape, as variables when `trainable`, else constants.
BoundParams bind(nk::Tape& tape, const AttentionParams& params, bool trainable);

/// Multi-head attention of a single query (1×d) over the rows of seq (L×d),
/// scaled by sqrt(d/h); returns the 1×d concatenation of head outputs.
nk::Var cross_attention(nk::Var query, nk::Var seq, const BoundBranch& branch);

struct FusedVars {
    nk::Var text;
    nk::Var image;
    nk::Var fused;
};

FusedVars forward(nk::Tape& tape, const FeatureBundle& bundle, const BoundParams& params);

// ---- plain evaluation ---------------------------------------------------------

FeatureVector cross_attention(const FeatureVector& query, const FeatureSequence& seq,
                              const BranchParams& branch);

/// Per-head attention weights (h × L) used by cross_attention.
Tensor2 attention_weights(const FeatureVector& query, const FeatureSequence& seq,
                          const BranchParams& branch);

FusedFeatures forward(const FeatureBundle& bundle, const AttentionParams& params);

} // namespace dimel::fusion
