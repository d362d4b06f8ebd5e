#include "dimel/fusion.hpp"

#include "dimel/errors.hpp"
#include "dimel/numkernel/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dimel::fusion {

namespace {

void check_sequence(const FeatureSequence& seq, std::size_t d, const char* what) {
    if (seq.rows() == 0) throw DimensionError(std::string(what) + " sequence has no rows");
    if (seq.cols() != d) {
        throw DimensionError(std::string(what) + " sequence width " + std::to_string(seq.cols()) +
                             " does not match hidden size " + std::to_string(d));
    }
    if (!seq.all_finite()) throw DomainError(std::string(what) + " sequence has non-finite entries");
}

void check_vector(const FeatureVector& v, std::size_t d, const char* what) {
    if (v.size() != d) {
        throw DimensionError(std::string(what) + " feature length " + std::to_string(v.size()) +
                             " does not match hidden size " + std::to_string(d));
    }
    for (double x : v) {
        if (!std::isfinite(x)) throw DomainError(std::string(what) + " feature has non-finite entries");
    }
}

void check_config(std::size_t d, std::size_t h) {
    if (d == 0 || h == 0 || d % h != 0) {
        throw ConfigError("hidden size " + std::to_string(d) + " is not divisible by head count " +
                          std::to_string(h));
    }
}

std::string head_name(const char* branch, std::size_t head, const char* role) {
    return std::string(branch) + ".head" + std::to_string(head) + "." + role;
}

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
    const char* branch_names[] = {"image", "text"};
    const std::array branches{&p.image, &p.text};
    for (int b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < branches[b]->heads.size(); ++i) {
            auto& head = branches[b]->heads[i];
            out.push_back({head_name(branch_names[b], i, "key"), &head.key});
            out.push_back({head_name(branch_names[b], i, "query"), &head.query});
            out.push_back({head_name(branch_names[b], i, "value"), &head.value});
        }
    }
    if (p.mention_projection) out.push_back({"mention.projection", &*p.mention_projection});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if constexpr (requires { a.name; }) return a.name < b.name;
        else return a.first < b.first;
    });
}

} // namespace

void FeatureBundle::validate(std::size_t d) const {
    check_vector(expert, d, "expert");
    check_sequence(text, d, "text");
    check_sequence(image, d, "image");
    if (mention) check_vector(*mention, d, "mention");
}

std::vector<nk::NamedParam> AttentionParams::named() {
    std::vector<nk::NamedParam> out;
    collect(*this, out);
    return out;
}

std::vector<std::pair<std::string, const Tensor2*>> AttentionParams::named() const {
    std::vector<std::pair<std::string, const Tensor2*>> out;
    collect(*this, out);
    return out;
}

void AttentionParams::validate() const {
    check_config(dim, heads);
    const std::size_t dk = head_dim();
    for (const BranchParams* branch : {&text, &image}) {
        if (branch->heads.size() != heads) {
            throw DimensionError("branch has " + std::to_string(branch->heads.size()) +
                                 " heads, expected " + std::to_string(heads));
        }
    }
    for (const auto& [name, tensor] : named()) {
        const bool mention = name == "mention.projection";
        const std::size_t want_cols = mention ? dim : dk;
        if (tensor->rows() != dim || tensor->cols() != want_cols) {
            throw DimensionError("parameter '" + name + "' has shape " + tensor->shape_string() +
                                 ", expected " + std::to_string(dim) + "x" +
                                 std::to_string(want_cols));
        }
    }
}

std::string expert_concat(std::string_view caption, std::string_view identity) {
    std::string out;
    out.reserve(caption.size() + identity.size() + 10);
    out.append("[CLS]").append(caption).append("[SEP]").append(identity);
    return out;
}

AttentionParams init_params(std::uint64_t seed, std::size_t d, std::size_t h, InitScheme scheme,
                            bool fuse_mention) {
    check_config(d, h);
    const std::size_t dk = d / h;
    AttentionParams params;
    params.dim = d;
    params.heads = h;

    nk::CounterRng rng(seed, 0x66757365);  // "fuse"
    const double bound = std::sqrt(6.0 / static_cast<double>(d + dk));
    auto make = [&](std::size_t head, std::size_t cols) {
        Tensor2 w(d, cols);
        if (scheme == InitScheme::identity) {
            for (std::size_t c = 0; c < cols; ++c) w(head * cols + c, c) = 1.0;
        } else {
            const double b = cols == dk ? bound : std::sqrt(6.0 / static_cast<double>(d + cols));
            for (double& x : w.data()) x = rng.uniform(-b, b);
        }
        return w;
    };
    for (BranchParams* branch : {&params.text, &params.image}) {
        for (std::size_t i = 0; i < h; ++i) {
            HeadWeights head;
            head.query = make(i, dk);
            head.key = make(i, dk);
            head.value = make(i, dk);
            branch->heads.push_back(std::move(head));
        }
    }
    if (fuse_mention) params.mention_projection = make(0, d);
    return params;
}

FeatureVector fuse(const FeatureVector& text, const FeatureVector& image,
                   const FeatureVector& expert) {
    if (text.size() != image.size() || text.size() != expert.size()) {
        throw DimensionError("fuse length mismatch: " + std::to_string(text.size()) + ", " +
                             std::to_string(image.size()) + ", " + std::to_string(expert.size()));
    }
    FeatureVector g(text.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = image[i] + expert[i] + text[i];
    return g;
}

BoundParams bind(nk::Tape& tape, const AttentionParams& params, bool trainable) {
    params.validate();
    auto place = [&](const Tensor2& w) {
        return trainable ? tape.variable(w) : tape.constant(w);
    };
    BoundParams bound;
    auto bind_branch = [&](const BranchParams& src, BoundBranch& dst) {
        for (const HeadWeights& head : src.heads) {
            dst.heads.push_back(BoundHead{place(head.query), place(head.key), place(head.value)});
        }
    };
    bind_branch(params.text, bound.text);
    bind_branch(params.image, bound.image);
    if (params.mention_projection) bound.mention_projection = place(*params.mention_projection);

    // Mirror the sorted order of AttentionParams::named().
    for (const auto& [name, tensor] : params.named()) {
        const auto dot1 = name.find('.');
        const std::string branch = name.substr(0, dot1);
        if (branch == "mention") {
            bound.ordered.push_back(*bound.mention_projection);
            continue;
        }
        const auto dot2 = name.find('.', dot1 + 1);
        const std::size_t index = std::stoul(name.substr(dot1 + 5, dot2 - dot1 - 5));
        const std::string role = name.substr(dot2 + 1);
        const BoundHead& head = (branch == "text" ? bound.text : bound.image).heads[index];
        bound.ordered.push_back(role == "query" ? head.query : role == "key" ? head.key : head.value);
    }
    return bound;
}

nk::Var cross_attention(nk::Var query, nk::Var seq, const BoundBranch& branch) {
    if (branch.heads.empty()) throw ConfigError("attention branch has no heads");
    if (query.rows() != 1) throw DimensionError("attention query must be a single row");
    if (query.cols() != seq.cols()) {
        throw DimensionError("query width " + std::to_string(query.cols()) +
                             " does not match sequence width " + std::to_string(seq.cols()));
    }
    if (seq.rows() == 0) throw DimensionError("attention over an empty sequence");
    std::vector<nk::Var> outputs;
    outputs.reserve(branch.heads.size());
    for (const BoundHead& head : branch.heads) {
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head.key.cols()));
        nk::Var q = nk::matmul(query, head.query);
        nk::Var k = nk::matmul(seq, head.key);
        nk::Var scores = nk::scale(nk::matmul(q, nk::transpose(k)), inv_scale);
        nk::Var weights = nk::softmax_rows(scores);
        nk::Var v = nk::matmul(seq, head.value);
        outputs.push_back(nk::matmul(weights, v));
    }
    return outputs.size() == 1 ? outputs.front() : nk::concat_cols(outputs);
}

FusedVars forward(nk::Tape& tape, const FeatureBundle& bundle, const BoundParams& params) {
    const std::size_t d = params.text.heads.empty() ? 0 : params.text.heads[0].query.rows();
    bundle.validate(d);
    nk::Var expert = tape.constant(Tensor2::row_vector(bundle.expert));
    nk::Var text = tape.constant(bundle.text);
    nk::Var image = tape.constant(bundle.image);

    FusedVars out;
    out.text = cross_attention(expert, text, params.text);
    out.image = cross_attention(expert, image, params.image);
    out.fused = nk::add(nk::add(out.image, expert), out.text);
    if (params.mention_projection) {
        if (!bundle.mention) throw DimensionError("model fuses the mention feature but none was given");
        nk::Var mention = tape.constant(Tensor2::row_vector(*bundle.mention));
        out.fused = nk::add(out.fused, nk::matmul(mention, *params.mention_projection));
    }
    return out;
}

FeatureVector cross_attention(const FeatureVector& query, const FeatureSequence& seq,
                              const BranchParams& branch) {
    if (branch.heads.empty()) throw ConfigError("attention branch has no heads");
    const std::size_t d = branch.heads[0].query.rows();
    check_vector(query, d, "query");
    check_sequence(seq, d, "attended");
    nk::Tape tape;
    BoundBranch bound;
    for (const HeadWeights& head : branch.heads) {
        bound.heads.push_back(BoundHead{tape.constant(head.query), tape.constant(head.key),
                                        tape.constant(head.value)});
    }
    nk::Var out = cross_attention(tape.constant(Tensor2::row_vector(query)), tape.constant(seq), bound);
    return out.value().data();
}

Tensor2 attention_weights(const FeatureVector& query, const FeatureSequence& seq,
                          const BranchParams& branch) {
    if (branch.heads.empty()) throw ConfigError("attention branch has no heads");
    const std::size_t d = branch.heads[0].query.rows();
    check_vector(query, d, "query");
    check_sequence(seq, d, "attended");
    const Tensor2 q_row = Tensor2::row_vector(query);
    Tensor2 out(branch.heads.size(), seq.rows());
    for (std::size_t h = 0; h < branch.heads.size(); ++h) {
        const HeadWeights& head = branch.heads[h];
        const Tensor2 q = nk::matmul(q_row, head.query);
        const Tensor2 k = nk::matmul(seq, head.key);
        const Tensor2 scores = nk::matmul(q, nk::transpose(k));
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head.key.cols()));
        std::vector<double> scaled(scores.data());
        for (double& s : scaled) s *= inv_scale;
        const auto w = nk::softmax(scaled);
        std::copy(w.begin(), w.end(), out.row(h).begin());
    }
    return out;
}

FusedFeatures forward(const FeatureBundle& bundle, const AttentionParams& params) {
    nk::Tape tape;
    const BoundParams bound = bind(tape, params, false);
    const FusedVars vars = forward(tape, bundle, bound);
    return FusedFeatures{vars.text.value().data(), vars.image.value().data(),
                         vars.fused.value().data()};
}

} // namespace dimel::fusion
