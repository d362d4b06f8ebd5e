#pragma once

#include "dimel/candgen.hpp"
#include "dimel/fusion.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dimel {

/// One linking instance.
struct MentionSample {
    std::string id;
    std::string text;            ///< sentence x_t
    std::string mention;         ///< surface string x_m
    std::string image_id;
    std::string expert_c1;       ///< image caption
    std::string expert_c2;       ///< identity answer
    std::string gold_entity_id;

    friend bool operator==(const MentionSample&, const MentionSample&) = default;
};

enum class RepresentationSource { original, enhanced };

struct EntityRecord {
    std::string id;
    std::string name;
    std::string representation;  ///< x_e
    RepresentationSource representation_source = RepresentationSource::original;

    friend bool operator==(const EntityRecord&, const EntityRecord&) = default;
};

std::string to_string(RepresentationSource source);

/// id -> real32 vector, in insertion order.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::uint32_t dim) : dim_(dim) {}

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    /// Throws DataError on duplicate id or wrong length.
    void add(std::string id, std::span<const float> values);
    void add(std::string id, std::span<const double> values);

    bool contains(std::string_view id) const { return index_.contains(std::string(id)); }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    std::span<const float> values(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }
    std::optional<std::span<const float>> find(std::string_view id) const;

    /// The vector promoted to real64. Throws DataError naming a missing id.
    std::vector<double> vector(std::string_view id) const;

    /// Rows "<id>" (pooled, L = 1) or else "<id>#0", "<id>#1", ... until the
    /// first gap. Throws DataError when neither form exists.
    nk::Tensor2 sequence(std::string_view id) const;

    friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
        return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
    }

private:
    std::uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace store {

// ---- line-delimited records ---------------------------------------------------

std::vector<MentionSample> parse_samples(std::string_view text);
std::vector<EntityRecord> parse_entities(std::string_view text);
std::vector<candgen::CandidateSet> parse_candidates(std::string_view text);
std::string format_samples(const std::vector<MentionSample>& samples);
std::string format_entities(const std::vector<EntityRecord>& entities);
std::string format_candidates(const std::vector<candgen::CandidateSet>& sets);

std::vector<MentionSample> read_samples(const std::filesystem::path& path);
std::vector<EntityRecord> read_entities(const std::filesystem::path& path);
std::vector<candgen::CandidateSet> read_candidates(const std::filesystem::path& path);
void write_samples(const std::vector<MentionSample>& samples, const std::filesystem::path& path);
void write_entities(const std::vector<EntityRecord>& entities, const std::filesystem::path& path);
void write_candidates(const std::vector<candgen::CandidateSet>& sets,
                      const std::filesystem::path& path);

/// Every gold_entity_id must name an entity. Throws ReferenceError.
void validate_references(const std::vector<MentionSample>& samples,
                         const std::vector<EntityRecord>& entities);

// ---- DIMEMB01 embeddings ------------------------------------------------------

inline constexpr std::string_view kEmbeddingMagic = "DIMEMB01";
inline constexpr std::uint32_t kEmbeddingVersion = 1;

std::string encode_embeddings(const EmbeddingTable& table);
EmbeddingTable decode_embeddings(std::string_view bytes);
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

// ---- checkpoints --------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "DIMCKP01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const fusion::AttentionParams& params);
fusion::AttentionParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const fusion::AttentionParams& params, const std::filesystem::path& path);
fusion::AttentionParams load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint, but throws DimensionError unless the stored model has
/// hidden size d and h heads.
fusion::AttentionParams load_checkpoint(const std::filesystem::path& path, std::size_t d,
                                        std::size_t h);

// ---- files --------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Keeps at most max_chars code points of a UTF-8 string.
std::string truncate_utf8(std::string_view text, std::size_t max_chars);
std::size_t utf8_length(std::string_view text);

} // namespace store

// ---- datasets -------------------------------------------------------------------

/// Samples, entities and the feature tables the fusion model consumes. On disk
/// a dataset is a directory holding samples.jsonl, entities.jsonl, text.emb,
/// image.emb, expert.emb, entity.emb and optionally mention.emb.
struct Dataset {
    std::vector<MentionSample> samples;
    std::vector<EntityRecord> entities;
    EmbeddingTable text;    ///< keyed by sample id
    EmbeddingTable image;   ///< keyed by image id
    EmbeddingTable expert;  ///< keyed by sample id
    EmbeddingTable entity;  ///< keyed by entity id
    std::optional<EmbeddingTable> mention;  ///< keyed by sample id

    std::size_t dim() const noexcept { return expert.dim(); }
    fusion::FeatureBundle bundle(const MentionSample& sample) const;
    std::vector<double> entity_embedding(std::string_view id) const { return entity.vector(id); }

    /// Unique ids, resolvable references, consistent dimensions, and features
    /// for every sample and gold entity.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct DatasetStats {
    std::size_t samples = 0;   ///< distinct (text, image) posts
    std::size_t entities = 0;
    std::size_t mentions = 0;  ///< MentionSample records
    double mean_text_words = 0.0;
    double mean_representation_chars = 0.0;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats compute_stats(const std::vector<MentionSample>& samples,
                           const std::vector<EntityRecord>& entities);

struct MockConfig {
    std::uint64_t seed = 7;
    std::size_t samples = 500;
    std::size_t entities = 1000;
    std::size_t dim = 64;
    double noise_sigma = 0.05;
    std::size_t text_rows = 4;
    std::size_t image_rows = 4;
    /// Norm of every text/image row relative to the unit target direction.
    double row_scale = 0.3;
    /// Weight of the target direction inside each row before normalization.
    double row_signal = 1.0;
    /// Heads of the identity model the planted direction is defined for.
    std::size_t heads = 8;
};

/// Planted-solution dataset. Each entity has a random unit direction u; its
/// embedding is u plus N(0, noise_sigma^2) noise. Each sample's expert feature
/// is solved so that the identity-initialized model fuses exactly to u of its
/// gold entity.
Dataset mock_generate(const MockConfig& config);

} // namespace dimel
