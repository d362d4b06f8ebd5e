#include "dimel/datastore.hpp"
#include "dimel/errors.hpp"

#include <set>
#include <unordered_set>

namespace dimel {

fusion::FeatureBundle Dataset::bundle(const MentionSample& sample) const {
    fusion::FeatureBundle b;
    b.text = text.sequence(sample.id);
    b.image = image.sequence(sample.image_id);
    b.expert = expert.vector(sample.id);
    if (mention) b.mention = mention->vector(sample.id);
    return b;
}

void Dataset::validate() const {
    store::validate_references(samples, entities);
    const std::size_t d = expert.dim();
    if (d == 0) throw DataError("dataset has no expert feature dimension");
    auto check_dim = [&](const EmbeddingTable& t, const char* what) {
        if (t.dim() != d) {
            throw DimensionError(std::string(what) + " embeddings have dimension " +
                                 std::to_string(t.dim()) + ", expert embeddings have " +
                                 std::to_string(d));
        }
    };
    check_dim(text, "text");
    check_dim(image, "image");
    check_dim(entity, "entity");
    if (mention) check_dim(*mention, "mention");

    std::unordered_set<std::string> ids;
    for (const MentionSample& s : samples) {
        if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
        bundle(s).validate(d);
        if (!entity.contains(s.gold_entity_id)) {
            throw DataError("no embedding for gold entity '" + s.gold_entity_id + "' of sample '" +
                            s.id + "'");
        }
    }
    ids.clear();
    for (const EntityRecord& e : entities) {
        if (!ids.insert(e.id).second) throw DataError("duplicate entity id '" + e.id + "'");
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
    Dataset ds;
    ds.samples = store::read_samples(dir / "samples.jsonl");
    ds.entities = store::read_entities(dir / "entities.jsonl");
    ds.text = store::read_embeddings(dir / "text.emb");
    ds.image = store::read_embeddings(dir / "image.emb");
    ds.expert = store::read_embeddings(dir / "expert.emb");
    ds.entity = store::read_embeddings(dir / "entity.emb");
    if (fs::exists(dir / "mention.emb")) ds.mention = store::read_embeddings(dir / "mention.emb");
    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    store::write_samples(ds.samples, dir / "samples.jsonl");
    store::write_entities(ds.entities, dir / "entities.jsonl");
    store::write_embeddings(ds.text, dir / "text.emb");
    store::write_embeddings(ds.image, dir / "image.emb");
    store::write_embeddings(ds.expert, dir / "expert.emb");
    store::write_embeddings(ds.entity, dir / "entity.emb");
    if (ds.mention) store::write_embeddings(*ds.mention, dir / "mention.emb");
}

DatasetStats compute_stats(const std::vector<MentionSample>& samples,
                           const std::vector<EntityRecord>& entities) {
    DatasetStats stats;
    stats.mentions = samples.size();
    stats.entities = entities.size();

    std::set<std::pair<std::string_view, std::string_view>> posts;
    std::size_t words = 0;
    for (const MentionSample& s : samples) {
        if (!posts.emplace(s.text, s.image_id).second) continue;
        bool in_word = false;
        for (char c : s.text) {
            const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
            if (!space && !in_word) ++words;
            in_word = !space;
        }
    }
    stats.samples = posts.size();
    if (stats.samples) stats.mean_text_words = static_cast<double>(words) / static_cast<double>(stats.samples);

    std::size_t chars = 0;
    for (const EntityRecord& e : entities) chars += store::utf8_length(e.representation);
    if (stats.entities) {
        stats.mean_representation_chars = static_cast<double>(chars) / static_cast<double>(stats.entities);
    }
    return stats;
}

} // namespace dimel
