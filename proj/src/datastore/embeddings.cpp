#include "binary_io.hpp"
#include "dimel/datastore.hpp"

#include <cmath>

namespace dimel {

void EmbeddingTable::add(std::string id, std::span<const float> values) {
    if (values.size() != dim_) {
        throw DataError("embedding '" + id + "' has length " + std::to_string(values.size()) +
                        ", table dimension is " + std::to_string(dim_));
    }
    if (index_.contains(id)) throw DataError("duplicate embedding id '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), values.begin(), values.end());
}

void EmbeddingTable::add(std::string id, std::span<const double> values) {
    std::vector<float> narrowed(values.begin(), values.end());
    add(std::move(id), std::span<const float>(narrowed));
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return values(it->second);
}

std::vector<double> EmbeddingTable::vector(std::string_view id) const {
    auto found = find(id);
    if (!found) throw DataError("no embedding for id '" + std::string(id) + "'");
    return {found->begin(), found->end()};
}

nk::Tensor2 EmbeddingTable::sequence(std::string_view id) const {
    if (auto pooled = find(id)) {
        return nk::Tensor2(1, dim_, std::vector<double>(pooled->begin(), pooled->end()));
    }
    std::vector<double> rows;
    std::size_t count = 0;
    while (auto row = find(std::string(id) + "#" + std::to_string(count))) {
        rows.insert(rows.end(), row->begin(), row->end());
        ++count;
    }
    if (count == 0) throw DataError("no embedding or sequence for id '" + std::string(id) + "'");
    return nk::Tensor2(count, dim_, std::move(rows));
}

namespace store {

std::string encode_embeddings(const EmbeddingTable& table) {
    if (table.dim() == 0) throw FormatError("embedding dimension must be positive");
    detail::ByteWriter out;
    out.bytes(kEmbeddingMagic);
    out.u32(kEmbeddingVersion);
    out.u32(table.dim());
    out.u64(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        const std::string& id = table.id(i);
        if (id.size() > 0xFFFF) throw FormatError("embedding id longer than 65535 bytes");
        out.u16(static_cast<std::uint16_t>(id.size()));
        out.bytes(id);
        for (float v : table.values(i)) out.f32(v);
    }
    return out.take();
}

EmbeddingTable decode_embeddings(std::string_view bytes) {
    detail::ByteReader in(bytes, "embedding file");
    if (in.remaining() < kEmbeddingMagic.size() || in.bytes(kEmbeddingMagic.size()) != kEmbeddingMagic) {
        throw FormatError("embedding file has bad magic (expected DIMEMB01)");
    }
    const std::uint32_t version = in.u32();
    if (version != kEmbeddingVersion) {
        throw FormatError("unsupported embedding file version " + std::to_string(version));
    }
    const std::uint32_t dim = in.u32();
    if (dim == 0) throw FormatError("embedding file declares dimension 0");
    const std::uint64_t count = in.u64();
    EmbeddingTable table(dim);
    std::vector<float> row(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        const std::uint16_t len = in.u16();
        std::string id(in.bytes(len));
        in.need(std::size_t{4} * dim);
        for (float& v : row) {
            v = in.f32();
            if (!std::isfinite(v)) throw FormatError("non-finite value in embedding '" + id + "'");
        }
        if (table.contains(id)) throw FormatError("duplicate embedding id '" + id + "'");
        table.add(std::move(id), std::span<const float>(row));
    }
    if (in.remaining() != 0) {
        throw FormatError("embedding file has " + std::to_string(in.remaining()) +
                          " trailing bytes after " + std::to_string(count) + " records");
    }
    return table;
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    write_file_atomic(path, encode_embeddings(table));
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
    try {
        return decode_embeddings(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace store
} // namespace dimel
