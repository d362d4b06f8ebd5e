#include "binary_io.hpp"
#include "dimel/datastore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace dimel::store {

std::string encode_checkpoint(const fusion::AttentionParams& params) {
    params.validate();
    const auto tensors = params.named();  // sorted by name
    detail::ByteWriter out;
    out.bytes(kCheckpointMagic);
    out.u32(kCheckpointVersion);
    out.u32(static_cast<std::uint32_t>(params.dim));
    out.u64(tensors.size());
    for (const auto& [name, tensor] : tensors) {
        out.u16(static_cast<std::uint16_t>(name.size()));
        out.bytes(name);
        out.u32(2);
        out.u32(static_cast<std::uint32_t>(tensor->rows()));
        out.u32(static_cast<std::uint32_t>(tensor->cols()));
        for (double v : tensor->data()) out.f64(v);
    }
    return out.take();
}

fusion::AttentionParams decode_checkpoint(std::string_view bytes) {
    detail::ByteReader in(bytes, "checkpoint");
    if (in.remaining() < kCheckpointMagic.size() ||
        in.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
        throw FormatError("checkpoint has bad magic (expected DIMCKP01)");
    }
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t dim = in.u32();
    const std::uint64_t count = in.u64();
    std::map<std::string, nk::Tensor2> tensors;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(in.bytes(in.u16()));
        const std::uint32_t rank = in.u32();
        if (rank != 2) throw CheckpointError("tensor '" + name + "' has rank " + std::to_string(rank));
        const std::uint32_t rows = in.u32();
        const std::uint32_t cols = in.u32();
        in.need(std::size_t{8} * rows * cols);
        std::vector<double> data(std::size_t{rows} * cols);
        for (double& v : data) {
            v = in.f64();
            if (!std::isfinite(v)) throw CheckpointError("tensor '" + name + "' has non-finite values");
        }
        if (!tensors.emplace(name, nk::Tensor2(rows, cols, std::move(data))).second) {
            throw CheckpointError("duplicate tensor '" + name + "'");
        }
    }
    if (in.remaining() != 0) {
        throw FormatError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
    }

    // Head count is one past the largest "<branch>.head<N>." index present.
    std::size_t heads = 1;
    for (const auto& [name, tensor] : tensors) {
        const auto at = name.find(".head");
        if (at == std::string::npos) continue;
        std::size_t index = 0;
        const char* first = name.data() + at + 5;
        const char* last = name.data() + name.size();
        auto [ptr, ec] = std::from_chars(first, last, index);
        if (ec == std::errc() && ptr != first && ptr != last && *ptr == '.') heads = std::max(heads, index + 1);
    }

    fusion::AttentionParams params;
    params.dim = dim;
    params.heads = heads;
    auto take = [&](const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
        nk::Tensor2 t = std::move(it->second);
        tensors.erase(it);
        return t;
    };
    for (auto [branch, label] : {std::pair{&params.text, "text"}, std::pair{&params.image, "image"}}) {
        for (std::size_t h = 0; h < heads; ++h) {
            const std::string prefix = std::string(label) + ".head" + std::to_string(h) + ".";
            fusion::HeadWeights w;
            w.query = take(prefix + "query");
            w.key = take(prefix + "key");
            w.value = take(prefix + "value");
            branch->heads.push_back(std::move(w));
        }
    }
    if (tensors.contains("mention.projection")) params.mention_projection = take("mention.projection");
    if (!tensors.empty()) throw CheckpointError("unexpected tensor '" + tensors.begin()->first + "'");
    params.validate();
    return params;
}

void save_checkpoint(const fusion::AttentionParams& params, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(params));
}

fusion::AttentionParams load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

fusion::AttentionParams load_checkpoint(const std::filesystem::path& path, std::size_t d,
                                        std::size_t h) {
    fusion::AttentionParams params = load_checkpoint(path);
    if (params.dim != d || params.heads != h) {
        throw DimensionError("checkpoint '" + path.string() + "' holds d=" +
                             std::to_string(params.dim) + ", h=" + std::to_string(params.heads) +
                             "; expected d=" + std::to_string(d) + ", h=" + std::to_string(h));
    }
    return params;
}

} // namespace dimel::store
