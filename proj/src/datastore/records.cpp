#include "dimel/datastore.hpp"
#include "dimel/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>
#include <unordered_set>

namespace dimel {

using Json = nlohmann::ordered_json;

std::string to_string(RepresentationSource source) {
    return source == RepresentationSource::original ? "original" : "enhanced";
}

namespace store {

namespace {

/// Calls fn(object, line_number) for every line; rejects blank lines and
/// anything that is not a flat JSON object.
template <typename Fn>
void for_each_record(std::string_view text, const char* what, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) throw DataError(std::string("blank line in ") + what + " file", line_no);
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DataError(std::string("malformed ") + what + " record: " + e.what(), line_no);
        }
        if (!obj.is_object()) throw DataError(std::string(what) + " record is not an object", line_no);
        fn(obj, line_no);
    }
}

void expect_keys(const Json& obj, std::initializer_list<const char*> keys, std::size_t line,
                 const char* what) {
    for (const char* key : keys) {
        if (!obj.contains(key)) {
            throw DataError(std::string(what) + " record is missing field '" + key + "'", line);
        }
    }
    if (obj.size() != keys.size()) {
        for (const auto& [key, _] : obj.items()) {
            if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
                keys.end()) {
                throw DataError(std::string(what) + " record has unknown field '" + key + "'", line);
            }
        }
    }
}

std::string string_field(const Json& obj, const char* key, std::size_t line) {
    const Json& v = obj.at(key);
    if (!v.is_string()) throw DataError(std::string("field '") + key + "' must be a string", line);
    return v.get<std::string>();
}

std::string dump_line(const Json& obj) { return obj.dump(-1, ' ', false) + "\n"; }

} // namespace

std::vector<MentionSample> parse_samples(std::string_view text) {
    std::vector<MentionSample> out;
    std::unordered_set<std::string> seen;
    for_each_record(text, "sample", [&](const Json& obj, std::size_t line) {
        expect_keys(obj, {"id", "text", "mention", "image_id", "expert_c1", "expert_c2", "gold_entity_id"},
                    line, "sample");
        MentionSample s{string_field(obj, "id", line),        string_field(obj, "text", line),
                        string_field(obj, "mention", line),   string_field(obj, "image_id", line),
                        string_field(obj, "expert_c1", line), string_field(obj, "expert_c2", line),
                        string_field(obj, "gold_entity_id", line)};
        if (s.id.empty()) throw DataError("sample id is empty", line);
        if (!seen.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'", line);
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<EntityRecord> parse_entities(std::string_view text) {
    std::vector<EntityRecord> out;
    std::unordered_set<std::string> seen;
    for_each_record(text, "entity", [&](const Json& obj, std::size_t line) {
        expect_keys(obj, {"id", "name", "representation", "representation_source"}, line, "entity");
        EntityRecord e;
        e.id = string_field(obj, "id", line);
        e.name = string_field(obj, "name", line);
        e.representation = string_field(obj, "representation", line);
        const std::string source = string_field(obj, "representation_source", line);
        if (source == "original") e.representation_source = RepresentationSource::original;
        else if (source == "enhanced") e.representation_source = RepresentationSource::enhanced;
        else throw DataError("unknown representation_source '" + source + "'", line);
        if (e.id.empty()) throw DataError("entity id is empty", line);
        if (e.representation.empty()) throw DataError("entity '" + e.id + "' has an empty representation", line);
        if (!seen.insert(e.id).second) throw DataError("duplicate entity id '" + e.id + "'", line);
        out.push_back(std::move(e));
    });
    return out;
}

std::vector<candgen::CandidateSet> parse_candidates(std::string_view text) {
    std::vector<candgen::CandidateSet> out;
    std::unordered_set<std::string> seen;
    for_each_record(text, "candidate", [&](const Json& obj, std::size_t line) {
        expect_keys(obj, {"mention_id", "entity_ids", "scores", "gold_included"}, line, "candidate");
        candgen::CandidateSet set;
        set.mention_id = string_field(obj, "mention_id", line);
        const Json& ids = obj.at("entity_ids");
        const Json& scores = obj.at("scores");
        if (!ids.is_array() || !scores.is_array()) {
            throw DataError("entity_ids and scores must be arrays", line);
        }
        if (!obj.at("gold_included").is_boolean()) throw DataError("gold_included must be a boolean", line);
        set.gold_included = obj.at("gold_included").get<bool>();
        if (ids.size() != scores.size()) throw DataError("entity_ids and scores differ in length", line);
        std::set<std::string> unique;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!ids[i].is_string() || !scores[i].is_number()) {
                throw DataError("candidate entry " + std::to_string(i) + " has the wrong type", line);
            }
            set.entity_ids.push_back(ids[i].get<std::string>());
            set.scores.push_back(scores[i].get<double>());
            const double s = set.scores.back();
            if (!(s >= 0.0 && s <= 1.0)) throw DataError("candidate score outside [0, 1]", line);
            if (i > 0 && s > set.scores[i - 1]) throw DataError("candidate scores are not non-increasing", line);
            if (!unique.insert(set.entity_ids.back()).second) {
                throw DataError("duplicate candidate entity '" + set.entity_ids.back() + "'", line);
            }
        }
        if (!seen.insert(set.mention_id).second) {
            throw DataError("duplicate candidate set for mention '" + set.mention_id + "'", line);
        }
        out.push_back(std::move(set));
    });
    return out;
}

std::string format_samples(const std::vector<MentionSample>& samples) {
    std::string out;
    for (const MentionSample& s : samples) {
        Json obj;
        obj["id"] = s.id;
        obj["text"] = s.text;
        obj["mention"] = s.mention;
        obj["image_id"] = s.image_id;
        obj["expert_c1"] = s.expert_c1;
        obj["expert_c2"] = s.expert_c2;
        obj["gold_entity_id"] = s.gold_entity_id;
        out += dump_line(obj);
    }
    return out;
}

std::string format_entities(const std::vector<EntityRecord>& entities) {
    std::string out;
    for (const EntityRecord& e : entities) {
        Json obj;
        obj["id"] = e.id;
        obj["name"] = e.name;
        obj["representation"] = e.representation;
        obj["representation_source"] = to_string(e.representation_source);
        out += dump_line(obj);
    }
    return out;
}

std::string format_candidates(const std::vector<candgen::CandidateSet>& sets) {
    std::string out;
    for (const candgen::CandidateSet& set : sets) {
        Json obj;
        obj["mention_id"] = set.mention_id;
        obj["entity_ids"] = set.entity_ids;
        obj["scores"] = set.scores;
        obj["gold_included"] = set.gold_included;
        out += dump_line(obj);
    }
    return out;
}

std::vector<MentionSample> read_samples(const std::filesystem::path& path) {
    try {
        return parse_samples(read_file(path));
    } catch (const DataError& e) {
        throw e.prefixed(path.string() + ": ");
    }
}

std::vector<EntityRecord> read_entities(const std::filesystem::path& path) {
    try {
        return parse_entities(read_file(path));
    } catch (const DataError& e) {
        throw e.prefixed(path.string() + ": ");
    }
}

std::vector<candgen::CandidateSet> read_candidates(const std::filesystem::path& path) {
    try {
        return parse_candidates(read_file(path));
    } catch (const DataError& e) {
        throw e.prefixed(path.string() + ": ");
    }
}

void write_samples(const std::vector<MentionSample>& samples, const std::filesystem::path& path) {
    write_file_atomic(path, format_samples(samples));
}

void write_entities(const std::vector<EntityRecord>& entities, const std::filesystem::path& path) {
    write_file_atomic(path, format_entities(entities));
}

void write_candidates(const std::vector<candgen::CandidateSet>& sets,
                      const std::filesystem::path& path) {
    write_file_atomic(path, format_candidates(sets));
}

void validate_references(const std::vector<MentionSample>& samples,
                         const std::vector<EntityRecord>& entities) {
    std::unordered_set<std::string> ids;
    for (const EntityRecord& e : entities) ids.insert(e.id);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!ids.contains(samples[i].gold_entity_id)) {
            throw ReferenceError("sample '" + samples[i].id + "' (line " + std::to_string(i + 1) +
                                 ") references unknown entity '" + samples[i].gold_entity_id + "'");
        }
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::size_t utf8_length(std::string_view text) {
    std::size_t n = 0;
    for (char c : text) n += (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    return n;
}

std::string truncate_utf8(std::string_view text, std::size_t max_chars) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
            if (chars == max_chars) return std::string(text.substr(0, i));
            ++chars;
        }
    }
    return std::string(text);
}

} // namespace store
} // namespace dimel
