#include "dimel/enhance.hpp"

#include "dimel/errors.hpp"
#include "dimel/numkernel/random.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <thread>

namespace dimel::enhance {

using Json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, kAllCategories.size()> kCategoryNames{
    "Enhanced", "Empty", "Refusal", "Speculative", "NeedsVerification", "Fictional"};

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

int precedence(Category c) {
    switch (c) {
    case Category::refusal: return 0;
    case Category::fictional: return 1;
    case Category::needs_verification: return 2;
    case Category::speculative: return 3;
    default: return 4;
    }
}

} // namespace

std::string to_string(Category category) {
    return std::string(kCategoryNames[static_cast<std::size_t>(category)]);
}

Category parse_category(std::string_view text) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
        if (kCategoryNames[i] == text) return kAllCategories[i];
    throw ConfigError("unknown enhancement category '" + std::string(text) + "'");
}

Prompt build_prompt(std::string_view entity_name) {
    if (is_blank(entity_name)) throw InputError("entity name is empty");
    return Prompt{std::string(kSystemPrompt), std::string(entity_name)};
}

Classifier::Classifier() {
    add_rule(Category::refusal, {"Sorry, I cannot provide"});
    add_rule(Category::fictional, {"is a fictional name"});
    add_rule(Category::needs_verification, {"It is possible that"});
    add_rule(Category::speculative, {"is a common", "name"});
}

void Classifier::add_rule(Category category, std::vector<std::string> all_of) {
    if (category == Category::enhanced || category == Category::empty) {
        throw ConfigError("patterns cannot target category " + to_string(category));
    }
    if (all_of.empty()) throw ConfigError("pattern rule has no phrases");
    for (std::string& p : all_of) p = lower_ascii(p);
    Rule rule{category, std::move(all_of)};
    auto pos = std::upper_bound(rules_.begin(), rules_.end(), rule, [](const Rule& a, const Rule& b) {
        return precedence(a.category) < precedence(b.category);
    });
    rules_.insert(pos, std::move(rule));
}

void Classifier::load_rules(std::string_view text) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.emplace_back(line.substr(start, tab - start));
            if (tab == std::string_view::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2) throw DataError("pattern line needs a category and a phrase", line_no);
        const Category category = parse_category(fields[0]);
        fields.erase(fields.begin());
        add_rule(category, std::move(fields));
    }
}

Category Classifier::classify(std::string_view response) const {
    if (is_blank(response)) return Category::empty;
    const std::string haystack = lower_ascii(response);
    for (const Rule& rule : rules_) {
        const bool all = std::all_of(rule.all_of.begin(), rule.all_of.end(), [&](const std::string& p) {
            return haystack.find(p) != std::string::npos;
        });
        if (all) return rule.category;
    }
    return Category::enhanced;
}

Category classify_response(std::string_view response) {
    static const Classifier classifier;
    return classifier.classify(response);
}

// ---- mock provider --------------------------------------------------------------

MockProvider::MockProvider(std::unordered_map<std::string, Entry> script) : script_(std::move(script)) {}

MockProvider MockProvider::from_text(std::string_view text) {
    std::unordered_map<std::string, Entry> script;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) throw DataError("blank line in provider script", line_no);
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DataError(std::string("malformed provider script line: ") + e.what(), line_no);
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string()) {
            throw DataError("provider script line needs a string 'id'", line_no);
        }
        Entry entry;
        if (obj.contains("response")) {
            if (!obj["response"].is_string()) throw DataError("'response' must be a string", line_no);
            entry.response = obj["response"].get<std::string>();
        }
        if (obj.contains("fail_times")) {
            if (!obj["fail_times"].is_number_unsigned()) throw DataError("'fail_times' must be a count", line_no);
            entry.fail_times = obj["fail_times"].get<std::size_t>();
        }
        if (obj.contains("malformed")) {
            if (!obj["malformed"].is_boolean()) throw DataError("'malformed' must be a boolean", line_no);
            entry.malformed = obj["malformed"].get<bool>();
        }
        const std::string id = obj["id"].get<std::string>();
        if (!script.emplace(id, std::move(entry)).second) {
            throw DataError("duplicate provider script id '" + id + "'", line_no);
        }
    }
    return MockProvider(std::move(script));
}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
    try {
        return from_text(store::read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string MockProvider::complete(const Prompt&, const EntityRecord& entity) {
    auto it = script_.find(entity.id);
    if (it == script_.end()) throw ProviderError("no scripted response for entity '" + entity.id + "'");
    {
        std::lock_guard lock(*mutex_);
        std::size_t& failed = failures_[entity.id];
        if (failed < it->second.fail_times) {
            ++failed;
            throw ProviderError("scripted failure " + std::to_string(failed) + " for '" + entity.id + "'");
        }
    }
    if (it->second.malformed) throw ProtocolError("malformed reply for entity '" + entity.id + "'");
    return it->second.response;
}

// ---- http provider --------------------------------------------------------------

void ProviderConfig::validate() const {
    if (kind == Kind::http && endpoint.empty()) throw ConfigError("http provider requires an endpoint");
    if (kind == Kind::mock && script.empty()) throw ConfigError("mock provider requires a script file");
    if (concurrency == 0) throw ConfigError("provider concurrency must be at least 1");
    if (!(backoff_factor >= 1.0)) throw ConfigError("backoff factor must be at least 1");
}

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
    const std::string& url = config_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw ConfigError("this build has no TLS support; use an http endpoint");
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpProvider::complete(const Prompt& prompt, const EntityRecord&) {
    Json body;
    body["model"] = config_.model;
    body["messages"] = Json::array({Json{{"role", "system"}, {"content", prompt.system}},
                                    Json{{"role", "user"}, {"content", prompt.user}}});
    httplib::Client client(origin_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw ProviderError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ProviderError("endpoint returned HTTP " + std::to_string(res->status));
    Json reply;
    try {
        reply = Json::parse(res->body);
    } catch (const Json::parse_error&) {
        throw ProtocolError("reply is not JSON");
    }
    if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty()) {
        throw ProtocolError("reply has no choices");
    }
    const Json& choice = reply["choices"][0];
    if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object() ||
        !choice["message"].contains("content") || !choice["message"]["content"].is_string()) {
        throw ProtocolError("reply choice has no text content");
    }
    return choice["message"]["content"].get<std::string>();
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config) {
    config.validate();
    if (config.kind == ProviderConfig::Kind::http) return std::make_unique<HttpProvider>(config);
    return std::make_unique<MockProvider>(MockProvider::from_file(config.script));
}

// ---- pipeline -------------------------------------------------------------------

namespace {

EntityOutcome query_one(const EntityRecord& entity, std::size_t index, Provider& provider,
                        const ProviderConfig& config, const Classifier& classifier) {
    EntityOutcome outcome;
    outcome.entity_id = entity.id;
    Prompt prompt;
    try {
        prompt = build_prompt(entity.name);
    } catch (const InputError& e) {
        outcome.error = e.what();
        outcome.category = Category::empty;
        return outcome;
    }
    nk::CounterRng jitter(index, 0x6a6974);
    for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
        ++outcome.attempts;
        try {
            outcome.response = provider.complete(prompt, entity);
            outcome.category = classifier.classify(outcome.response);
            outcome.error.clear();
            return outcome;
        } catch (const ProtocolError& e) {
            outcome.error = std::string("protocol: ") + e.what();
            outcome.category = Category::empty;
            return outcome;
        } catch (const ProviderError& e) {
            outcome.error = std::string("provider: ") + e.what();
        }
        if (attempt < config.max_retries && config.backoff_base.count() > 0) {
            const double delay = static_cast<double>(config.backoff_base.count()) *
                                 std::pow(config.backoff_factor, static_cast<double>(attempt)) *
                                 (1.0 + 0.5 * jitter.uniform());
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(delay)));
        }
    }
    outcome.category = Category::empty;
    return outcome;
}

} // namespace

EnhancementResult enhance_entities(const std::vector<EntityRecord>& entities, Provider& provider,
                                   const ProviderConfig& config, const Classifier& classifier) {
    if (config.concurrency == 0) throw ConfigError("provider concurrency must be at least 1");
    std::vector<EntityOutcome> outcomes(entities.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < entities.size(); i = next++) {
            outcomes[i] = query_one(entities[i], i, provider, config, classifier);
        }
    };
    {
        const std::size_t n = std::min(config.concurrency, std::max<std::size_t>(entities.size(), 1));
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
        worker();
    }

    // Single collector pass, in input order.
    EnhancementResult result;
    result.entities = entities;
    result.report.total = entities.size();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        const EntityOutcome& o = outcomes[i];
        ++result.report.counts[static_cast<std::size_t>(o.category)];
        if (o.category == Category::enhanced) {
            result.entities[i].representation = o.response;
            result.entities[i].representation_source = RepresentationSource::enhanced;
            ++result.report.enhanced;
        }
    }
    result.report.fallback = result.report.total - result.report.enhanced;
    result.outcomes = std::move(outcomes);
    return result;
}

std::string digest(std::string_view text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("internal", "SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

std::string format_report(const EnhancementReport& report) {
    std::string out;
    out += "total\t" + std::to_string(report.total) + "\n";
    for (Category c : kAllCategories) out += to_string(c) + "\t" + std::to_string(report.count(c)) + "\n";
    out += "enhanced\t" + std::to_string(report.enhanced) + "\n";
    out += "fallback\t" + std::to_string(report.fallback) + "\n";
    return out;
}

std::string format_audit(const std::vector<EntityOutcome>& outcomes) {
    std::string out;
    for (const EntityOutcome& o : outcomes)
        out += o.entity_id + "\t" + to_string(o.category) + "\t" + digest(o.response) + "\n";
    return out;
}

std::string format_responses(const std::vector<EntityOutcome>& outcomes) {
    std::string out;
    for (const EntityOutcome& o : outcomes) {
        Json obj;
        obj["id"] = o.entity_id;
        obj["category"] = to_string(o.category);
        obj["attempts"] = o.attempts;
        obj["response"] = o.response;
        if (!o.error.empty()) obj["error"] = o.error;
        out += obj.dump(-1, ' ', false, Json::error_handler_t::replace) + "\n";
    }
    return out;
}

} // namespace dimel::enhance
