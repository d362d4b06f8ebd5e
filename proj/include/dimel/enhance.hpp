#pragma once

#include "dimel/datastore.hpp"

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dimel::enhance {

enum class Category { enhanced, empty, refusal, speculative, needs_verification, fictional };

inline constexpr std::array kAllCategories{Category::enhanced,    Category::empty,
                                           Category::refusal,     Category::speculative,
                                           Category::needs_verification, Category::fictional};

std::string to_string(Category category);
Category parse_category(std::string_view text);

inline constexpr std::string_view kSystemPrompt =
    "You are a helpful assistant designed to give a comprehensive introduction about people. "
    "Who is this one?";

struct Prompt {
    std::string system;
    std::string user;

    friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// System text is the fixed instruction; user text is the entity name.
/// Throws InputError for an empty or whitespace-only name.
Prompt build_prompt(std::string_view entity_name);

/// Keyword cascade mapping a response to a category. Rules are checked in
/// category precedence (refusal, fictional, needs_verification, speculative);
/// a rule matches when every one of its phrases occurs (ASCII case-insensitive).
/// Blank responses are always `empty`; anything unmatched is `enhanced`.
class Classifier {
public:
    Classifier();

    void add_rule(Category category, std::vector<std::string> all_of);
    /// Lines of "category<TAB>phrase[<TAB>phrase...]"; '#' starts a comment.
    void load_rules(std::string_view text);

    Category classify(std::string_view response) const;

private:
    struct Rule {
        Category category;
        std::vector<std::string> all_of;
    };
    std::vector<Rule> rules_;
};

Category classify_response(std::string_view response);

/// A chat-completion backend. complete() throws ProviderError for failures
/// worth retrying and ProtocolError for replies that cannot be understood.
class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string complete(const Prompt& prompt, const EntityRecord& entity) = 0;
};

/// Replays scripted responses by entity id. Entries may fail a fixed number
/// of times before answering, or answer with an unparseable reply.
class MockProvider : public Provider {
public:
    struct Entry {
        std::string response;
        std::size_t fail_times = 0;
        bool malformed = false;
    };

    explicit MockProvider(std::unordered_map<std::string, Entry> script);
    /// JSON lines: {"id": ..., "response": ..., "fail_times": n?, "malformed": bool?}
    static MockProvider from_text(std::string_view text);
    static MockProvider from_file(const std::filesystem::path& path);

    std::string complete(const Prompt& prompt, const EntityRecord& entity) override;

private:
    std::unordered_map<std::string, Entry> script_;
    std::unordered_map<std::string, std::size_t> failures_;
    std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
};

struct ProviderConfig {
    enum class Kind { mock, http };

    Kind kind = Kind::mock;
    std::string endpoint;                ///< full URL of the chat-completions route
    std::string model = "gpt-3.5-turbo";
    std::string api_key;                 ///< sent as a bearer token when non-empty
    std::size_t max_retries = 3;
    std::size_t concurrency = 4;
    std::chrono::milliseconds timeout{30000};
    std::chrono::milliseconds backoff_base{1000};
    double backoff_factor = 2.0;
    std::filesystem::path script;        ///< mock only

    void validate() const;
};

/// Speaks the minimal chat-completion shape: system + user messages in,
/// choices[0].message.content out.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderConfig config);
    std::string complete(const Prompt& prompt, const EntityRecord& entity) override;

private:
    ProviderConfig config_;
    std::string origin_;
    std::string path_;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& config);

struct EnhancementReport {
    std::array<std::size_t, kAllCategories.size()> counts{};
    std::size_t total = 0;
    std::size_t enhanced = 0;
    std::size_t fallback = 0;

    std::size_t count(Category c) const { return counts[static_cast<std::size_t>(c)]; }
};

struct EntityOutcome {
    std::string entity_id;
    Category category = Category::empty;
    std::string response;
    std::size_t attempts = 0;
    std::string error;  ///< last provider/protocol error, if any
};

struct EnhancementResult {
    std::vector<EntityRecord> entities;
    EnhancementReport report;
    std::vector<EntityOutcome> outcomes;  ///< same order as the input entities
};

/// Queries the provider for every entity with bounded concurrency and
/// exponential backoff. Enhanced responses replace the representation; every
/// other category keeps the original record untouched.
EnhancementResult enhance_entities(const std::vector<EntityRecord>& entities, Provider& provider,
                                   const ProviderConfig& config,
                                   const Classifier& classifier = Classifier());

/// Hex SHA-256.
std::string digest(std::string_view text);

std::string format_report(const EnhancementReport& report);
/// One "id<TAB>category<TAB>sha256" line per entity.
std::string format_audit(const std::vector<EntityOutcome>& outcomes);
/// JSON lines with the raw responses.
std::string format_responses(const std::vector<EntityOutcome>& outcomes);

} // namespace dimel::enhance
