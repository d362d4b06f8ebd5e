#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dimel/enhance.hpp"
#include "dimel/errors.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace dimel;
using namespace dimel::enhance;

namespace {

ProviderConfig fast_config(std::size_t retries = 3, std::size_t concurrency = 4) {
    ProviderConfig c;
    c.max_retries = retries;
    c.concurrency = concurrency;
    c.backoff_base = std::chrono::milliseconds(0);
    c.script = "unused";
    return c;
}

EntityRecord entity(const std::string& id, const std::string& name) {
    return {id, name, "About " + name, RepresentationSource::original};
}

} // namespace

TEST_CASE("prompt") {
    const Prompt p = build_prompt("Joe Biden");
    CHECK(p.system ==
          "You are a helpful assistant designed to give a comprehensive introduction about people. Who is this one?");
    CHECK(p.user == "Joe Biden");
    const Prompt q = build_prompt("Jill Biden");
    CHECK(q.system == p.system);
    CHECK(q.user != p.user);
    CHECK_THROWS_AS(build_prompt("  \t"), InputError);
    CHECK_THROWS_AS(build_prompt(""), InputError);
}

TEST_CASE("classification") {
    CHECK(classify_response("Sorry, I cannot provide an introduction to this entity.") == Category::refusal);
    CHECK(classify_response("John McDuffie is a fictional name, so there is no information.") == Category::fictional);
    CHECK(classify_response("It is possible that Edward J. Livernash was an economist.") == Category::needs_verification);
    CHECK(classify_response("John Abbott is a common English given name.") == Category::speculative);
    CHECK(classify_response("") == Category::empty);
    CHECK(classify_response(" \n\t") == Category::empty);
    CHECK(classify_response("Joe Biden is the 46th president of the United States.") == Category::enhanced);
    // first match wins
    CHECK(classify_response("Sorry, I cannot provide more; it is possible that this is a fictional name.") ==
          Category::refusal);
    CHECK(classify_response("It is possible that X is a fictional name.") == Category::fictional);
    CHECK(classify_response("It is possible that this is a common name.") == Category::needs_verification);
    // both phrases are needed
    CHECK(classify_response("She is a common sight at galas.") == Category::enhanced);

    Classifier extended;
    extended.load_rules("# extra refusals\nRefusal\tI'm unable to help\nSpeculative\tmay refer to\tname\n");
    CHECK(extended.classify("I'm unable to help with that.") == Category::refusal);
    CHECK(extended.classify("Smith may refer to a surname name list") == Category::speculative);
    CHECK(extended.classify("Sorry, I cannot provide it") == Category::refusal);
    CHECK_THROWS_AS(extended.load_rules("Refusal\n"), DataError);
    CHECK_THROWS_AS(extended.load_rules("Enhanced\tgreat\n"), ConfigError);
    CHECK_THROWS_AS(extended.load_rules("Nope\tx\n"), ConfigError);

    for (Category c : kAllCategories) CHECK(parse_category(to_string(c)) == c);
}

TEST_CASE("retries") {
    const std::vector<EntityRecord> entities{entity("A", "Alice"), entity("B", "Bob")};
    SUBCASE("failing max_retries times then succeeding yields the success") {
        MockProvider provider({{"A", {"Alice is a sculptor.", 3, false}}, {"B", {"Bob is a chef.", 0, false}}});
        const auto r = enhance_entities(entities, provider, fast_config(3));
        CHECK(r.outcomes[0].category == Category::enhanced);
        CHECK(r.outcomes[0].attempts == 4);
        CHECK(r.entities[0].representation == "Alice is a sculptor.");
        CHECK(r.outcomes[1].attempts == 1);
    }
    SUBCASE("one failure too many ends as Empty") {
        MockProvider provider({{"A", {"Alice is a sculptor.", 4, false}}, {"B", {"Bob is a chef.", 0, false}}});
        const auto r = enhance_entities(entities, provider, fast_config(3));
        CHECK(r.outcomes[0].category == Category::empty);
        CHECK(r.outcomes[0].attempts == 4);
        CHECK(r.outcomes[0].error.find("provider") != std::string::npos);
        CHECK(r.entities[0] == entities[0]);
        CHECK(r.report.count(Category::empty) == 1);
        CHECK(r.report.enhanced == 1);
    }
    SUBCASE("malformed replies are not retried") {
        MockProvider provider({{"A", {"x", 0, true}}, {"B", {"Bob is a chef.", 0, false}}});
        const auto r = enhance_entities(entities, provider, fast_config(3));
        CHECK(r.outcomes[0].category == Category::empty);
        CHECK(r.outcomes[0].attempts == 1);
        CHECK(r.outcomes[0].error.find("protocol") != std::string::npos);
    }
    SUBCASE("backoff waits between attempts") {
        MockProvider provider({{"A", {"Alice is a sculptor.", 2, false}}, {"B", {"Bob is a chef.", 0, false}}});
        auto config = fast_config(3);
        config.backoff_base = std::chrono::milliseconds(20);
        const auto start = std::chrono::steady_clock::now();
        enhance_entities(entities, provider, config);
        // 20 ms + 40 ms at least, jitter only adds
        CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(60));
    }
}

TEST_CASE("three-entity fallback fixture") {
    const std::vector<EntityRecord> entities{entity("E1", "Ada"), entity("E2", "Grace"), entity("E3", "Alan")};
    MockProvider provider(MockProvider::from_text(
        R"({"id":"E1","response":"Ada Lovelace was a mathematician."})" "\n"
        R"({"id":"E2","response":"Sorry, I cannot provide an introduction to this entity."})" "\n"
        R"({"id":"E3","response":"Alan Turing was a computer scientist."})" "\n"));
    const auto r = enhance_entities(entities, provider, fast_config());
    CHECK(r.entities[1] == entities[1]);
    CHECK(r.entities[1].representation_source == RepresentationSource::original);
    CHECK(r.entities[0].representation == "Ada Lovelace was a mathematician.");
    CHECK(r.entities[0].representation_source == RepresentationSource::enhanced);
    CHECK(r.entities[2].representation_source == RepresentationSource::enhanced);
    CHECK(r.report.total == 3);
    CHECK(r.report.enhanced == 2);
    CHECK(r.report.fallback == 1);
    CHECK(r.report.count(Category::refusal) == 1);
    CHECK(format_report(r.report) ==
          "total\t3\nEnhanced\t2\nEmpty\t0\nRefusal\t1\nSpeculative\t0\nNeedsVerification\t0\nFictional\t0\n"
          "enhanced\t2\nfallback\t1\n");
    const std::string audit = format_audit(r.outcomes);
    CHECK(audit.find("E2\tRefusal\t" + digest("Sorry, I cannot provide an introduction to this entity.") + "\n") !=
          std::string::npos);
}

TEST_CASE("all enhanced means no fallback") {
    std::vector<EntityRecord> entities;
    std::unordered_map<std::string, MockProvider::Entry> script;
    for (int i = 0; i < 50; ++i) {
        entities.push_back(entity("E" + std::to_string(i), "Name " + std::to_string(i)));
        script["E" + std::to_string(i)] = {"A full biography " + std::to_string(i), 0, false};
    }
    MockProvider provider(script);
    const auto r = enhance_entities(entities, provider, fast_config());
    CHECK(r.report.fallback == 0);
    CHECK(r.report.enhanced == 50);
}

TEST_CASE("category fixture is deterministic across concurrency levels") {
    const auto fx = fixtures::category_script(600, 13, 22, 46, 100, 60, 2);
    std::string reference;
    for (std::size_t workers : {1, 3, 8}) {
        MockProvider provider(MockProvider::from_text(fx.script));
        const auto r = enhance_entities(fx.entities, provider, fast_config(2, workers));
        for (std::size_t c = 0; c < fx.expected.size(); ++c) CHECK(r.report.counts[c] == fx.expected[c]);
        std::size_t sum = 0;
        for (auto n : r.report.counts) sum += n;
        CHECK(sum == r.report.total);
        for (std::size_t i = 0; i < fx.entities.size(); ++i)
            if (r.outcomes[i].category != Category::enhanced) CHECK(r.entities[i] == fx.entities[i]);
        const std::string text = format_report(r.report) + format_audit(r.outcomes) + format_responses(r.outcomes) +
                                 store::format_entities(r.entities);
        if (reference.empty()) reference = text;
        CHECK(text == reference);
    }
}

TEST_CASE("digest") {
    CHECK(digest("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(digest("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("mock script parsing") {
    CHECK_THROWS_AS(MockProvider::from_text("{\"response\":\"x\"}\n"), DataError);
    CHECK_THROWS_AS(MockProvider::from_text("{\"id\":\"a\"}\n{\"id\":\"a\"}\n"), DataError);
    CHECK_THROWS_AS(MockProvider::from_text("{\"id\":\"a\",\"fail_times\":-1}\n"), DataError);
    MockProvider p = MockProvider::from_text("{\"id\":\"a\",\"response\":\"hi\"}");
    CHECK(p.complete(build_prompt("x"), entity("a", "x")) == "hi");
    CHECK_THROWS_AS(p.complete(build_prompt("x"), entity("b", "x")), ProviderError);
}

TEST_CASE("provider config") {
    ProviderConfig c;
    c.kind = ProviderConfig::Kind::http;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.endpoint = "ftp://example";
    CHECK_THROWS_AS(HttpProvider{c}, ConfigError);
    c.kind = ProviderConfig::Kind::mock;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.script = "x";
    c.concurrency = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("http provider against a local server") {
    httplib::Server server;
    std::atomic<int> flaky_calls{0};
    std::string last_body, last_auth;
    std::mutex seen;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard lock(seen);
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
        }
        const auto body = nlohmann::json::parse(req.body);
        const std::string who = body["messages"][1]["content"];
        if (who == "Flaky" && ++flaky_calls == 1) {
            res.status = 503;
            return;
        }
        if (who == "Garbled") {
            res.set_content("{\"choices\":[]}", "application/json");
            return;
        }
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", who + " is a poet."}}}}});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread serve([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig config = fast_config(2, 2);
    config.kind = ProviderConfig::Kind::http;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.api_key = "secret";
    config.timeout = std::chrono::milliseconds(5000);
    HttpProvider provider(config);

    const std::vector<EntityRecord> entities{entity("E1", "Keats"), entity("E2", "Flaky"), entity("E3", "Garbled")};
    const auto r = enhance_entities(entities, provider, config);
    server.stop();
    serve.join();

    CHECK(r.outcomes[0].category == Category::enhanced);
    CHECK(r.entities[0].representation == "Keats is a poet.");
    CHECK(r.outcomes[1].category == Category::enhanced);
    CHECK(r.outcomes[2].category == Category::empty);
    CHECK(r.outcomes[2].error.find("protocol") != std::string::npos);
    CHECK(last_auth == "Bearer secret");
    const auto sent = nlohmann::json::parse(last_body);
    CHECK(sent["model"] == "gpt-3.5-turbo");
    CHECK(sent["messages"][0]["role"] == "system");
    CHECK(sent["messages"][0]["content"] == std::string(kSystemPrompt));
    CHECK(sent["messages"][1]["role"] == "user");

    // nothing listening any more
    const auto down = enhance_entities({entity("E9", "Nobody")}, provider, config);
    CHECK(down.outcomes[0].category == Category::empty);
    CHECK(down.outcomes[0].attempts == 3);
}
