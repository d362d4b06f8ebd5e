#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dimel/cli.hpp"
#include "dimel/datastore.hpp"
#include "support.hpp"

#include <cstdlib>
#include <sstream>

using testsupport::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    args.insert(args.begin(), "dimel");
    std::ostringstream out, err;
    const int code = dimel::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) { return dimel::store::read_file(p); }

void small_mock(const std::filesystem::path& dir, const std::string& seed = "3") {
    const auto r = cli({"mockgen", "--seed", seed, "--samples", "40", "--entities", "80", "--dim", "16", "--heads",
                        "2", "--out", dir.string()});
    REQUIRE(r.code == 0);
}

} // namespace

TEST_CASE("mockgen is reproducible") {
    TempDir tmp;
    small_mock(tmp / "a");
    small_mock(tmp / "b");
    small_mock(tmp / "c", "4");
    for (const char* f : {"samples.jsonl", "entities.jsonl", "text.emb", "image.emb", "expert.emb", "entity.emb"}) {
        CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
    }
    CHECK(slurp(tmp / "a" / "entity.emb") != slurp(tmp / "c" / "entity.emb"));
}

TEST_CASE("usage errors exit with 2") {
    auto r = cli({"eval", "--data", "x", "--checkpoint", "y"});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error kind=usage", 0) == 0);
    CHECK(r.err.find("--candidates") != std::string::npos);

    r = cli({"mockgen", "--out", "x", "--bogus"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--bogus") != std::string::npos);

    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"stats"}).code == 2);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("data errors exit with 1 and one error line") {
    TempDir tmp;
    small_mock(tmp / "d");
    {
        std::ofstream f(tmp / "d" / "samples.jsonl", std::ios::app);
        f << "{not json}\n";
    }
    const auto r = cli({"candgen", "--data", (tmp / "d").string(), "--out", (tmp / "c.jsonl").string()});
    CHECK(r.code == 1);
    const auto line = r.err.substr(r.err.find("error kind="));
    CHECK(line.rfind("error kind=data", 0) == 0);
    CHECK(line.find("line 41") != std::string::npos);
    CHECK(std::count(line.begin(), line.end(), '\n') == 1);

    const auto missing = cli({"stats", "--data", (tmp / "nowhere").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error kind=io") != std::string::npos);

    const auto bad_config = cli({"candgen", "--data", (tmp / "d").string(), "--out", (tmp / "c.jsonl").string(),
                                 "--set", "heads=3"});
    CHECK(bad_config.code == 1);
    CHECK(bad_config.err.find("error kind=config") != std::string::npos);
}

TEST_CASE("config precedence on the command line") {
    TempDir tmp;
    small_mock(tmp / "d");
    {
        std::ofstream f(tmp / "run.cfg");
        f << "candidate_k=7\nseed=11\n";
    }
    ::setenv("DIMEL_CANDIDATE_K", "5", 1);
    ::setenv("DIMEL_SEED", "9", 1);
    ::setenv("DIMEL_EPOCHS", "13", 1);
    const auto r = cli({"candgen", "--data", (tmp / "d").string(), "--out", (tmp / "c.jsonl").string(), "--config",
                        (tmp / "run.cfg").string(), "--k", "6"});
    ::unsetenv("DIMEL_CANDIDATE_K");
    ::unsetenv("DIMEL_SEED");
    ::unsetenv("DIMEL_EPOCHS");
    REQUIRE(r.code == 0);
    CHECK(r.err.find("config candidate_k=6\n") != std::string::npos);
    CHECK(r.err.find("config seed=11\n") != std::string::npos);
    CHECK(r.err.find("config epochs=13\n") != std::string::npos);
    const auto sets = dimel::store::read_candidates(tmp / "c.jsonl");
    CHECK(sets.size() == 40);
    for (const auto& s : sets) CHECK(s.entity_ids.size() == 6);
}

TEST_CASE("candgen, train and eval end to end") {
    TempDir tmp;
    small_mock(tmp / "d");
    const std::string data = (tmp / "d").string();
    const std::string cands = (tmp / "c.jsonl").string();
    auto r = cli({"candgen", "--data", data, "--k", "20", "--out", cands, "--workers", "3"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("gold included in 40") != std::string::npos);

    r = cli({"train", "--data", data, "--candidates", cands, "--out", (tmp / "run").string(), "--hidden-dim", "16",
             "--heads", "2", "--epochs", "4", "--batch-size", "8", "--init", "identity"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("trained 4 epochs") != std::string::npos);
    const std::string curve = slurp(tmp / "run" / "loss_curve.tsv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 4);
    CHECK(curve.rfind("1\t", 0) == 0);
    CHECK(slurp(tmp / "run" / "config.txt").find("epochs=4\n") != std::string::npos);
    CHECK(std::filesystem::exists(tmp / "run" / "checkpoint.best.ckpt"));

    r = cli({"eval", "--data", data, "--candidates", cands, "--checkpoint",
             (tmp / "run" / "checkpoint.final.ckpt").string(), "--dataset-name", "mock", "--dump-ranks"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("dataset\tmock\nks\t1,5,10,20\nsamples\t40\nT@1\t", 0) == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 3 + 4 + 40);

    r = cli({"eval", "--data", data, "--candidates", cands, "--checkpoint",
             (tmp / "run" / "checkpoint.final.ckpt").string(), "--ks", "5,1"});
    CHECK(r.code == 1);
    CHECK(r.err.find("error kind=config") != std::string::npos);

    // checkpoint trained for a different width
    r = cli({"mockgen", "--dim", "8", "--heads", "2", "--samples", "5", "--entities", "10", "--out",
             (tmp / "narrow").string()});
    REQUIRE(r.code == 0);
    r = cli({"eval", "--data", (tmp / "narrow").string(), "--candidates", cands, "--checkpoint",
             (tmp / "run" / "checkpoint.final.ckpt").string()});
    CHECK(r.code == 1);
}

TEST_CASE("stats") {
    TempDir tmp;
    small_mock(tmp / "d");
    const auto r = cli({"stats", "--data", (tmp / "d").string()});
    REQUIRE(r.code == 0);
    const auto s = dimel::compute_stats(dimel::store::read_samples(tmp / "d" / "samples.jsonl"),
                                        dimel::store::read_entities(tmp / "d" / "entities.jsonl"));
    CHECK(r.out.find("entities\t80\n") != std::string::npos);
    CHECK(r.out.find("mentions\t40\n") != std::string::npos);
    CHECK(r.out.find("samples\t" + std::to_string(s.samples) + "\n") == 0);
}

TEST_CASE("enhance with a scripted provider") {
    TempDir tmp;
    const std::vector<dimel::EntityRecord> entities{
        {"E1", "Ada", "Ada.", dimel::RepresentationSource::original},
        {"E2", "Grace", "Grace.", dimel::RepresentationSource::original}};
    dimel::store::write_entities(entities, tmp / "entities.jsonl");
    {
        std::ofstream f(tmp / "script.jsonl");
        f << R"({"id":"E1","response":"Ada Lovelace was a mathematician."})" << "\n"
          << R"({"id":"E2","response":"Sorry, I cannot provide an introduction to this entity."})" << "\n";
    }
    const auto r = cli({"enhance", "--entities", (tmp / "entities.jsonl").string(), "--script",
                        (tmp / "script.jsonl").string(), "--out", (tmp / "out.jsonl").string(), "--backoff-ms", "0",
                        "--report", (tmp / "report.tsv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == slurp(tmp / "report.tsv"));
    CHECK(r.out.find("Refusal\t1\n") != std::string::npos);
    const auto updated = dimel::store::read_entities(tmp / "out.jsonl");
    CHECK(updated[0].representation == "Ada Lovelace was a mathematician.");
    CHECK(updated[1] == entities[1]);
    const std::string audit = slurp(tmp / "out.jsonl.audit.tsv");
    CHECK(audit.rfind("E1\tEnhanced\t", 0) == 0);
    CHECK(std::filesystem::exists(tmp / "out.jsonl.responses.jsonl"));

    const auto no_script = cli({"enhance", "--entities", (tmp / "entities.jsonl").string(), "--out",
                                (tmp / "o2.jsonl").string()});
    CHECK(no_script.code != 0);
    CHECK(no_script.err.find("error kind=") != std::string::npos);
}
