#include "dimel/cli.hpp"

#include "dimel/candgen.hpp"
#include "dimel/config.hpp"
#include "dimel/datastore.hpp"
#include "dimel/enhance.hpp"
#include "dimel/errors.hpp"
#include "dimel/numkernel/parallel.hpp"
#include "dimel/rankeval.hpp"
#include "dimel/train.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

namespace dimel::cli {

namespace fs = std::filesystem;

namespace {

std::string quoted(std::string_view text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else out.push_back(c);
    }
    return out + "\"";
}

std::string error_line(std::string_view kind, std::string_view message) {
    return "error kind=" + std::string(kind) + " message=" + quoted(message) + "\n";
}

std::string number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

/// Config overrides gathered from flags, keyed by RunConfig field name.
struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;
    std::vector<std::string> assignments;  // --set key=value

    void attach(CLI::App* sub, std::initializer_list<std::pair<const char*, const char*>> options) {
        sub->add_option("--config", file, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("--set", assignments, "override any config key (key=value), repeatable");
        for (const auto& [flag, key] : options) {
            std::string k = key;
            sub->add_option_function<std::string>(
                flag, [this, k](const std::string& v) { values[k] = v; }, "sets " + k);
        }
    }

    RunConfig resolve() const {
        RunConfig config;
        config.apply_environment();
        if (!file.empty()) config.apply_text(store::read_file(file));
        for (const auto& [key, value] : values) config.set(key, value);
        for (const std::string& a : assignments) {
            const auto eq = a.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + a + "'");
            config.set(a.substr(0, eq), a.substr(eq + 1));
        }
        config.validate();
        return config;
    }
};

void log_config(std::ostream& err, const RunConfig& config) {
    for (const auto& [k, v] : config.entries()) err << "config " << k << "=" << v << "\n";
}

struct DataPaths {
    std::string dir;
    std::string samples;
    std::string entities;

    void attach(CLI::App* sub) {
        sub->add_option("--data", dir, "dataset directory");
        sub->add_option("--samples", samples, "samples file (default <data>/samples.jsonl)");
        sub->add_option("--entities", entities, "entities file (default <data>/entities.jsonl)");
    }
    fs::path samples_path() const {
        if (!samples.empty()) return samples;
        if (dir.empty()) throw InputError("either --data or --samples is required");
        return fs::path(dir) / "samples.jsonl";
    }
    fs::path entities_path() const {
        if (!entities.empty()) return entities;
        if (dir.empty()) throw InputError("either --data or --entities is required");
        return fs::path(dir) / "entities.jsonl";
    }
};

// ---- subcommands ----------------------------------------------------------------

int do_mockgen(const MockConfig& mock, const std::string& out_dir, std::ostream& out, std::ostream& err) {
    err << "mockgen seed=" << mock.seed << " samples=" << mock.samples << " entities=" << mock.entities
        << " dim=" << mock.dim << " noise=" << number(mock.noise_sigma) << " heads=" << mock.heads << "\n";
    const Dataset ds = mock_generate(mock);
    write_dataset(ds, out_dir);
    out << "wrote " << ds.samples.size() << " samples and " << ds.entities.size() << " entities to "
        << out_dir << "\n";
    return kExitOk;
}

int do_candgen(const RunConfig& config, const DataPaths& paths, const std::string& out_path,
               std::size_t workers, std::ostream& out, std::ostream& err) {
    log_config(err, config);
    const auto entities = store::read_entities(paths.entities_path());
    const auto samples = store::read_samples(paths.samples_path());
    store::validate_references(samples, entities);
    if (entities.empty() && !samples.empty()) throw DataError("entity list is empty");

    std::vector<candgen::CandidateSet> sets(samples.size());
    nk::parallel_for(
        samples.size(),
        [&](std::size_t i) {
            sets[i] = candgen::generate_candidates(samples[i].mention, entities, config.candidate_k,
                                                   samples[i].gold_entity_id, config.gold_injection, 1);
            sets[i].mention_id = samples[i].id;
        },
        workers);
    store::write_candidates(sets, out_path);
    const auto with_gold = std::count_if(sets.begin(), sets.end(), [](const auto& s) { return s.gold_included; });
    out << "wrote " << sets.size() << " candidate sets to " << out_path << " (gold included in "
        << with_gold << ")\n";
    return kExitOk;
}

int do_train(const RunConfig& config, const std::string& data_dir, const std::string& candidates_path,
             const std::string& out_dir, std::ostream& out, std::ostream& err) {
    log_config(err, config);
    const Dataset ds = load_dataset(data_dir);
    const auto candidates = store::read_candidates(candidates_path);
    train::validate_training_inputs(config, ds, candidates);

    fs::create_directories(out_dir);
    const fs::path curve_path = fs::path(out_dir) / "loss_curve.tsv";
    std::ofstream curve(curve_path, std::ios::trunc);
    if (!curve) throw IoError("cannot open '" + curve_path.string() + "' for writing");
    store::write_file_atomic(fs::path(out_dir) / "config.txt", config.to_text());

    const train::TrainResult result = train::train(config, ds, candidates, [&](std::size_t epoch, double loss) {
        curve << epoch << "\t" << number(loss) << "\n" << std::flush;
        err << "epoch " << epoch << " loss " << number(loss) << "\n";
    });
    store::save_checkpoint(result.final_params, fs::path(out_dir) / "checkpoint.final.ckpt");
    store::save_checkpoint(result.best_params, fs::path(out_dir) / "checkpoint.best.ckpt");
    out << "trained " << result.epoch_losses.size() << " epochs";
    if (result.best_epoch) out << ", best epoch " << result.best_epoch << " loss " << number(result.epoch_losses[result.best_epoch - 1]);
    out << "; checkpoints in " << out_dir << "\n";
    return kExitOk;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
    std::vector<std::size_t> ks;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string::npos) end = text.size();
        const std::string part = text.substr(pos, end - pos);
        std::size_t k = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), k);
        if (ec != std::errc() || ptr != part.data() + part.size() || k == 0) {
            throw ConfigError("invalid k list '" + text + "'");
        }
        ks.push_back(k);
        pos = end + 1;
    }
    if (!std::is_sorted(ks.begin(), ks.end())) throw ConfigError("k list must be ascending");
    return ks;
}

int do_eval(const RunConfig& config, const std::string& data_dir, const std::string& candidates_path,
            const std::string& checkpoint, const std::string& out_path, bool dump_ranks,
            std::string dataset_name, const std::string& ks, std::size_t workers, std::ostream& out,
            std::ostream& err) {
    log_config(err, config);
    const auto params = store::load_checkpoint(checkpoint);
    const Dataset ds = load_dataset(data_dir);
    const auto candidates = store::read_candidates(candidates_path);
    rankeval::EvalOptions options;
    options.ks = parse_ks(ks);
    options.tie_policy = config.tie_policy;
    options.dataset_name = dataset_name.empty() ? fs::path(data_dir).filename().string() : dataset_name;
    options.workers = workers;
    const rankeval::EvalReport report = rankeval::evaluate(params, ds, candidates, options);
    const std::string text = rankeval::format_report(report, dump_ranks);
    if (out_path.empty()) out << text;
    else {
        store::write_file_atomic(out_path, text);
        out << rankeval::format_report(report, false);
    }
    return kExitOk;
}

struct EnhanceArgs {
    std::string entities;
    std::string provider = "mock";
    std::string script;
    std::string endpoint;
    std::string model = "gpt-3.5-turbo";
    std::size_t concurrency = 4;
    std::size_t max_retries = 3;
    long long timeout_ms = 30000;
    long long backoff_ms = 1000;
    std::string patterns;
    std::string out;
    std::string audit;
    std::string responses;
    std::string report;
};

int do_enhance(const EnhanceArgs& a, std::ostream& out, std::ostream& err) {
    enhance::ProviderConfig pc;
    pc.kind = a.provider == "http" ? enhance::ProviderConfig::Kind::http : enhance::ProviderConfig::Kind::mock;
    pc.endpoint = a.endpoint;
    pc.model = a.model;
    pc.script = a.script;
    pc.concurrency = a.concurrency;
    pc.max_retries = a.max_retries;
    pc.timeout = std::chrono::milliseconds(a.timeout_ms);
    pc.backoff_base = std::chrono::milliseconds(a.backoff_ms);
    if (const char* key = std::getenv("DIMEL_API_KEY")) pc.api_key = key;
    else if (const char* key2 = std::getenv("OPENAI_API_KEY")) pc.api_key = key2;
    pc.validate();
    err << "enhance provider=" << a.provider << " model=" << pc.model << " concurrency=" << pc.concurrency
        << " max_retries=" << pc.max_retries << "\n";

    const auto entities = store::read_entities(a.entities);
    enhance::Classifier classifier;
    if (!a.patterns.empty()) classifier.load_rules(store::read_file(a.patterns));
    auto provider = enhance::make_provider(pc);

    const auto result = enhance::enhance_entities(entities, *provider, pc, classifier);
    for (const auto& o : result.outcomes) {
        if (!o.error.empty()) err << "entity " << o.entity_id << " " << o.error << "\n";
    }
    store::write_entities(result.entities, a.out);
    store::write_file_atomic(a.audit.empty() ? a.out + ".audit.tsv" : a.audit,
                             enhance::format_audit(result.outcomes));
    store::write_file_atomic(a.responses.empty() ? a.out + ".responses.jsonl" : a.responses,
                             enhance::format_responses(result.outcomes));
    const std::string report = enhance::format_report(result.report);
    if (!a.report.empty()) store::write_file_atomic(a.report, report);
    out << report;
    return kExitOk;
}

int do_stats(const DataPaths& paths, std::ostream& out) {
    const auto entities = store::read_entities(paths.entities_path());
    const auto samples = store::read_samples(paths.samples_path());
    store::validate_references(samples, entities);
    const DatasetStats s = compute_stats(samples, entities);
    out << "samples\t" << s.samples << "\n"
        << "entities\t" << s.entities << "\n"
        << "mentions\t" << s.mentions << "\n"
        << "mean_text_words\t" << number(s.mean_text_words) << "\n"
        << "mean_representation_chars\t" << number(s.mean_representation_chars) << "\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"dimel: multimodal entity linking with cross-attention fusion", "dimel"};
    app.require_subcommand(1);

    // mockgen
    MockConfig mock;
    std::string mock_out;
    auto* mockgen = app.add_subcommand("mockgen", "generate a planted-solution synthetic dataset");
    mockgen->add_option("--seed", mock.seed);
    mockgen->add_option("--samples", mock.samples);
    mockgen->add_option("--entities", mock.entities);
    mockgen->add_option("--dim", mock.dim);
    mockgen->add_option("--noise", mock.noise_sigma, "gaussian noise scale on entity embeddings");
    mockgen->add_option("--text-rows", mock.text_rows);
    mockgen->add_option("--image-rows", mock.image_rows);
    mockgen->add_option("--row-scale", mock.row_scale);
    mockgen->add_option("--heads", mock.heads, "heads of the identity model used for planting");
    mockgen->add_option("--out", mock_out, "output dataset directory")->required();

    // candgen
    ConfigFlags cand_flags;
    DataPaths cand_paths;
    std::string cand_out;
    std::size_t cand_workers = 0;
    auto* candgen = app.add_subcommand("candgen", "fuzzy-match candidate entities for every mention");
    cand_paths.attach(candgen);
    cand_flags.attach(candgen, {{"--k", "candidate_k"}, {"--gold-injection", "gold_injection"}});
    candgen->add_flag_callback("--no-gold-injection", [&] { cand_flags.values["gold_injection"] = "false"; },
                               "report retrieval recall instead of forcing gold into the set");
    candgen->add_option("--workers", cand_workers);
    candgen->add_option("--out", cand_out, "candidate file to write")->required();

    // train
    ConfigFlags train_flags;
    std::string train_data, train_candidates, train_out;
    auto* train_cmd = app.add_subcommand("train", "train the fusion model");
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--candidates", train_candidates, "candidate file")->required();
    train_cmd->add_option("--out", train_out, "output directory for checkpoints and loss curve")->required();
    train_flags.attach(train_cmd, {{"--seed", "seed"},
                                   {"--epochs", "epochs"},
                                   {"--lr", "learning_rate"},
                                   {"--batch-size", "batch_size"},
                                   {"--hidden-dim", "hidden_dim"},
                                   {"--heads", "heads"},
                                   {"--loss-mode", "loss_mode"},
                                   {"--init", "init"},
                                   {"--weight-decay", "weight_decay"},
                                   {"--fuse-mention", "fuse_mention"}});

    // eval
    ConfigFlags eval_flags;
    std::string eval_data, eval_candidates, eval_checkpoint, eval_out, eval_name, eval_ks = "1,5,10,20";
    bool dump_ranks = false;
    std::size_t eval_workers = 0;
    auto* eval_cmd = app.add_subcommand("eval", "rank candidates and report top-k accuracy");
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--candidates", eval_candidates, "candidate file")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--out", eval_out, "report file (default stdout)");
    eval_cmd->add_option("--dataset-name", eval_name);
    eval_cmd->add_option("--ks", eval_ks, "comma-separated ascending k list");
    eval_cmd->add_flag("--dump-ranks", dump_ranks, "append per-sample gold ranks");
    eval_cmd->add_option("--workers", eval_workers);
    eval_flags.attach(eval_cmd, {{"--tie-policy", "tie_policy"}});

    // enhance
    EnhanceArgs enh;
    auto* enhance_cmd = app.add_subcommand("enhance", "refresh entity representations through an LLM provider");
    enhance_cmd->add_option("--entities", enh.entities, "entities file")->required();
    enhance_cmd->add_option("--provider", enh.provider)->check(CLI::IsMember({"mock", "http"}));
    enhance_cmd->add_option("--script", enh.script, "mock provider script");
    enhance_cmd->add_option("--endpoint", enh.endpoint, "chat-completions URL");
    enhance_cmd->add_option("--model", enh.model);
    enhance_cmd->add_option("--concurrency", enh.concurrency);
    enhance_cmd->add_option("--max-retries", enh.max_retries);
    enhance_cmd->add_option("--timeout-ms", enh.timeout_ms);
    enhance_cmd->add_option("--backoff-ms", enh.backoff_ms, "base retry delay");
    enhance_cmd->add_option("--patterns", enh.patterns, "extra classification patterns");
    enhance_cmd->add_option("--out", enh.out, "updated entities file")->required();
    enhance_cmd->add_option("--audit", enh.audit);
    enhance_cmd->add_option("--responses", enh.responses);
    enhance_cmd->add_option("--report", enh.report);

    // stats
    DataPaths stats_paths;
    auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
    stats_paths.attach(stats_cmd);

    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("dimel");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << error_line("usage", e.what());
        return kExitUsage;
    }

    try {
        if (*mockgen) return do_mockgen(mock, mock_out, out, err);
        if (*candgen) return do_candgen(cand_flags.resolve(), cand_paths, cand_out, cand_workers, out, err);
        if (*train_cmd) return do_train(train_flags.resolve(), train_data, train_candidates, train_out, out, err);
        if (*eval_cmd) {
            return do_eval(eval_flags.resolve(), eval_data, eval_candidates, eval_checkpoint, eval_out,
                           dump_ranks, eval_name, eval_ks, eval_workers, out, err);
        }
        if (*enhance_cmd) return do_enhance(enh, out, err);
        if (*stats_cmd) return do_stats(stats_paths, out);
    } catch (const InputError& e) {
        err << error_line("usage", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        err << error_line(e.kind(), e.what());
        return kExitFailure;
    } catch (const fs::filesystem_error& e) {
        err << error_line("io", e.what());
        return kExitFailure;
    } catch (const std::exception& e) {
        err << error_line("internal", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace dimel::cli
