#include "dimel/config.hpp"

#include "dimel/errors.hpp"

#include <charconv>
#include <cstdlib>

namespace dimel {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const std::string t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

} // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> all{
        "hidden_dim", "heads",         "learning_rate",     "batch_size",     "epochs",
        "loss_mode",  "seed",          "candidate_k",       "tie_policy",     "truncation_budget",
        "gold_injection", "fuse_mention", "init",           "beta1",          "beta2",
        "eps",        "weight_decay"};
    return all;
}

void RunConfig::set(std::string_view key, std::string_view value) {
    const std::string v = trim(value);
    if (key == "hidden_dim") hidden_dim = parse_number<std::size_t>(key, v);
    else if (key == "heads") heads = parse_number<std::size_t>(key, v);
    else if (key == "learning_rate") learning_rate = parse_number<double>(key, v);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, v);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, v);
    else if (key == "loss_mode") loss_mode = contrastive::parse_loss_mode(v);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
    else if (key == "candidate_k") candidate_k = parse_number<std::size_t>(key, v);
    else if (key == "tie_policy") tie_policy = rankeval::parse_tie_policy(v);
    else if (key == "truncation_budget") truncation_budget = parse_number<std::size_t>(key, v);
    else if (key == "gold_injection") gold_injection = parse_bool(key, v);
    else if (key == "fuse_mention") fuse_mention = parse_bool(key, v);
    else if (key == "init") {
        if (v == "xavier") init = fusion::InitScheme::xavier;
        else if (v == "identity") init = fusion::InitScheme::identity;
        else throw ConfigError("invalid init '" + v + "' (expected xavier|identity)");
    } else if (key == "beta1") beta1 = parse_number<double>(key, v);
    else if (key == "beta2") beta2 = parse_number<double>(key, v);
    else if (key == "eps") eps = parse_number<double>(key, v);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, v);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_text(std::string_view text) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + " is not key=value");
        }
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

void RunConfig::apply_environment() {
    for (const std::string& key : keys()) {
        std::string name = "DIMEL_";
        for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (const char* value = std::getenv(name.c_str())) set(key, value);
    }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    return {
        {"hidden_dim", std::to_string(hidden_dim)},
        {"heads", std::to_string(heads)},
        {"learning_rate", format_double(learning_rate)},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"loss_mode", contrastive::to_string(loss_mode)},
        {"seed", std::to_string(seed)},
        {"candidate_k", std::to_string(candidate_k)},
        {"tie_policy", rankeval::to_string(tie_policy)},
        {"truncation_budget", std::to_string(truncation_budget)},
        {"gold_injection", gold_injection ? "true" : "false"},
        {"fuse_mention", fuse_mention ? "true" : "false"},
        {"init", init == fusion::InitScheme::xavier ? "xavier" : "identity"},
        {"beta1", format_double(beta1)},
        {"beta2", format_double(beta2)},
        {"eps", format_double(eps)},
        {"weight_decay", format_double(weight_decay)},
    };
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
    return out;
}

nk::AdamWHyper RunConfig::adamw() const {
    return nk::AdamWHyper{learning_rate, beta1, beta2, eps, weight_decay};
}

void RunConfig::validate() const {
    if (heads == 0 || hidden_dim == 0 || hidden_dim % heads != 0) {
        throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by heads " +
                          std::to_string(heads));
    }
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (candidate_k == 0) throw ConfigError("candidate_k must be at least 1");
    adamw().validate();
}

} // namespace dimel
