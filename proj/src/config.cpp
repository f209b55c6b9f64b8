#include "flipdeck/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flipdeck/error.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
    throw Error(ErrorCode::BadParams, where + ": " + msg);
}

double to_double(const std::string& v, const std::string& where, const std::string& key) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) fail(where, key + " expects a number, got '" + v + "'");
    return out;
}

std::int64_t to_int(const std::string& v, const std::string& where, const std::string& key) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) fail(where, key + " expects an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& v, const std::string& where, const std::string& key) {
    std::string l = text::to_lower_ascii(v);
    if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
    if (l == "false" || l == "0" || l == "no" || l == "off") return false;
    fail(where, key + " expects true or false, got '" + v + "'");
}

void set_key(Config& c, const std::string& key, const std::string& value, const std::string& where) {
    if (key == "listen.host") c.listen_host = value;
    else if (key == "listen.port") {
        auto port = to_int(value, where, key);
        if (port < 0 || port > 65535) fail(where, "listen.port must lie in 0..65535");
        c.listen_port = static_cast<int>(port);
    }
    else if (key == "storage.path") c.storage_path = value;
    else if (key == "storage.fsync") c.storage_fsync = to_bool(value, where, key);
    else if (key == "storage.snapshot_interval") {
        auto n = to_int(value, where, key);
        if (n < 0) fail(where, "storage.snapshot_interval must not be negative");
        c.snapshot_interval = static_cast<std::uint64_t>(n);
    }
    else if (key == "provider.url") c.provider_url = value;
    else if (key == "provider.key") c.provider_key = value;
    else if (key == "provider.model") c.provider_model = value;
    else if (key == "auth.secret") c.auth_secret = value;
    else if (key == "pacing.alpha") c.pacing.alpha = to_double(value, where, key);
    else if (key == "pacing.beta") c.pacing.beta = to_double(value, where, key);
    else if (key == "pacing.theta_hi") c.pacing.theta_hi = to_double(value, where, key);
    else if (key == "pacing.theta_lo") c.pacing.theta_lo = to_double(value, where, key);
    else if (key == "pacing.lambda") c.pacing.lambda = to_double(value, where, key);
    else if (key == "pacing.pace_min") c.pacing.pace_min = to_double(value, where, key);
    else if (key == "pacing.ssthresh") c.pacing.initial_ssthresh = to_double(value, where, key);
    else if (key == "pacing.prior") c.pacing.prior_comprehension = to_double(value, where, key);
    else fail(where, "unknown key '" + key + "'");
}

std::string env_name(const std::string& key) {
    std::string out = "FLIPDECK_";
    for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return out;
}

} // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "listen.host",   "listen.port",  "storage.path",   "storage.fsync",   "storage.snapshot_interval",
        "provider.url",  "provider.key", "provider.model", "auth.secret",     "pacing.alpha",
        "pacing.beta",   "pacing.theta_hi", "pacing.theta_lo", "pacing.lambda", "pacing.pace_min",
        "pacing.ssthresh", "pacing.prior"};
    return keys;
}

Config parse_config(std::string_view input, const std::string& source) {
    Config c;
    auto lines = text::split_lines(input);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string where = source + ":" + std::to_string(i + 1);
        std::string line = lines[i];
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = text::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) fail(where, "expected key = value");
        std::string key = text::trim(line.substr(0, eq));
        std::string value = text::trim(line.substr(eq + 1));
        if (key.empty()) fail(where, "missing key before '='");
        set_key(c, key, value, where);
    }
    validate(c);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::BadParams, path + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

void apply_env(Config& config, const EnvLookup& lookup) {
    EnvLookup get = lookup ? lookup : [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    };
    for (const auto& key : config_keys()) {
        std::string name = env_name(key);
        if (auto v = get(name)) set_key(config, key, text::trim(*v), name);
    }
    validate(config);
}

void validate(const Config& config) {
    if (config.listen_host.empty()) throw Error(ErrorCode::BadParams, "listen.host is empty");
    if (config.storage_path.empty()) throw Error(ErrorCode::BadParams, "storage.path is empty");
    try {
        pacing::init_pacing(config.pacing);
    } catch (const Error& e) {
        throw Error(ErrorCode::BadParams, std::string("pacing: ") + e.what());
    }
}

} // namespace flipdeck
