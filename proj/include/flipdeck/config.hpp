#pragma once

// Service configuration. The file format is `key = value` per line; `#`
// starts a comment. Environment variables named FLIPDECK_<KEY> (dots become
// underscores, upper case) override file values.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flipdeck/pacing.hpp"

namespace flipdeck {

struct Config {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    std::string storage_path = "flipdeck.log";
    bool storage_fsync = true;
    std::uint64_t snapshot_interval = 10000;
    std::string provider_url;  // empty: no live provider
    std::string provider_key;
    std::string provider_model = "default";
    std::string auth_secret = "flipdeck-dev-secret";
    pacing::Params pacing;
};

// Every key the parser accepts.
const std::vector<std::string>& config_keys();

// Throws Error{BadParams} with "<source>:<line>: message".
Config parse_config(std::string_view text, const std::string& source = "config");
Config load_config(const std::string& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Applies FLIPDECK_* overrides; `lookup` defaults to getenv.
void apply_env(Config& config, const EnvLookup& lookup = {});

// Throws Error{BadParams} when the combination is unusable (bad port,
// invalid pacing parameters).
void validate(const Config& config);

} // namespace flipdeck
