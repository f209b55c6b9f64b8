#include <doctest.h>

#include <map>

#include "flipdeck/config.hpp"
#include "flipdeck/error.hpp"

using namespace flipdeck;

namespace {

std::string error_text(std::string_view text) {
    try {
        parse_config(text, "test.conf");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadParams);
        return e.what();
    }
    FAIL("expected BadParams");
    return {};
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
    Config c = parse_config("");
    CHECK(c.listen_host == "127.0.0.1");
    CHECK(c.listen_port == 8080);
    CHECK(c.storage_fsync);
    CHECK(c.snapshot_interval == 10000);
    CHECK(c.pacing == pacing::Params{});
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("every key parses") {
    Config c = parse_config(R"(# service
listen.host = 0.0.0.0
listen.port = 9001   # trailing comment
storage.path = /tmp/x.log
storage.fsync = false
storage.snapshot_interval = 50
provider.url = http://localhost:1234/gen
provider.key = secret
provider.model = m1
auth.secret = s3
pacing.alpha = 2
pacing.beta = 0.25
pacing.theta_hi = 0.8
pacing.theta_lo = 0.4
pacing.lambda = 0.3
pacing.pace_min = 2
pacing.ssthresh = 16
pacing.prior = 0.6
)");
    CHECK(c.listen_host == "0.0.0.0");
    CHECK(c.listen_port == 9001);
    CHECK(c.storage_path == "/tmp/x.log");
    CHECK_FALSE(c.storage_fsync);
    CHECK(c.snapshot_interval == 50);
    CHECK(c.provider_url == "http://localhost:1234/gen");
    CHECK(c.provider_key == "secret");
    CHECK(c.provider_model == "m1");
    CHECK(c.auth_secret == "s3");
    CHECK(c.pacing.alpha == 2);
    CHECK(c.pacing.beta == 0.25);
    CHECK(c.pacing.theta_hi == 0.8);
    CHECK(c.pacing.theta_lo == 0.4);
    CHECK(c.pacing.lambda == 0.3);
    CHECK(c.pacing.pace_min == 2);
    CHECK(c.pacing.initial_ssthresh == 16);
    CHECK(c.pacing.prior_comprehension == 0.6);
    CHECK(config_keys().size() == 17);
}

TEST_CASE("errors name the source and line") {
    CHECK(error_text("listen.port = 80\nbogus = 1\n").rfind("test.conf:2:", 0) == 0);
    CHECK(error_text("\n\nlisten.port = abc").rfind("test.conf:3:", 0) == 0);
    CHECK(error_text("listen.port = 70000").rfind("test.conf:1:", 0) == 0);
    CHECK(error_text("storage.fsync = maybe").find("true or false") != std::string::npos);
    CHECK(error_text("just words").find("key = value") != std::string::npos);
}

TEST_CASE("environment overrides") {
    Config c = parse_config("listen.port = 1000");
    std::map<std::string, std::string> env = {{"FLIPDECK_LISTEN_PORT", "2000"}, {"FLIPDECK_PACING_BETA", "0.75"}};
    apply_env(c, [&](const std::string& k) -> std::optional<std::string> {
        auto it = env.find(k);
        if (it == env.end()) return std::nullopt;
        return it->second;
    });
    CHECK(c.listen_port == 2000);
    CHECK(c.pacing.beta == 0.75);
}

TEST_CASE("validation rejects unusable pacing parameters") {
    Config c;
    c.pacing.beta = 1.5;
    CHECK_THROWS_AS(validate(c), Error);
    c = Config{};
    c.storage_path.clear();
    CHECK_THROWS_AS(validate(c), Error);
    CHECK_THROWS_AS(load_config("/nonexistent/flipdeck.conf"), Error);
}

}
