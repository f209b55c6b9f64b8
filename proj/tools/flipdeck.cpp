// flipdeck: serve, seed, simulate, export, verify.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "flipdeck/app.hpp"
#include "flipdeck/clock.hpp"
#include "flipdeck/config.hpp"
#include "flipdeck/event_store.hpp"
#include "flipdeck/gateway.hpp"
#include "flipdeck/simulate.hpp"

using namespace flipdeck;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

Config resolve_config(const std::string& path) {
    Config c = path.empty() ? Config{} : load_config(path);
    apply_env(c);
    validate(c);
    return c;
}

AppOptions app_options(const Config& c) {
    AppOptions o;
    o.pacing = c.pacing;
    o.snapshot_interval = c.snapshot_interval;
    o.auth_secret = c.auth_secret;
    return o;
}

Timestamp now_seconds() {
    return SystemClock{}.now();
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path);
    return json::parse(in);
}

int serve(const std::string& config_path, bool scripted) {
    Config c = resolve_config(config_path);
    Application app(std::make_unique<events::FileStorage>(c.storage_path, c.storage_fsync), app_options(c));
    auto staff = sim::ensure_staff(app, now_seconds());
    std::unique_ptr<fip::ProviderPort> provider;
    if (!c.provider_url.empty())
        provider = std::make_unique<fip::HttpProvider>(c.provider_url, c.provider_key, c.provider_model);
    else if (scripted)
        provider = sim::make_class_provider();

    SystemClock clock;
    gateway::Gateway gw(app, clock, provider.get());
    gateway::HttpServer server(gw);
    int port = server.start(c.listen_host, c.listen_port);
    std::cerr << "listening on " << c.listen_host << ":" << port << "\n"
              << "instructor token: " << staff.instructor_token << "\n"
              << "assistant token:  " << staff.assistant_token << "\n";
    if (!provider) std::cerr << "no provider configured; consolidation and regeneration return 502\n";

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
    return 0;
}

int seed(const std::string& config_path, const std::string& fixture, const std::string& course, Timestamp at) {
    Config c = resolve_config(config_path);
    Application app(std::make_unique<events::FileStorage>(c.storage_path, c.storage_fsync), app_options(c));
    if (at == 0) at = now_seconds();
    auto staff = sim::ensure_staff(app, at);
    auto result = sim::seed_fixture(app, read_json_file(fixture), std::string(sim::kInstructorId), at,
                                    course.empty() ? std::nullopt : std::optional<std::string>(course));
    json out = {{"course", result.course}, {"entries", result.entries}, {"tokens", result.tokens},
                {"instructor_token", staff.instructor_token}, {"assistant_token", staff.assistant_token}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int simulate(const sim::Options& opts, const std::string& log, const std::string& out, const std::string& transport,
             bool fsync) {
    std::unique_ptr<events::Storage> storage;
    if (log.empty())
        storage = std::make_unique<events::MemoryStorage>();
    else
        storage = std::make_unique<events::FileStorage>(log, fsync);
    Application app(std::move(storage), AppOptions{});
    ManualClock clock(opts.start);
    auto staff = sim::ensure_staff(app, opts.start);
    auto provider = sim::make_class_provider();
    gateway::Gateway gw(app, clock, provider.get());

    sim::Report report;
    if (transport == "http") {
        gateway::HttpServer server(gw);
        int port = server.start("127.0.0.1", 0);
        {
            // close the keep-alive connection before stopping the server
            sim::HttpTransport t("127.0.0.1", port);
            report = sim::run(t, &clock, staff, opts);
        }
        server.stop();
    } else {
        sim::InProcessTransport t(gw);
        report = sim::run(t, &clock, staff, opts);
    }
    if (!out.empty()) {
        std::ofstream f(out);
        f << report.to_json().dump(2) << "\n";
    }
    std::cout << report.text();
    return 0;
}

int export_csv(const std::string& log, const std::string& course, const std::string& what) {
    Application app(std::make_unique<events::FileStorage>(log, false), AppOptions{});
    std::cout << app.export_csv(course, what);
    return 0;
}

int verify(const std::string& log) {
    auto storage = std::make_unique<events::FileStorage>(log, false);
    std::string bytes = storage->read_all();
    auto decoded = events::decode_log(bytes);
    AppState folded = fold_events(decoded.events, std::nullopt);
    Application app(std::move(storage), AppOptions{});
    bool same = folded.bytes() == app.state().bytes();
    std::cout << "events: " << decoded.events.size() << "\n"
              << "valid bytes: " << decoded.valid_bytes << " of " << bytes.size() << "\n"
              << "snapshot replay matches full replay: " << (same ? "yes" : "no") << "\n";
    return same ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"flipdeck: question-centric class routines"};
    cli.require_subcommand(1);

    std::string config_path;
    bool scripted = false;
    auto* serve_cmd = cli.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", config_path, "Config file (key = value)");
    serve_cmd->add_flag("--offline-provider", scripted, "Use the built-in deterministic provider when no URL is set");

    std::string fixture, course;
    Timestamp at = 0;
    auto* seed_cmd = cli.add_subcommand("seed", "Load a fixture into the vetting queue");
    seed_cmd->add_option("fixture", fixture, "Fixture JSON")->required();
    seed_cmd->add_option("--config", config_path, "Config file");
    seed_cmd->add_option("--course", course, "Override the fixture course");
    seed_cmd->add_option("--at", at, "Timestamp for the seeded events (default: now)");

    sim::Options sim_opts;
    std::string log, out, transport = "inprocess";
    bool fsync = false;
    auto* sim_cmd = cli.add_subcommand("simulate", "Drive a synthetic class through the API");
    sim_cmd->add_option("--students", sim_opts.students)->check(CLI::Range(1, 10000));
    sim_cmd->add_option("--sessions", sim_opts.sessions)->check(CLI::Range(1, 1000));
    sim_cmd->add_option("--seed", sim_opts.seed);
    sim_cmd->add_option("--course", sim_opts.course);
    sim_cmd->add_option("--start", sim_opts.start, "Clock start (UTC seconds)");
    sim_cmd->add_option("--log", log, "Event log path (default: in memory)");
    sim_cmd->add_flag("--fsync", fsync);
    sim_cmd->add_option("--out", out, "Write the report as JSON");
    sim_cmd->add_option("--transport", transport)->check(CLI::IsMember({"inprocess", "http"}));

    std::string what;
    auto* export_cmd = cli.add_subcommand("export", "Print an analytics export as CSV");
    export_cmd->add_option("--log", log)->required();
    export_cmd->add_option("course", course)->required();
    export_cmd->add_option("what", what, "histogram | unanswered | difficulty | leaderboard | comprehension")->required();

    auto* verify_cmd = cli.add_subcommand("verify", "Check a log and compare snapshot and full replay");
    verify_cmd->add_option("--log", log)->required();

    CLI11_PARSE(cli, argc, argv);

    try {
        if (*serve_cmd) return serve(config_path, scripted);
        if (*seed_cmd) return seed(config_path, fixture, course, at);
        if (*sim_cmd) return simulate(sim_opts, log, out, transport, fsync);
        if (*export_cmd) return export_csv(log, course, what);
        if (*verify_cmd) return verify(log);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
