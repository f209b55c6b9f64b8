#pragma once

// Synthetic class driver. Everything goes through the public API via a
// Transport, so the same run works in-process and over loopback HTTP.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flipdeck/app.hpp"
#include "flipdeck/clock.hpp"
#include "flipdeck/gateway.hpp"

namespace flipdeck::sim {

class Transport {
public:
    virtual ~Transport() = default;
    virtual gateway::ApiResponse call(const std::string& method, const std::string& path, const json& body,
                                      const std::string& token) = 0;
};

class InProcessTransport final : public Transport {
public:
    explicit InProcessTransport(gateway::Gateway& gw) : gw_(gw) {}
    gateway::ApiResponse call(const std::string& method, const std::string& path, const json& body,
                              const std::string& token) override;

private:
    gateway::Gateway& gw_;
};

class HttpTransport final : public Transport {
public:
    HttpTransport(std::string host, int port);
    ~HttpTransport() override;
    gateway::ApiResponse call(const std::string& method, const std::string& path, const json& body,
                              const std::string& token) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct Staff {
    std::string instructor_token;
    std::string assistant_token;
};

inline constexpr std::string_view kInstructorId = "instructor";
inline constexpr std::string_view kAssistantId = "ta";

// Registers the instructor and assistant on first use.
Staff ensure_staff(Application& app, Timestamp at);

// Deterministic stand-in for a language model on the server side:
// consolidation returns the first distinct responses as talking points,
// anything else is echoed back.
std::unique_ptr<fip::ProviderPort> make_class_provider();

struct SeedResult {
    std::string course;
    std::vector<std::string> entries;             // bank entry ids, fixture order
    std::map<std::string, std::string> tokens;    // author id -> token
};

// Loads a fixture (`flipdeck-fixture v1`) into the vetting queue: one
// Pending entry per row, authored by the row's author. Throws
// Error{InvalidQuestion} when a row's response does not parse.
SeedResult seed_fixture(Application& app, const json& fixture, const std::string& submitter, Timestamp at,
                        const std::optional<std::string>& course_override = std::nullopt);

struct Options {
    int students = 30;
    int sessions = 3;
    std::uint64_t seed = 1;
    std::string course = "CS101";
    Timestamp start = 1700000000;
};

struct Report {
    std::string course;
    json trajectory = json::array();  // comprehension series
    json pacing;                       // final state
    json recommendation;
    std::map<std::string, std::string> exports;  // what -> csv
    std::size_t bank_entries = 0;
    std::size_t approved = 0;
    std::size_t rejected = 0;
    std::size_t votes = 0;

    json to_json() const;
    std::string text() const;
};

// Throws Error when any API call fails unexpectedly.
Report run(Transport& transport, ManualClock* clock, const Staff& staff, const Options& options);

} // namespace flipdeck::sim
