#pragma once

// HTTP surface, chat webhook adapter and live channel. Gateway::handle is
// transport-neutral; HttpServer mounts it on a real socket and adds the
// streaming variant of the live channel.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flipdeck/app.hpp"
#include "flipdeck/clock.hpp"
#include "flipdeck/fip.hpp"

namespace flipdeck::gateway {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string authorization;  // raw header value
    std::optional<std::uint64_t> last_event_id;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    json json_body() const { return json::parse(body); }
};

int http_status(ErrorCode code) noexcept;
ApiResponse error_response(const Error& e);

struct ChatButton {
    std::string label;
    std::string callback_data;
};

struct ChatInbound {
    std::string platform;
    std::string chat_id;
    std::string user_ref;
    std::optional<std::string> text;
    std::optional<std::string> callback_data;
};

struct ChatOutbound {
    std::string chat_id;
    std::string text;
    std::vector<ChatButton> buttons;
};

ChatInbound chat_inbound_from_json(const json& j);
json to_json(const ChatOutbound& m);

inline constexpr std::string_view kChatNotUnderstood = "I didn't understand that choice.";
inline constexpr std::string_view kChatAlreadyVoted = "Your vote is already recorded.";

struct LiveBatch {
    std::vector<json> deltas;
    std::uint64_t scanned_to = 0;  // resume after this seq
};

std::string format_sse(const std::vector<json>& deltas);

class Gateway {
public:
    // `provider` backs consolidation, regeneration and FIP runs; may be null.
    Gateway(Application& app, const Clock& clock, fip::ProviderPort* provider = nullptr);

    ApiResponse handle(const ApiRequest& request);
    std::vector<ChatOutbound> handle_chat(const ChatInbound& message);

    // Session events after `from` as seen by `viewer`; one delta per
    // accepted vote, in seq order. Tally counts are withheld from students
    // who may not see the tally yet.
    LiveBatch live_deltas(const std::string& viewer, const std::string& session, std::uint64_t from,
                          std::size_t limit);
    // Resolves the bearer token and checks the session exists.
    std::string live_viewer(const ApiRequest& request, const std::string& session);

    // Blocks until the log grows past `seq`, the timeout passes or shutdown.
    std::uint64_t wait_beyond(std::uint64_t seq, std::chrono::milliseconds timeout);
    void shutdown();
    bool stopping() const;

    std::uint64_t last_seq();

private:
    ApiResponse route(const ApiRequest& request);
    std::vector<ChatOutbound> chat(const ChatInbound& message);
    const ActorRecord& authenticate(const ApiRequest& request) const;
    LiveBatch live_locked(const std::string& viewer, const std::string& session, std::uint64_t from, std::size_t limit);

    Application& app_;
    const Clock& clock_;
    fip::ProviderPort* provider_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool stopping_ = false;
};

class HttpServer {
public:
    explicit HttpServer(Gateway& gateway);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds (port 0 picks a free port), starts serving on a background
    // thread and returns the bound port. Throws Error{BadParams}.
    int start(const std::string& host, int port);
    void stop();
    // Blocks until stop() is called from elsewhere.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace flipdeck::gateway
