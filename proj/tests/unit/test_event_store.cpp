#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "flipdeck/event_store.hpp"

using namespace flipdeck;
using namespace flipdeck::events;

namespace {

std::filesystem::path temp_log(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "flipdeck-tests";
    std::filesystem::create_directories(dir);
    auto p = dir / (name + "-" + std::to_string(std::random_device{}()) + ".log");
    std::filesystem::remove(p);
    std::filesystem::remove(p.string() + ".snapshot");
    return p;
}

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::BadRequest;
}

} // namespace

TEST_SUITE("event_store") {

TEST_CASE("crc32 reference value") {
    CHECK(crc32("123456789") == 0xCBF43926U);
    CHECK(crc32("") == 0U);
}

TEST_CASE("records are key-sorted single lines with sequential seqs") {
    EventStore store(std::make_unique<MemoryStorage>());
    CHECK(store.append("b.kind", {{"z", 1}, {"a", "x\ny"}}, 10) == 1);
    CHECK(store.append("a.kind", json::object(), 11) == 2);
    std::string bytes = store.bytes();
    CHECK(bytes.rfind(std::string(kLogMagic) + "\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : bytes) lines += c == '\n';
    CHECK(lines == 3);
    auto first = bytes.substr(bytes.find('\n') + 1);
    first = first.substr(0, first.find('\n'));
    CHECK(first.find("\"checksum\"") < first.find("\"kind\""));
    CHECK(first.find("\"kind\"") < first.find("\"payload\""));
    CHECK(first.find("\"payload\"") < first.find("\"seq\""));
    CHECK(first.find("\"a\"") < first.find("\"z\""));

    auto decoded = decode_log(bytes);
    CHECK_FALSE(decoded.corruption);
    REQUIRE(decoded.events.size() == 2);
    CHECK(decoded.events == store.events());
    CHECK(store.replay(2).size() == 1);
}

TEST_CASE("a failed append leaves no partial record") {
    auto inner = std::make_unique<MemoryStorage>();
    auto* raw = inner.get();
    EventStore store(std::make_unique<FaultyStorage>(std::move(inner), 3, 7));
    store.append("x", {{"n", 1}}, 1);  // header was append 1
    std::string before = raw->read_all();
    CHECK(code_of([&] { store.append("x", {{"n", 2}}, 2); }) == ErrorCode::StorageFailure);
    CHECK(raw->read_all() == before);
    CHECK(store.last_seq() == 1);
    CHECK(store.append("x", {{"n", 3}}, 3) == 2);
}

TEST_CASE("torn or corrupt tails are cut on open") {
    EventStore a(std::make_unique<MemoryStorage>());
    for (int i = 0; i < 5; ++i) a.append("e", {{"i", i}}, i);
    std::string good = a.bytes();

    auto reopen = [](std::string bytes) {
        auto s = std::make_unique<MemoryStorage>();
        s->append(bytes);
        return EventStore(std::move(s));
    };

    auto torn = reopen(good.substr(0, good.size() - 5));
    CHECK(torn.last_seq() == 4);
    REQUIRE(torn.recovered());
    CHECK(torn.recovered()->last_valid_seq == 4);
    CHECK(torn.append("e", {{"i", 99}}, 99) == 5);
    CHECK_FALSE(decode_log(torn.bytes()).corruption);

    std::string flipped = good;
    auto pos = flipped.find("\"i\":2");
    REQUIRE(pos != std::string::npos);
    flipped[pos + 4] = '7';
    auto bad = reopen(flipped);
    CHECK(bad.last_seq() == 2);
    CHECK(bad.recovered()->reason.size() > 0);

    CHECK(code_of([&] { reopen("not a log\n"); }) == ErrorCode::CorruptRecord);
}

TEST_CASE("every truncation point recovers a clean prefix") {
    EventStore a(std::make_unique<MemoryStorage>());
    for (int i = 0; i < 8; ++i) a.append("e", {{"i", i}, {"pad", std::string(static_cast<std::size_t>(i), 'x')}}, i);
    std::string good = a.bytes();
    std::size_t header = std::string(kLogMagic).size() + 1;
    for (std::size_t cut = header; cut <= good.size(); ++cut) {
        auto s = std::make_unique<MemoryStorage>();
        s->append(good.substr(0, cut));
        EventStore b(std::move(s));
        auto decoded = decode_log(b.bytes());
        CHECK_FALSE(decoded.corruption);
        for (std::size_t k = 0; k < b.events().size(); ++k) CHECK(b.events()[k] == a.events()[k]);
    }
}

TEST_CASE("file storage persists and reopens") {
    auto path = temp_log("persist");
    {
        EventStore s(std::make_unique<FileStorage>(path.string(), true));
        s.append("one", {{"v", 1}}, 5);
        s.append("two", {{"v", 2}}, 6);
    }
    {
        EventStore s(std::make_unique<FileStorage>(path.string(), false));
        CHECK(s.last_seq() == 2);
        CHECK(s.events()[1].kind == "two");
        s.append("three", {}, 7);
    }
    {
        std::ofstream out(path, std::ios::app | std::ios::binary);
        out << "{\"checksum\":1,";  // torn write
    }
    EventStore s(std::make_unique<FileStorage>(path.string(), false));
    CHECK(s.last_seq() == 3);
    CHECK(s.recovered());
    CHECK(std::filesystem::file_size(path) == s.bytes().size());
    std::filesystem::remove(path);
}

TEST_CASE("snapshots carry their own checksum") {
    Snapshot snap{42, {{"state", {1, 2, 3}}}};
    std::string bytes = encode_snapshot(snap);
    auto back = decode_snapshot(bytes);
    REQUIRE(back);
    CHECK(back->seq == 42);
    CHECK(back->state == snap.state);
    std::string tampered = bytes;
    tampered[tampered.find('2')] = '9';
    CHECK_FALSE(decode_snapshot(tampered));
    CHECK_FALSE(decode_snapshot("garbage"));

    auto path = temp_log("snap");
    FileStorage fs(path.string(), false);
    CHECK_FALSE(fs.read_snapshot());
    fs.write_snapshot(bytes);
    CHECK(fs.read_snapshot() == bytes);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".snapshot");
}

}
