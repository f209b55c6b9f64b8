#pragma once

// Append-only event log.
//
// On-disk layout (v1): the first line is the magic header
// `flipdeck-log v1`; every following line is one record, a key-sorted JSON
// object {"checksum","kind","payload","seq","ts"}. The checksum is the CRC-32
// of the canonical body {"kind","payload","seq","ts"} serialized the same
// way. Sequence numbers start at 1 and have no gaps. A record is only
// acknowledged after the full line (including '\n') is written.
//
// Snapshots live next to the log (`<log>.snapshot`) and hold the folded
// application state at some seq together with its own checksum.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flipdeck/domain.hpp"

namespace flipdeck::events {

inline constexpr std::string_view kLogMagic = "flipdeck-log v1";
inline constexpr std::string_view kSnapshotMagic = "flipdeck-snapshot v1";

struct EventEnvelope {
    std::uint64_t seq = 0;
    Timestamp ts = 0;
    std::string kind;
    json payload;
    std::uint32_t checksum = 0;

    bool operator==(const EventEnvelope&) const = default;
};

std::uint32_t crc32(std::string_view bytes);
std::string canonical_body(std::uint64_t seq, Timestamp ts, std::string_view kind, const json& payload);
std::string encode_record(const EventEnvelope& e);

struct Corruption {
    std::uint64_t last_valid_seq = 0;
    std::uint64_t byte_offset = 0;  // start of the first bad record
    std::string reason;
};

struct DecodeResult {
    std::vector<EventEnvelope> events;
    std::optional<Corruption> corruption;
    std::uint64_t valid_bytes = 0;  // length of the verified prefix
};

// Decodes a whole log image. Decoding halts at the first record that fails
// to parse, fails its checksum, or breaks the seq chain.
DecodeResult decode_log(std::string_view bytes);

// Raw byte storage behind the event store.
class Storage {
public:
    virtual ~Storage() = default;

    virtual std::string read_all() const = 0;
    virtual std::uint64_t size() const = 0;
    // Appends the bytes durably or throws Error{StorageFailure}; may leave a
    // partial write behind, which the caller truncates.
    virtual void append(std::string_view bytes) = 0;
    virtual void truncate(std::uint64_t size) = 0;

    virtual std::optional<std::string> read_snapshot() const = 0;
    virtual void write_snapshot(std::string_view bytes) = 0;
};

class MemoryStorage final : public Storage {
public:
    std::string read_all() const override { return bytes_; }
    std::uint64_t size() const override { return bytes_.size(); }
    void append(std::string_view bytes) override { bytes_.append(bytes); }
    void truncate(std::uint64_t size) override { bytes_.resize(size); }
    std::optional<std::string> read_snapshot() const override { return snapshot_; }
    void write_snapshot(std::string_view bytes) override { snapshot_ = std::string(bytes); }

private:
    std::string bytes_;
    std::optional<std::string> snapshot_;
};

class FileStorage final : public Storage {
public:
    FileStorage(std::string path, bool fsync);
    ~FileStorage() override;
    FileStorage(const FileStorage&) = delete;
    FileStorage& operator=(const FileStorage&) = delete;

    std::string read_all() const override;
    std::uint64_t size() const override;
    void append(std::string_view bytes) override;
    void truncate(std::uint64_t size) override;
    std::optional<std::string> read_snapshot() const override;
    void write_snapshot(std::string_view bytes) override;

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    bool fsync_;
    int fd_ = -1;
};

// Test harness decorator: the Nth append (1-based) writes only
// `partial_bytes` bytes and then fails.
class FaultyStorage final : public Storage {
public:
    FaultyStorage(std::unique_ptr<Storage> inner, std::uint64_t fail_on_append, std::size_t partial_bytes)
        : inner_(std::move(inner)), fail_on_(fail_on_append), partial_(partial_bytes) {}

    std::string read_all() const override { return inner_->read_all(); }
    std::uint64_t size() const override { return inner_->size(); }
    void append(std::string_view bytes) override;
    void truncate(std::uint64_t size) override { inner_->truncate(size); }
    std::optional<std::string> read_snapshot() const override { return inner_->read_snapshot(); }
    void write_snapshot(std::string_view bytes) override { inner_->write_snapshot(bytes); }

private:
    std::unique_ptr<Storage> inner_;
    std::uint64_t fail_on_;
    std::size_t partial_;
    std::uint64_t appends_ = 0;
};

class EventStore {
public:
    // Loads and verifies existing records. A corrupt or truncated tail is
    // cut off (see recovered()); a missing or wrong magic header on a
    // non-empty log throws Error{CorruptRecord}.
    explicit EventStore(std::unique_ptr<Storage> storage);

    // Throws Error{StorageFailure}; on failure no partial record remains.
    std::uint64_t append(std::string kind, json payload, Timestamp ts);

    std::uint64_t last_seq() const noexcept { return events_.empty() ? 0 : events_.back().seq; }
    const std::vector<EventEnvelope>& events() const noexcept { return events_; }
    std::vector<EventEnvelope> replay(std::uint64_t from_seq) const;

    std::string bytes() const { return storage_->read_all(); }
    const std::optional<Corruption>& recovered() const noexcept { return recovered_; }

    Storage& storage() noexcept { return *storage_; }
    const Storage& storage() const noexcept { return *storage_; }

private:
    std::unique_ptr<Storage> storage_;
    std::vector<EventEnvelope> events_;
    std::optional<Corruption> recovered_;
};

struct Snapshot {
    std::uint64_t seq = 0;
    json state;
};

std::string encode_snapshot(const Snapshot& s);
// Returns nullopt for a snapshot that is malformed or fails its checksum.
std::optional<Snapshot> decode_snapshot(std::string_view bytes);

} // namespace flipdeck::events
