#include "flipdeck/event_store.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

namespace flipdeck::events {

namespace {

[[noreturn]] void storage_failure(const std::string& what) {
    throw Error(ErrorCode::StorageFailure, what + ": " + std::strerror(errno));
}

std::string header_line() { return std::string(kLogMagic) + "\n"; }

} // namespace

std::uint32_t crc32(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string canonical_body(std::uint64_t seq, Timestamp ts, std::string_view kind, const json& payload) {
    json body = {{"kind", std::string(kind)}, {"payload", payload}, {"seq", seq}, {"ts", ts}};
    return body.dump();
}

std::string encode_record(const EventEnvelope& e) {
    json rec = {{"checksum", e.checksum}, {"kind", e.kind}, {"payload", e.payload}, {"seq", e.seq}, {"ts", e.ts}};
    return rec.dump() + "\n";
}

DecodeResult decode_log(std::string_view bytes) {
    DecodeResult out;
    if (bytes.empty()) return out;
    std::string header = header_line();
    if (bytes.substr(0, header.size()) != header) {
        out.corruption = Corruption{0, 0, "missing log header"};
        return out;
    }
    std::size_t pos = header.size();
    out.valid_bytes = pos;
    std::uint64_t expected = 1;
    while (pos < bytes.size()) {
        std::size_t nl = bytes.find('\n', pos);
        auto bad = [&](const std::string& reason) {
            out.corruption = Corruption{expected - 1, pos, reason};
        };
        if (nl == std::string_view::npos) {
            bad("truncated record");
            break;
        }
        json rec = json::parse(bytes.substr(pos, nl - pos), nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("seq") || !rec.contains("ts") ||
            !rec.contains("kind") || !rec.contains("payload") || !rec.contains("checksum") ||
            !rec["seq"].is_number_unsigned() || !rec["ts"].is_number_integer() || !rec["kind"].is_string() ||
            !rec["checksum"].is_number_unsigned()) {
            bad("unparseable record");
            break;
        }
        EventEnvelope e;
        e.seq = rec["seq"].get<std::uint64_t>();
        e.ts = rec["ts"].get<Timestamp>();
        e.kind = rec["kind"].get<std::string>();
        e.payload = rec["payload"];
        e.checksum = rec["checksum"].get<std::uint32_t>();
        if (e.seq != expected) {
            bad("sequence gap");
            break;
        }
        if (crc32(canonical_body(e.seq, e.ts, e.kind, e.payload)) != e.checksum) {
            bad("checksum mismatch");
            break;
        }
        out.events.push_back(std::move(e));
        ++expected;
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

FileStorage::FileStorage(std::string path, bool fsync) : path_(std::move(path)), fsync_(fsync) {
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) storage_failure("cannot open " + path_);
}

FileStorage::~FileStorage() {
    if (fd_ >= 0) ::close(fd_);
}

std::string FileStorage::read_all() const {
    std::ifstream in(path_, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t FileStorage::size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) storage_failure("cannot stat " + path_);
    return static_cast<std::uint64_t>(st.st_size);
}

void FileStorage::append(std::string_view bytes) {
    const char* p = bytes.data();
    std::size_t left = bytes.size();
    while (left > 0) {
        ssize_t n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            storage_failure("write to " + path_ + " failed");
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (fsync_ && ::fsync(fd_) != 0) storage_failure("fsync of " + path_ + " failed");
}

void FileStorage::truncate(std::uint64_t size) {
    if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) storage_failure("truncate of " + path_ + " failed");
    if (fsync_) ::fsync(fd_);
}

std::optional<std::string> FileStorage::read_snapshot() const {
    std::ifstream in(path_ + ".snapshot", std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void FileStorage::write_snapshot(std::string_view bytes) {
    // Write-then-rename so a crash never leaves a half-written snapshot.
    std::string tmp = path_ + ".snapshot.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) storage_failure("cannot write " + tmp);
    }
    if (::rename(tmp.c_str(), (path_ + ".snapshot").c_str()) != 0) storage_failure("cannot install snapshot");
}

void FaultyStorage::append(std::string_view bytes) {
    if (++appends_ == fail_on_) {
        inner_->append(bytes.substr(0, std::min(partial_, bytes.size())));
        errno = EIO;
        throw Error(ErrorCode::StorageFailure, "injected storage fault");
    }
    inner_->append(bytes);
}

EventStore::EventStore(std::unique_ptr<Storage> storage) : storage_(std::move(storage)) {
    std::string bytes = storage_->read_all();
    if (bytes.empty()) {
        storage_->append(header_line());
        return;
    }
    DecodeResult decoded = decode_log(bytes);
    if (decoded.corruption && decoded.corruption->byte_offset == 0)
        throw Error(ErrorCode::CorruptRecord, "not a flipdeck log (bad header)");
    events_ = std::move(decoded.events);
    if (decoded.corruption) {
        recovered_ = decoded.corruption;
        storage_->truncate(decoded.valid_bytes);
    }
}

std::uint64_t EventStore::append(std::string kind, json payload, Timestamp ts) {
    EventEnvelope e;
    e.seq = last_seq() + 1;
    e.ts = ts;
    e.kind = std::move(kind);
    e.payload = std::move(payload);
    e.checksum = crc32(canonical_body(e.seq, e.ts, e.kind, e.payload));
    std::string line = encode_record(e);

    std::uint64_t before = storage_->size();
    try {
        storage_->append(line);
    } catch (const Error&) {
        try {
            storage_->truncate(before);
        } catch (const Error&) {
            // The torn tail is cut on the next open instead.
        }
        throw;
    }
    events_.push_back(std::move(e));
    return events_.back().seq;
}

std::vector<EventEnvelope> EventStore::replay(std::uint64_t from_seq) const {
    std::vector<EventEnvelope> out;
    for (const auto& e : events_)
        if (e.seq >= from_seq) out.push_back(e);
    return out;
}

std::string encode_snapshot(const Snapshot& s) {
    std::string body = json{{"seq", s.seq}, {"state", s.state}}.dump();
    json doc = {{"format", std::string(kSnapshotMagic)}, {"seq", s.seq}, {"state", s.state}, {"checksum", crc32(body)}};
    return doc.dump() + "\n";
}

std::optional<Snapshot> decode_snapshot(std::string_view bytes) {
    json doc = json::parse(bytes, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    if (doc.value("format", std::string()) != kSnapshotMagic) return std::nullopt;
    if (!doc.contains("seq") || !doc.contains("state") || !doc.contains("checksum")) return std::nullopt;
    Snapshot s{doc["seq"].get<std::uint64_t>(), doc["state"]};
    std::string body = json{{"seq", s.seq}, {"state", s.state}}.dump();
    if (crc32(body) != doc["checksum"].get<std::uint32_t>()) return std::nullopt;
    return s;
}

} // namespace flipdeck::events
