#include "mews/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>

#include <fmt/format.h>

namespace mews {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 8> kKindNames = {
    "PostIngested",  "ImageAdded",     "FeaturesComputed",    "ForensicsComputed",
    "EdgeAccepted",  "ClustersMerged", "ObservationRecorded", "AlertRaised",
};

[[noreturn]] void throw_io(const std::string& what) {
  throw Error(ErrorCode::Io, fmt::format("{}: {}", what, std::strerror(errno)));
}

void write_all(int fd, const char* data, std::size_t size, const fs::path& path) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io(fmt::format("write {}", path.string()));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

template <typename T>
bool parse_uint(std::string_view s, T& out, int base = 10) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
  return ec == std::errc{} && p == s.data() + s.size();
}

// One framed record parsed from `buf` at `pos`; advances pos past the newline.
std::optional<Event> parse_record(std::string_view buf, std::size_t& pos) {
  const auto sp1 = buf.find(' ', pos);
  if (sp1 == std::string_view::npos || sp1 - pos > 12) return std::nullopt;
  std::size_t len = 0;
  if (!parse_uint(buf.substr(pos, sp1 - pos), len)) return std::nullopt;
  if (sp1 + 10 > buf.size() || buf[sp1 + 9] != ' ') return std::nullopt;
  std::uint32_t crc = 0;
  if (!parse_uint(buf.substr(sp1 + 1, 8), crc, 16)) return std::nullopt;
  const std::size_t body = sp1 + 10;
  if (body + len + 1 > buf.size() || buf[body + len] != '\n') return std::nullopt;
  const auto json = buf.substr(body, len);
  if (mews::crc32(as_bytes(json)) != crc) return std::nullopt;

  Event ev;
  try {
    const auto j = nlohmann::json::parse(json);
    ev.seq = j.at("seq").get<std::uint64_t>();
    const auto kind = parse_event_kind(j.at("kind").get<std::string>());
    const auto at = parse_rfc3339(j.at("at").get<std::string>());
    if (!kind || !at) return std::nullopt;
    ev.kind = *kind;
    ev.at = *at;
    ev.payload = j.at("payload");
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  pos = body + len + 1;
  return ev;
}

std::map<std::uint64_t, fs::path> list_segments(const fs::path& dir) {
  std::map<std::uint64_t, fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    constexpr std::string_view prefix = "events-", suffix = ".jsonl";
    if (name.size() <= prefix.size() + suffix.size() || name.rfind(prefix, 0) != 0 ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    std::uint64_t n = 0;
    if (parse_uint(std::string_view(name).substr(prefix.size(), name.size() - prefix.size() - suffix.size()), n)) {
      out.emplace(n, entry.path());
    }
  }
  return out;
}

struct ScanResult {
  std::uint64_t last_seq = 0;
  // Torn tail of the final segment, if any.
  std::optional<std::pair<fs::path, std::size_t>> torn;
};

// Walks every record in order. `visit` sees each intact event.
template <typename Visit>
ScanResult scan_log(const fs::path& dir, std::uint64_t segment_events, std::uint64_t from_segment, Visit&& visit) {
  ScanResult result;
  const auto segments = list_segments(dir);
  std::uint64_t expected_index = 0;
  for (const auto& [index, path] : segments) {
    if (index != expected_index) {
      throw Error(ErrorCode::CorruptLog, fmt::format("missing log segment {} before {}", expected_index, path.string()));
    }
    ++expected_index;
    const bool last_segment = index == segments.rbegin()->first;
    const Bytes raw = read_file(path);
    const std::string_view buf(reinterpret_cast<const char*>(raw.data()), raw.size());
    std::size_t pos = 0;
    std::uint64_t expected_seq = index * segment_events + 1;
    while (pos < buf.size()) {
      const std::size_t start = pos;
      auto ev = parse_record(buf, pos);
      const bool in_range = ev && ev->seq == expected_seq;
      if (!in_range) {
        // Damage confined to the final line of the final segment is a torn
        // write; anything else means the history is broken.
        const auto nl = buf.find('\n', start);
        const bool final_line = nl == std::string_view::npos || nl + 1 == buf.size();
        if (last_segment && final_line && !ev) {
          result.torn = std::make_pair(path, start);
          break;
        }
        throw Error(ErrorCode::CorruptLog, fmt::format("damaged record at {}:{}", path.string(), start));
      }
      if (expected_seq > (index + 1) * segment_events) {
        throw Error(ErrorCode::CorruptLog, fmt::format("segment {} overflows", path.string()));
      }
      result.last_seq = ev->seq;
      ++expected_seq;
      if (index >= from_segment) visit(std::move(*ev));
    }
    if (!last_segment && expected_seq != (index + 1) * segment_events + 1) {
      throw Error(ErrorCode::CorruptLog, fmt::format("short log segment {}", path.string()));
    }
  }
  return result;
}

}  // namespace

std::string_view to_string(EventKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

std::string frame_event(const Event& event) {
  const nlohmann::json j{{"seq", event.seq},
                         {"kind", std::string(to_string(event.kind))},
                         {"at", format_rfc3339(event.at)},
                         {"payload", event.payload}};
  const std::string body = j.dump();
  return fmt::format("{} {:08x} {}\n", body.size(), mews::crc32(as_bytes(body)), body);
}

void write_file_atomic(const fs::path& path, ByteView data) {
  fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path tmp = path.parent_path() / fmt::format(".{}.{:08x}.tmp", path.filename().string(), rd());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw_io(fmt::format("create {}", tmp.string()));
  try {
    write_all(fd, reinterpret_cast<const char*>(data.data()), data.size(), tmp);
    if (::fsync(fd) != 0) throw_io(fmt::format("fsync {}", tmp.string()));
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    throw_io(fmt::format("rename {}", path.string()));
  }
  fsync_dir(path.parent_path());
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read {}", path.string()));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path BlobStore::path_of(const ContentHash& hash) const { return root_ / hash.str().substr(0, 2) / hash.str(); }

ContentHash BlobStore::put(ByteView bytes) {
  const ContentHash hash = sha256(bytes);
  const fs::path path = path_of(hash);
  if (!fs::exists(path)) write_file_atomic(path, bytes);
  return hash;
}

bool BlobStore::contains(const ContentHash& hash) const { return fs::exists(path_of(hash)); }

Bytes BlobStore::get(const ContentHash& hash) const {
  const fs::path path = path_of(hash);
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, fmt::format("no blob {}", hash.str()));
  return read_file(path);
}

// ---------------------------------------------------------------------------

EventLog::EventLog(fs::path dir, Mode mode, std::uint64_t segment_events)
    : dir_(std::move(dir)), mode_(mode), segment_events_(segment_events == 0 ? kSegmentEvents : segment_events) {
  if (mode_ == Mode::ReadWrite) {
    fs::create_directories(dir_);
    lock_fd_ = ::open((dir_ / "LOCK").c_str(), O_RDWR | O_CREAT, 0644);
    if (lock_fd_ < 0) throw_io(fmt::format("open {}", (dir_ / "LOCK").string()));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(lock_fd_);
      throw Error(ErrorCode::Io, fmt::format("event log {} is locked by another writer", dir_.string()));
    }
  }
  const auto result = scan_log(dir_, segment_events_, ~std::uint64_t{0}, [](Event&&) {});
  last_seq_ = result.last_seq;
  if (result.torn) {
    const auto& [path, offset] = *result.torn;
    truncated_ = static_cast<std::size_t>(fs::file_size(path)) - offset;
    if (mode_ == Mode::ReadWrite) {
      fs::resize_file(path, offset);
      const int fd = ::open(path.c_str(), O_WRONLY);
      if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
      }
    }
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) {
    if (dirty_) ::fsync(fd_);
    ::close(fd_);
  }
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

fs::path EventLog::segment_path(std::uint64_t index) const { return dir_ / fmt::format("events-{}.jsonl", index); }

void EventLog::open_segment_for(std::uint64_t seq) {
  const std::uint64_t index = (seq - 1) / segment_events_;
  if (fd_ >= 0 && fd_segment_ == index) return;
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
    fd_ = -1;
  }
  const fs::path path = segment_path(index);
  const bool fresh = !fs::exists(path);
  fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd_ < 0) throw_io(fmt::format("open {}", path.string()));
  fd_segment_ = index;
  if (fresh) fsync_dir(dir_);
}

std::uint64_t EventLog::append(EventKind kind, nlohmann::json payload, Instant at) {
  std::lock_guard lock(mutex_);
  if (mode_ != Mode::ReadWrite) throw Error(ErrorCode::Io, "event log opened read-only");
  Event ev{last_seq_ + 1, kind, std::move(payload), at};
  open_segment_for(ev.seq);
  const std::string line = frame_event(ev);
  write_all(fd_, line.data(), line.size(), segment_path(fd_segment_));
  dirty_ = true;
  last_seq_ = ev.seq;
  return ev.seq;
}

void EventLog::append(const Event& event) {
  std::lock_guard lock(mutex_);
  if (mode_ != Mode::ReadWrite) throw Error(ErrorCode::Io, "event log opened read-only");
  if (event.seq != last_seq_ + 1) {
    throw Error(ErrorCode::CorruptLog, fmt::format("append of seq {} after {}", event.seq, last_seq_));
  }
  open_segment_for(event.seq);
  const std::string line = frame_event(event);
  write_all(fd_, line.data(), line.size(), segment_path(fd_segment_));
  dirty_ = true;
  last_seq_ = event.seq;
}

void EventLog::sync() {
  std::lock_guard lock(mutex_);
  if (fd_ >= 0 && dirty_) {
    if (::fdatasync(fd_) != 0) throw_io("fdatasync event log");
    dirty_ = false;
  }
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mutex_);
  return last_seq_;
}

std::vector<Event> EventLog::read_from(std::uint64_t after) const {
  std::lock_guard lock(mutex_);
  std::vector<Event> out;
  scan_log(dir_, segment_events_, after / segment_events_, [&](Event&& ev) {
    if (ev.seq > after && ev.seq <= last_seq_) out.push_back(std::move(ev));
  });
  return out;
}

// ---------------------------------------------------------------------------

SnapshotStore::SnapshotStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void SnapshotStore::write(std::uint64_t seq, std::string_view body) {
  std::string data = fmt::format("MEWSSNAP1 {} {} {:08x}\n", seq, body.size(), mews::crc32(as_bytes(body)));
  data.append(body);
  write_file_atomic(dir_ / fmt::format("{}.snap", seq), as_bytes(data));
}

std::vector<std::uint64_t> SnapshotStore::list() const {
  std::vector<std::uint64_t> out;
  if (!fs::exists(dir_)) return out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".snap") continue;
    std::uint64_t seq = 0;
    if (parse_uint(entry.path().stem().string(), seq)) out.push_back(seq);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::pair<std::uint64_t, std::string>> SnapshotStore::latest(std::uint64_t max_seq) const {
  const auto seqs = list();
  for (auto it = seqs.rbegin(); it != seqs.rend(); ++it) {
    if (*it > max_seq) continue;
    Bytes raw;
    try {
      raw = read_file(dir_ / fmt::format("{}.snap", *it));
    } catch (const Error&) {
      continue;
    }
    const std::string_view buf(reinterpret_cast<const char*>(raw.data()), raw.size());
    const auto nl = buf.find('\n');
    if (nl == std::string_view::npos) continue;
    const std::string header(buf.substr(0, nl));
    const std::string_view body = buf.substr(nl + 1);
    const std::string expect =
        fmt::format("MEWSSNAP1 {} {} {:08x}", *it, body.size(), mews::crc32(as_bytes(body)));
    if (header != expect) continue;
    return std::make_pair(*it, std::string(body));
  }
  return std::nullopt;
}

}  // namespace mews
