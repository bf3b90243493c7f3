#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace privmine {

using json = nlohmann::json;

// Stage artifacts start with a metadata line {"artifact": kind, "fingerprint": ...}.
struct ArtifactHeader {
    std::string kind;
    std::string fingerprint;
};

bool is_artifact_header(const json& line);
json make_artifact_header(const ArtifactHeader& header);

// Calls on_record for every JSON object line. Blank lines are skipped.
// A line that fails to parse throws, except a torn final line when
// tolerate_torn_tail is set (an interrupted append), which is reported
// through the return value instead.
struct JsonlReadStats {
    std::size_t records = 0;
    std::optional<ArtifactHeader> header;
    bool torn_tail = false;
    std::uintmax_t intact_bytes = 0;  // where the torn line starts, when torn_tail
};

// Cuts a journal back to its last complete line so later appends do not
// land on the tail of a torn one.
void drop_torn_tail(const std::filesystem::path& path, const JsonlReadStats& stats);

JsonlReadStats read_jsonl(const std::filesystem::path& path,
                          const std::function<void(const json&, std::size_t line_no)>& on_record,
                          bool tolerate_torn_tail = false);

// Writes to a temp file then renames, so readers never see a half-written artifact.
void write_jsonl_atomic(const std::filesystem::path& path,
                        const std::optional<ArtifactHeader>& header,
                        const std::vector<json>& records);

void write_text_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text(const std::filesystem::path& path);

// Append-only journal; every append is flushed before returning.
class AppendLog {
public:
    explicit AppendLog(std::filesystem::path path);

    void append(const json& record);
    const std::filesystem::path& path() const { return m_path; }

private:
    std::filesystem::path m_path;
    std::ofstream m_out;
    std::mutex m_mutex;
};

// 64-bit FNV-1a; used for cache digests and the mock backends.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

// Hex SHA-256 of data.
std::string sha256_hex(std::string_view data);

// UTC timestamp, ISO-8601 with seconds.
std::string utc_timestamp();

} // namespace privmine
