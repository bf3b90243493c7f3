#include "privmine/jsonl.hpp"

#include "privmine/labels.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <sstream>

namespace privmine {

namespace fs = std::filesystem;

bool is_artifact_header(const json& line) {
    return line.is_object() && line.contains("artifact") && line.contains("fingerprint");
}

json make_artifact_header(const ArtifactHeader& header) {
    return json{{"artifact", header.kind}, {"fingerprint", header.fingerprint}};
}

JsonlReadStats read_jsonl(const fs::path& path,
                          const std::function<void(const json&, std::size_t)>& on_record,
                          bool tolerate_torn_tail) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());

    JsonlReadStats stats;
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::pair<std::size_t, std::string>> pending_error;
    std::streamoff line_start = 0;
    std::streamoff torn_at = 0;
    while (true) {
        line_start = in.tellg();
        if (!std::getline(in, line)) break;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (pending_error) {
            // a bad line followed by more data is corruption, not a torn append
            throw ValidationError(path.string() + ":" + std::to_string(pending_error->first) +
                                  ": " + pending_error->second);
        }
        json value;
        try {
            value = json::parse(line);
        } catch (const json::parse_error& e) {
            pending_error.emplace(line_no, e.what());
            torn_at = line_start;
            continue;
        }
        if (!value.is_object())
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected a JSON object");
        if (stats.records == 0 && !stats.header && is_artifact_header(value)) {
            stats.header = ArtifactHeader{value.at("artifact").get<std::string>(),
                                          value.at("fingerprint").get<std::string>()};
            continue;
        }
        on_record(value, line_no);
        ++stats.records;
    }
    if (pending_error) {
        if (!tolerate_torn_tail)
            throw ValidationError(path.string() + ":" + std::to_string(pending_error->first) +
                                  ": " + pending_error->second);
        stats.torn_tail = true;
        stats.intact_bytes = static_cast<std::uintmax_t>(torn_at);
    }
    return stats;
}

void drop_torn_tail(const fs::path& path, const JsonlReadStats& stats) {
    if (stats.torn_tail) fs::resize_file(path, stats.intact_bytes);
}

void write_text_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_jsonl_atomic(const fs::path& path, const std::optional<ArtifactHeader>& header,
                        const std::vector<json>& records) {
    std::string buffer;
    if (header) {
        buffer += make_artifact_header(*header).dump();
        buffer += '\n';
    }
    for (const auto& record : records) {
        buffer += record.dump();
        buffer += '\n';
    }
    write_text_atomic(path, buffer);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

AppendLog::AppendLog(fs::path path) : m_path(std::move(path)) {
    if (m_path.has_parent_path()) fs::create_directories(m_path.parent_path());
    // An interrupted append may have left a partial line; terminate it so the
    // next record starts on its own line.
    bool needs_newline = false;
    if (fs::exists(m_path) && fs::file_size(m_path) > 0) {
        std::ifstream in(m_path, std::ios::binary);
        in.seekg(-1, std::ios::end);
        char last = 0;
        in.get(last);
        needs_newline = last != '\n';
    }
    m_out.open(m_path, std::ios::binary | std::ios::app);
    if (!m_out) throw Error("cannot open journal " + m_path.string());
    if (needs_newline) m_out << '\n';
}

void AppendLog::append(const json& record) {
    std::string line = record.dump();
    line += '\n';
    std::lock_guard lock(m_mutex);
    m_out.write(line.data(), static_cast<std::streamsize>(line.size()));
    m_out.flush();
    if (!m_out) throw Error("append failed for " + m_path.string());
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        out += digits[digest[i] >> 4];
        out += digits[digest[i] & 0xf];
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

} // namespace privmine
