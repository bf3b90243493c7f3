#include "privmine/corpus.hpp"

#include <charconv>
#include <cmath>
#include <unordered_set>

namespace privmine {

namespace fs = std::filesystem;

std::string_view to_string(Platform platform) {
    switch (platform) {
    case Platform::google_play: return "google-play";
    case Platform::app_store: return "app-store";
    case Platform::unknown: break;
    }
    return "unknown";
}

Platform parse_platform(std::string_view text) {
    std::string lower;
    for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "google-play" || lower == "google play" || lower == "google_play" ||
        lower == "play" || lower == "android" || lower == "googleplay")
        return Platform::google_play;
    if (lower == "app-store" || lower == "app store" || lower == "app_store" ||
        lower == "appstore" || lower == "ios" || lower == "apple")
        return Platform::app_store;
    return Platform::unknown;
}

json to_json(const Review& review) {
    json out{{"review_id", review.review_id},
             {"app", review.app},
             {"platform", to_string(review.platform)},
             {"date", review.date},
             {"rating", nullptr},
             {"raw_text", review.raw_text},
             {"clean_text", nullptr}};
    if (review.rating) out["rating"] = *review.rating;
    if (review.clean_text) out["clean_text"] = *review.clean_text;
    return out;
}

Review review_from_json(const json& value) {
    Review review;
    review.review_id = value.at("review_id").get<std::string>();
    review.app = value.value("app", std::string{});
    review.platform = parse_platform(value.value("platform", std::string{"unknown"}));
    review.date = value.value("date", std::string{});
    if (value.contains("rating") && !value.at("rating").is_null())
        review.rating = value.at("rating").get<int>();
    review.raw_text = value.at("raw_text").get<std::string>();
    if (value.contains("clean_text") && !value.at("clean_text").is_null())
        review.clean_text = value.at("clean_text").get<std::string>();
    return review;
}

ReviewCollection::ReviewCollection(std::vector<Review> reviews, std::string source_uri,
                                   std::string ingested_at)
    : m_reviews(std::move(reviews)),
      m_source_uri(std::move(source_uri)),
      m_ingested_at(std::move(ingested_at)) {
    m_index.reserve(m_reviews.size());
    for (std::size_t i = 0; i < m_reviews.size(); ++i) {
        const Review& review = m_reviews[i];
        if (review.rating && (*review.rating < 1 || *review.rating > 5))
            throw CorpusError("review " + review.review_id + ": rating " +
                              std::to_string(*review.rating) + " outside 1-5");
        if (!m_index.emplace(review.review_id, i).second)
            throw CorpusError("duplicate review_id " + review.review_id);
    }
}

const Review* ReviewCollection::find(std::string_view review_id) const {
    auto it = m_index.find(std::string(review_id));
    return it == m_index.end() ? nullptr : &m_reviews[it->second];
}

InputFormat parse_input_format(std::string_view text) {
    if (text == "csv") return InputFormat::csv;
    if (text == "jsonl") return InputFormat::jsonl;
    throw CorpusError("unknown format '" + std::string(text) + "' (expected csv or jsonl)");
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);

    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        // a line holding nothing at all is not a record
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field_started && field.empty()) {
                quoted = true;
                field_started = true;
            } else {
                field += c;
            }
            break;
        case ',': end_field(); break;
        case '\r':
            if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
            end_row();
            break;
        case '\n': end_row(); break;
        default:
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw CorpusError("unterminated quoted CSV field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

namespace {

struct RawRecord {
    std::optional<std::string> review_id;
    std::optional<std::string> text;
    std::string app;
    std::string date;
    std::string platform;
    std::optional<std::string> rating;
};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Returns false when a rating is present but not an integer in 1-5.
bool parse_rating(const std::optional<std::string>& raw, std::optional<int>& out) {
    out.reset();
    if (!raw) return true;
    const std::string text = trim(*raw);
    if (text.empty()) return true;
    double value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return false;
    if (value != std::floor(value) || value < 1 || value > 5) return false;
    out = static_cast<int>(value);
    return true;
}

std::optional<std::string> json_field_as_string(const json& record, const std::string& key) {
    if (key.empty() || !record.contains(key)) return std::nullopt;
    const json& v = record.at(key);
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
        const double d = v.get<double>();
        if (d == std::floor(d)) return std::to_string(static_cast<long long>(d));
        return v.dump();
    }
    return v.dump();
}

std::vector<RawRecord> read_csv_records(const fs::path& source, const ColumnMap& columns) {
    const auto rows = parse_csv(read_text(source));
    if (rows.empty()) return {};
    const auto& header = rows.front();
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        return std::nullopt;
    };
    const auto text_col = column(columns.text);
    if (!text_col)
        throw CorpusError(source.string() + ": required column '" + columns.text + "' missing");
    const auto id_col = column(columns.review_id);
    const auto app_col = column(columns.app);
    const auto rating_col = column(columns.rating);
    const auto date_col = column(columns.date);
    const auto platform_col = column(columns.platform);

    std::vector<RawRecord> records;
    records.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto get = [&](const std::optional<std::size_t>& col) -> std::optional<std::string> {
            if (!col || *col >= row.size()) return std::nullopt;
            return row[*col];
        };
        RawRecord rec;
        rec.review_id = get(id_col);
        rec.text = get(text_col);
        rec.app = get(app_col).value_or("");
        rec.date = get(date_col).value_or("");
        rec.platform = get(platform_col).value_or("");
        rec.rating = get(rating_col);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<RawRecord> read_jsonl_records(const fs::path& source, const ColumnMap& columns) {
    std::vector<RawRecord> records;
    read_jsonl(source, [&](const json& value, std::size_t) {
        RawRecord rec;
        rec.review_id = json_field_as_string(value, columns.review_id);
        rec.text = json_field_as_string(value, columns.text);
        // stage artifacts carry the original text as raw_text
        if (!rec.text && columns.text == "text") rec.text = json_field_as_string(value, "raw_text");
        rec.app = json_field_as_string(value, columns.app).value_or("");
        rec.date = json_field_as_string(value, columns.date).value_or("");
        rec.platform = json_field_as_string(value, columns.platform).value_or("");
        rec.rating = json_field_as_string(value, columns.rating);
        records.push_back(std::move(rec));
    });
    return records;
}

} // namespace

LoadResult load_reviews(const fs::path& source, InputFormat format, const ColumnMap& columns) {
    if (!fs::is_regular_file(source))
        throw CorpusError("cannot read " + source.string() + ": not a readable file");

    const auto raw = format == InputFormat::csv ? read_csv_records(source, columns)
                                                : read_jsonl_records(source, columns);
    std::vector<Review> reviews;
    reviews.reserve(raw.size());
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const RawRecord& rec = raw[i];
        if (!rec.text || trim(*rec.text).empty()) {
            ++skipped;
            continue;
        }
        Review review;
        if (!parse_rating(rec.rating, review.rating)) {
            ++skipped;
            continue;
        }
        review.review_id = rec.review_id && !trim(*rec.review_id).empty()
                               ? trim(*rec.review_id)
                               : "r" + std::to_string(i + 1);
        review.raw_text = *rec.text;
        review.app = rec.app;
        review.date = trim(rec.date);
        review.platform = parse_platform(trim(rec.platform));
        reviews.push_back(std::move(review));
    }
    if (reviews.empty())
        throw EmptyCorpusError(source.string() + ": zero parseable records");
    return LoadResult{ReviewCollection(std::move(reviews), source.string()), skipped};
}

namespace {

// Decodes one code point; invalid sequences yield U+FFFD and consume one byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char lead = byte(i);
    if (lead < 0x80) {
        ++i;
        return lead;
    }
    std::size_t length = 0;
    char32_t cp = 0;
    if ((lead & 0xE0) == 0xC0) {
        length = 2;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        length = 3;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        length = 4;
        cp = lead & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + length > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (std::size_t k = 1; k < length; ++k) {
        const unsigned char cont = byte(i + k);
        if ((cont & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (cont & 0x3F);
    }
    i += length;
    return cp;
}

bool is_unicode_space(char32_t cp) {
    switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_apostrophe(char32_t cp) {
    return cp == U'\'' || cp == 0x2018 || cp == 0x2019 || cp == 0x02BC;
}

// ASCII folding for U+00C0..U+00FF; empty entries are not letters.
constexpr const char* kLatin1Fold[64] = {
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "y",
};

} // namespace

std::string preprocess(std::string_view raw_text) {
    std::string out;
    out.reserve(raw_text.size());
    bool pending_space = false;
    auto emit = [&](std::string_view piece) {
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += piece;
    };
    std::size_t i = 0;
    while (i < raw_text.size()) {
        const char32_t cp = next_code_point(raw_text, i);
        if (cp < 0x80) {
            const char c = static_cast<char>(cp);
            if (c >= 'A' && c <= 'Z') {
                const char lower = static_cast<char>(c - 'A' + 'a');
                emit(std::string_view(&lower, 1));
            } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') {
                emit(std::string_view(&c, 1));
            } else if (is_unicode_space(cp)) {
                pending_space = true;
            }
        } else if (cp >= 0xC0 && cp <= 0xFF) {
            const char* folded = kLatin1Fold[cp - 0xC0];
            if (*folded) emit(folded);
        } else if (is_apostrophe(cp)) {
            emit("'");
        } else if (is_unicode_space(cp)) {
            pending_space = true;
        }
    }
    return out;
}

ReviewCollection preprocess_all(const ReviewCollection& collection) {
    std::vector<Review> reviews(collection.begin(), collection.end());
    for (Review& review : reviews) review.clean_text = preprocess(review.raw_text);
    return ReviewCollection(std::move(reviews), collection.source_uri(), collection.ingested_at());
}

ReviewCollection filter_by_rating(const ReviewCollection& collection, int max_rating) {
    if (max_rating < 1 || max_rating > 5)
        throw ValidationError("max_rating " + std::to_string(max_rating) + " outside 1-5");
    std::vector<Review> kept;
    for (const Review& review : collection)
        if (review.rating && *review.rating <= max_rating) kept.push_back(review);
    return ReviewCollection(std::move(kept), collection.source_uri(), collection.ingested_at());
}

void save_reviews(const ReviewCollection& collection, const fs::path& path,
                  const std::optional<ArtifactHeader>& header) {
    std::vector<json> records;
    records.reserve(collection.size());
    for (const Review& review : collection) records.push_back(to_json(review));
    write_jsonl_atomic(path, header, records);
}

} // namespace privmine
