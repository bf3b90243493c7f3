#pragma once

#include "privmine/jsonl.hpp"
#include "privmine/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace privmine {

enum class Platform { google_play, app_store, unknown };

std::string_view to_string(Platform platform);
Platform parse_platform(std::string_view text);

struct Review {
    std::string review_id;
    std::string app;
    Platform platform = Platform::unknown;
    std::string date;
    std::optional<int> rating;
    std::string raw_text;
    std::optional<std::string> clean_text;

    // Text handed to models: the cleaned form once preprocessing has run.
    const std::string& text() const { return clean_text ? *clean_text : raw_text; }

    bool operator==(const Review&) const = default;
};

json to_json(const Review& review);
Review review_from_json(const json& value);

// Ordered, immutable set of reviews with unique ids.
class ReviewCollection {
public:
    ReviewCollection() = default;
    // Throws ValidationError on a duplicate review_id or an out-of-range rating.
    ReviewCollection(std::vector<Review> reviews, std::string source_uri,
                     std::string ingested_at = utc_timestamp());

    std::span<const Review> reviews() const { return m_reviews; }
    std::size_t size() const { return m_reviews.size(); }
    bool empty() const { return m_reviews.empty(); }
    const Review& operator[](std::size_t i) const { return m_reviews[i]; }
    auto begin() const { return m_reviews.begin(); }
    auto end() const { return m_reviews.end(); }

    const Review* find(std::string_view review_id) const;

    const std::string& source_uri() const { return m_source_uri; }
    const std::string& ingested_at() const { return m_ingested_at; }

private:
    std::vector<Review> m_reviews;
    std::unordered_map<std::string, std::size_t> m_index;
    std::string m_source_uri;
    std::string m_ingested_at;
};

enum class InputFormat { csv, jsonl };

InputFormat parse_input_format(std::string_view text);

// Source column (CSV header) or field (JSONL key) for each Review field.
struct ColumnMap {
    std::string review_id = "review_id";
    std::string text = "text";
    std::string app = "app";
    std::string rating = "rating";
    std::string date = "date";
    std::string platform = "platform";
};

class CorpusError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// The file parsed but held no usable record.
class EmptyCorpusError : public CorpusError {
public:
    using CorpusError::CorpusError;
};

struct LoadResult {
    ReviewCollection collection;
    std::size_t skipped = 0;
};

// Records without text (or with a rating outside 1-5) are skipped and
// counted. Reviews without an id column get "r<record number>".
LoadResult load_reviews(const std::filesystem::path& source, InputFormat format,
                        const ColumnMap& columns = {});

// RFC 4180 CSV: quoted fields, doubled quotes, embedded newlines, CRLF.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

// Lowercases, deletes everything except letters, digits and apostrophes,
// collapses whitespace runs to one space and trims. Latin-1 letters are
// folded to their ASCII base; other non-ASCII letters are dropped. The
// output alphabet is [a-z0-9' ].
std::string preprocess(std::string_view raw_text);

ReviewCollection preprocess_all(const ReviewCollection& collection);

// Reviews with a rating <= max_rating, order preserved. Unrated reviews
// are dropped.
ReviewCollection filter_by_rating(const ReviewCollection& collection, int max_rating);

void save_reviews(const ReviewCollection& collection, const std::filesystem::path& path,
                  const std::optional<ArtifactHeader>& header = std::nullopt);

} // namespace privmine
