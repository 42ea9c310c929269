#pragma once

// Spatial metadata: detections and dominant cell colors become tokens of the
// form <codloc><codclass>, e.g. "c4person" for a person in row 2, column 4 of
// the 7x7 grid. Queries place class constraints on cells and combine them
// with AND/OR; tags and OCR text are searched with a normalized Levenshtein
// similarity.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vidret/error.hpp"
#include "vidret/types.hpp"

namespace vidret::meta {

inline constexpr int kGridSize = 7;
inline constexpr int kCellCount = kGridSize * kGridSize;
/// Fraction of a cell a box must cover to be tokenized there.
inline constexpr double kCellCoverage = 0.15;
inline constexpr double kDefaultFuzziness = 0.25;

inline constexpr std::array<std::string_view, 11> kPalette = {
    "white", "black", "red", "green", "yellow", "blue", "brown", "purple", "pink", "orange", "gray"};

struct Detection {
    std::string class_name;
    double confidence = 1.0;
    std::array<double, 4> bbox{}; // x1, y1, x2, y2 normalized
};

struct KeyframeRecord {
    KeyframeId id;
    std::set<std::string> grid_tokens;
    std::set<std::string> color_tokens;
    std::string tag_string;
    std::string ocr_text;
};

struct GridCell {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridToken {
    GridCell cell;
    std::string codclass;
};

enum class LogicalOp { And, Or };

struct GridConstraint {
    GridCell cell;
    std::string class_name;
};

struct GridQuery {
    std::vector<GridConstraint> constraints;
    LogicalOp op = LogicalOp::And;
    double fuzziness = kDefaultFuzziness;
};

enum class TextField { Ocr, Tags };

// ---------------------------------------------------------------------------
// Token grammar

inline std::string codloc(GridCell cell) {
    return {static_cast<char>('a' + cell.row), static_cast<char>('0' + cell.col)};
}

inline std::optional<GridCell> parse_codloc(std::string_view s) {
    if (s.size() != 2 || s[0] < 'a' || s[0] >= 'a' + kGridSize || s[1] < '0' || s[1] >= '0' + kGridSize) {
        return std::nullopt;
    }
    return GridCell{s[0] - 'a', s[1] - '0'};
}

inline bool is_codclass_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; }

/// Lowercase; whitespace and anything outside [a-z0-9_] become '_'.
inline std::string normalize_class(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char ch : name) {
        char c = (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
        out.push_back(is_codclass_char(c) ? c : '_');
    }
    return out;
}

inline std::optional<GridToken> parse_token(std::string_view token) {
    if (token.size() < 3) return std::nullopt;
    auto cell = parse_codloc(token.substr(0, 2));
    if (!cell) return std::nullopt;
    auto cls = token.substr(2);
    if (!std::all_of(cls.begin(), cls.end(), is_codclass_char)) return std::nullopt;
    return GridToken{*cell, std::string(cls)};
}

// ---------------------------------------------------------------------------
// Encoding

struct EncodedDetections {
    std::set<std::string> grid_tokens;
    std::string tag_string;
};

inline GridCell cell_of_point(double x, double y) {
    auto idx = [](double v) { return std::clamp(static_cast<int>(std::floor(v * kGridSize)), 0, kGridSize - 1); };
    return {idx(y), idx(x)};
}

inline void validate(const Detection& d) {
    const auto& b = d.bbox;
    if (d.class_name.empty()) {
        fail(ErrorCode::InvalidArgument, "detection has an empty class name");
    }
    if (!(b[0] >= 0.0 && b[0] < b[2] && b[2] <= 1.0 && b[1] >= 0.0 && b[1] < b[3] && b[3] <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "detection bbox must satisfy 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1");
    }
}

/// Cells where a box covers at least kCellCoverage of the cell area, plus the
/// cell holding the box center.
inline std::vector<GridCell> covered_cells(const std::array<double, 4>& b) {
    std::vector<GridCell> cells;
    const double cell = 1.0 / kGridSize;
    const GridCell center = cell_of_point(0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]));
    for (int r = 0; r < kGridSize; ++r) {
        const double overlap_h = std::min(b[3], (r + 1) * cell) - std::max(b[1], r * cell);
        for (int c = 0; c < kGridSize; ++c) {
            const double overlap_w = std::min(b[2], (c + 1) * cell) - std::max(b[0], c * cell);
            const bool covered = overlap_h > 0.0 && overlap_w > 0.0 &&
                                 overlap_h * overlap_w * kCellCount >= kCellCoverage;
            if (covered || GridCell{r, c} == center) {
                cells.push_back({r, c});
            }
        }
    }
    return cells;
}

inline EncodedDetections encode_detections(const std::vector<Detection>& dets) {
    EncodedDetections out;
    std::map<std::string, int> counts;
    for (const auto& d : dets) {
        validate(d);
        const std::string cls = normalize_class(d.class_name);
        ++counts[cls];
        for (const auto& cell : covered_cells(d.bbox)) {
            out.grid_tokens.insert(codloc(cell) + cls);
        }
    }
    std::vector<std::string> entries;
    for (const auto& [cls, n] : counts) entries.push_back(cls + std::to_string(n));
    std::sort(entries.begin(), entries.end());
    for (const auto& e : entries) {
        if (!out.tag_string.empty()) out.tag_string.push_back(' ');
        out.tag_string += e;
    }
    return out;
}

inline bool is_empty_color(std::string_view label) { return label.empty() || label == "empty"; }

/// Row-major 7x7 dominant-color labels; "" (or "empty") marks a cell without one.
inline std::set<std::string> encode_colors(const std::array<std::string, kCellCount>& labels) {
    std::set<std::string> out;
    for (int i = 0; i < kCellCount; ++i) {
        const std::string label = normalize_class(labels[static_cast<std::size_t>(i)]);
        if (is_empty_color(label)) continue;
        if (std::find(kPalette.begin(), kPalette.end(), label) == kPalette.end()) {
            fail(ErrorCode::UnknownColorTerm, "unknown color term '" + labels[static_cast<std::size_t>(i)] + "'");
        }
        out.insert(codloc({i / kGridSize, i % kGridSize}) + label);
    }
    return out;
}

/// Representative RGB per palette entry, same order as kPalette.
inline constexpr std::array<std::array<int, 3>, 11> kPaletteRgb = {{{255, 255, 255},
                                                                    {0, 0, 0},
                                                                    {220, 20, 30},
                                                                    {30, 150, 40},
                                                                    {250, 230, 30},
                                                                    {30, 60, 220},
                                                                    {130, 80, 30},
                                                                    {130, 40, 160},
                                                                    {250, 160, 200},
                                                                    {250, 140, 20},
                                                                    {128, 128, 128}}};

/// Nearest palette term to an RGB triple (demo data only).
inline std::string_view nearest_color(int r, int g, int b) {
    std::size_t best = 0;
    int best_d = INT32_MAX;
    for (std::size_t i = 0; i < kPaletteRgb.size(); ++i) {
        const int dr = r - kPaletteRgb[i][0], dg = g - kPaletteRgb[i][1], db = b - kPaletteRgb[i][2];
        const int d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return kPalette[best];
}

inline std::array<int, 3> palette_rgb(std::string_view color) {
    for (std::size_t i = 0; i < kPalette.size(); ++i) {
        if (kPalette[i] == color) return kPaletteRgb[i];
    }
    return {200, 200, 200};
}

// ---------------------------------------------------------------------------
// Fuzzy matching

/// UTF-8 to code points with ASCII lowercasing; invalid bytes pass through as
/// single units.
inline std::u32string fold(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        char32_t cp = c;
        if (c >= 0xC0 && c < 0xE0) { len = 2; cp = c & 0x1F; }
        else if (c >= 0xE0 && c < 0xF0) { len = 3; cp = c & 0x0F; }
        else if (c >= 0xF0 && c < 0xF8) { len = 4; cp = c & 0x07; }
        bool ok = i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            ok = (cc & 0xC0) == 0x80;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!ok) {
            len = 1;
            cp = c;
        }
        if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// 1 - levenshtein / max length, case-insensitive; two empty strings score 1.
inline double fuzzy_score(std::string_view a, std::string_view b) {
    const auto fa = fold(a);
    const auto fb = fold(b);
    const std::size_t len = std::max(fa.size(), fb.size());
    if (len == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(fa, fb)) / static_cast<double>(len);
}

inline std::string lowercase_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < s.size()) {
        while (i < s.size() && space(s[i])) ++i;
        const std::size_t start = i;
        while (i < s.size() && !space(s[i])) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

/// Searchable tokens of a tag string: each "classN" entry and its bare class.
inline std::vector<std::string> tag_tokens(std::string_view tag_string) {
    std::vector<std::string> out;
    for (auto& entry : split_words(lowercase_ascii(tag_string))) {
        std::size_t end = entry.size();
        while (end > 0 && entry[end - 1] >= '0' && entry[end - 1] <= '9') --end;
        if (end > 0 && end < entry.size()) out.push_back(entry.substr(0, end));
        out.push_back(std::move(entry));
    }
    return out;
}

inline void validate(const GridQuery& q) {
    if (q.constraints.empty()) {
        fail(ErrorCode::InvalidQuery, "grid query needs at least one constraint");
    }
    if (!(q.fuzziness >= 0.0 && q.fuzziness <= 1.0)) {
        fail(ErrorCode::InvalidQuery, "fuzziness must be in [0, 1]");
    }
    for (const auto& c : q.constraints) {
        if (c.cell.row < 0 || c.cell.row >= kGridSize || c.cell.col < 0 || c.cell.col >= kGridSize) {
            fail(ErrorCode::InvalidQuery, "grid cell out of range");
        }
        if (normalize_class(c.class_name).empty()) {
            fail(ErrorCode::InvalidQuery, "grid constraint needs a class name");
        }
    }
}

// ---------------------------------------------------------------------------
// Index

/// Immutable metadata index over keyframe records. Grid and color tokens are
/// posted per cell; tag and OCR words are posted per distinct word.
class MetadataIndex {
public:
    MetadataIndex() = default;

    explicit MetadataIndex(std::vector<KeyframeRecord> records) : records_(std::move(records)) {
        for (std::uint32_t r = 0; r < records_.size(); ++r) {
            const auto& rec = records_[r];
            for (const auto* tokens : {&rec.grid_tokens, &rec.color_tokens}) {
                for (const auto& t : *tokens) {
                    auto parsed = parse_token(t);
                    if (!parsed) {
                        fail(ErrorCode::InvalidArgument, "malformed grid token '" + t + "'");
                    }
                    cells_[static_cast<std::size_t>(parsed->cell.row * kGridSize + parsed->cell.col)].push_back(
                        {r, parsed->codclass});
                }
            }
            auto ocr_words = split_words(lowercase_ascii(rec.ocr_text));
            add_field(ocr_, r, ocr_words, join_words(ocr_words));
            add_field(tags_, r, tag_tokens(rec.tag_string), join_words(split_words(lowercase_ascii(rec.tag_string))));
        }
    }

    const std::vector<KeyframeRecord>& records() const { return records_; }

    RankedList grid_search(const GridQuery& q, std::size_t top_k) const {
        validate(q);
        const double threshold = 1.0 - q.fuzziness;
        const std::size_t nc = q.constraints.size();
        // record -> per-constraint quality; negative means unmatched.
        std::unordered_map<std::uint32_t, std::vector<double>> quality;
        for (std::size_t j = 0; j < nc; ++j) {
            const auto& c = q.constraints[j];
            const std::string cls = normalize_class(c.class_name);
            std::unordered_map<std::string, double> cache;
            std::unordered_map<std::uint32_t, double> best;
            for (const auto& posting : cells_[static_cast<std::size_t>(c.cell.row * kGridSize + c.cell.col)]) {
                auto [it, fresh] = cache.try_emplace(posting.codclass, 0.0);
                if (fresh) it->second = fuzzy_score(cls, posting.codclass);
                auto [bt, inserted] = best.try_emplace(posting.record, it->second);
                if (!inserted) bt->second = std::max(bt->second, it->second);
            }
            for (const auto& [rec, score] : best) {
                if (score < threshold) continue;
                auto& qs = quality.try_emplace(rec, std::vector<double>(nc, -1.0)).first->second;
                qs[j] = score;
            }
        }

        RankedList out;
        out.origin = "grid";
        for (const auto& [rec, qs] : quality) {
            double score = 0.0;
            bool all = true;
            for (double v : qs) {
                if (v < 0.0) {
                    all = false;
                } else {
                    score += v;
                }
            }
            if (q.op == LogicalOp::And && !all) continue;
            out.hits.push_back({records_[rec].id, score});
        }
        finish(out, top_k);
        return out;
    }

    RankedList text_search(TextField field, std::string_view query, std::size_t top_k,
                           double fuzziness = kDefaultFuzziness) const {
        const auto words = split_words(lowercase_ascii(query));
        if (words.empty()) {
            fail(ErrorCode::InvalidQuery, "text query is empty");
        }
        if (!(fuzziness >= 0.0 && fuzziness <= 1.0)) {
            fail(ErrorCode::InvalidQuery, "fuzziness must be in [0, 1]");
        }
        const FieldIndex& fi = field == TextField::Ocr ? ocr_ : tags_;
        const double threshold = 1.0 - fuzziness;
        const std::string phrase = join_words(words);

        // Per query word, best admissible similarity per record.
        std::unordered_map<std::uint32_t, std::vector<double>> best;
        for (std::size_t w = 0; w < words.size(); ++w) {
            for (const auto& [token, postings] : fi.postings) {
                const double s = fuzzy_score(words[w], token);
                if (s < threshold) continue;
                for (std::uint32_t rec : postings) {
                    auto& v = best.try_emplace(rec, std::vector<double>(words.size(), 0.0)).first->second;
                    v[w] = std::max(v[w], s);
                }
            }
        }

        RankedList out;
        out.origin = field == TextField::Ocr ? "ocr" : "tags";
        for (std::uint32_t r = 0; r < records_.size(); ++r) {
            double score = 0.0;
            if (fi.text[r].find(phrase) != std::string::npos) {
                score = 1.0;
            } else if (auto it = best.find(r); it != best.end()) {
                for (double v : it->second) score += v;
                score /= static_cast<double>(words.size());
            }
            if (score > 0.0) out.hits.push_back({records_[r].id, score});
        }
        finish(out, top_k);
        return out;
    }

private:
    struct CellPosting {
        std::uint32_t record;
        std::string codclass;
    };

    struct FieldIndex {
        std::map<std::string, std::vector<std::uint32_t>> postings;
        std::vector<std::string> text; // normalized field text per record
    };

    static void add_field(FieldIndex& fi, std::uint32_t rec, const std::vector<std::string>& tokens,
                          std::string text) {
        for (const auto& t : tokens) {
            auto& p = fi.postings[t];
            if (p.empty() || p.back() != rec) p.push_back(rec);
        }
        fi.text.push_back(std::move(text));
    }

    static void finish(RankedList& list, std::size_t top_k) {
        std::sort(list.hits.begin(), list.hits.end(), hit_before);
        if (list.hits.size() > top_k) list.hits.resize(top_k);
    }

    std::vector<KeyframeRecord> records_;
    std::array<std::vector<CellPosting>, kCellCount> cells_;
    FieldIndex ocr_;
    FieldIndex tags_;
};

} // namespace vidret::meta
