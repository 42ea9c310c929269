#pragma once

// Request handling shared by the CLI and the HTTP service: JSON requests in,
// JSON documents out. Both front ends serialize with serialize() so their
// output is byte-identical.
//
// Stage query (POST /api/search body, or one entry of "stages"):
//   {"kind": "embedding", "space": "clip", "text": "..." | "vector": [...],
//    "expand": false, "variants": 3, "language_hint": "vi", "translate": false, "top_k": 100}
//   {"kind": "metadata", "grid": {"constraints": [{"cell": "c4", "class": "person"}],
//    "operator": "and", "fuzziness": 0.25}, "tags": "...", "ocr": "...", "top_k": 100}
//   {"kind": "multi", "queries": [stage, ...], "top_k": 100}
// Search requests may add "page" (1-based) and "page_size" (10, 20 or 50).
//
// Temporal request (POST /api/temporal-search):
//   {"stages": [stage, ...], "window": 10, "top_k": 100, "page": 1, "page_size": 20}

#include <array>
#include <chrono>
#include <filesystem>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vidret/error.hpp"
#include "vidret/fusion.hpp"
#include "vidret/grid_meta.hpp"
#include "vidret/ingest.hpp"
#include "vidret/providers.hpp"

namespace vidret::engine {

using json = nlohmann::json;

inline constexpr std::size_t kDefaultTopK = 100;
inline constexpr std::size_t kMaxTopK = 100000;
inline constexpr int kRequestTimeoutMs = 30000;
inline constexpr std::array<int, 3> kPageSizes = {10, 20, 50};
inline constexpr std::size_t kMinStages = 2;
inline constexpr std::size_t kMaxStages = 4;
inline constexpr int kDefaultNeighbors = 10;
inline constexpr int kMaxNeighbors = 200;

inline std::string serialize(const json& j) { return j.dump() + "\n"; }

inline json error_json(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

inline int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::ProviderUnavailable: return 503;
    case ErrorCode::IoError:
    case ErrorCode::ManifestError: return 500;
    default: return 400;
    }
}

struct EngineOptions {
    int request_timeout_ms = kRequestTimeoutMs;
};

namespace detail {

[[noreturn]] inline void bad(const std::string& msg) { fail(ErrorCode::InvalidQuery, msg); }

inline const json* get(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() || it->is_null() ? nullptr : &*it;
}

inline std::string get_string(const json& j, const char* key, const std::string& fallback = {}) {
    const json* v = get(j, key);
    if (!v) return fallback;
    if (!v->is_string()) bad(std::string("'") + key + "' must be a string");
    return v->get<std::string>();
}

inline bool get_bool(const json& j, const char* key, bool fallback) {
    const json* v = get(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) bad(std::string("'") + key + "' must be a boolean");
    return v->get<bool>();
}

inline long long get_int(const json& j, const char* key, long long fallback, long long lo, long long hi) {
    const json* v = get(j, key);
    if (!v) return fallback;
    if (!v->is_number_integer() && !v->is_number_unsigned()) bad(std::string("'") + key + "' must be an integer");
    const long long x = v->get<long long>();
    if (x < lo || x > hi) {
        bad(std::string("'") + key + "' must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
}

inline double get_number(const json& j, const char* key, double fallback) {
    const json* v = get(j, key);
    if (!v) return fallback;
    if (!v->is_number()) bad(std::string("'") + key + "' must be a number");
    return v->get<double>();
}

inline std::string lower(std::string s) { return meta::lowercase_ascii(s); }

inline meta::GridQuery parse_grid(const json& g) {
    if (!g.is_object()) bad("'grid' must be an object");
    meta::GridQuery q;
    const json* cs = get(g, "constraints");
    if (!cs || !cs->is_array() || cs->empty()) bad("'grid.constraints' must be a non-empty array");
    for (const auto& c : *cs) {
        if (!c.is_object()) bad("grid constraint must be an object");
        const std::string cell = get_string(c, "cell");
        const auto parsed = meta::parse_codloc(lower(cell));
        if (!parsed) bad("grid cell '" + cell + "' is not a codloc (a0..g6)");
        const std::string cls = get_string(c, "class");
        if (cls.empty()) bad("grid constraint needs a 'class'");
        q.constraints.push_back({*parsed, cls});
    }
    const std::string op = lower(get_string(g, "operator", "and"));
    if (op == "and") q.op = meta::LogicalOp::And;
    else if (op == "or") q.op = meta::LogicalOp::Or;
    else bad("'grid.operator' must be \"and\" or \"or\"");
    q.fuzziness = get_number(g, "fuzziness", meta::kDefaultFuzziness);
    return q;
}

inline json id_json(const KeyframeId& id) {
    return {{"video_id", id.video_id},
            {"keyframe_index", id.keyframe_index},
            {"frame_number", id.frame_number},
            {"timestamp_ms", id.timestamp_ms},
            {"media_url", "/media/" + id.video_id + "/" + std::to_string(id.keyframe_index) + ".jpg"}};
}

struct Page {
    std::size_t begin = 0;
    std::size_t end = 0;
    json meta;
};

inline Page paginate(const json& req, std::size_t total) {
    Page p;
    const json* ps = get(req, "page_size");
    const long long page = get_int(req, "page", 1, 1, 1LL << 40);
    p.meta["total"] = total;
    p.meta["page"] = page;
    if (!ps) {
        if (page != 1) bad("'page' needs 'page_size'");
        p.end = total;
        p.meta["page_size"] = nullptr;
        p.meta["pages"] = 1;
        return p;
    }
    const long long size = get_int(req, "page_size", 0, 1, 1000);
    if (std::find(kPageSizes.begin(), kPageSizes.end(), size) == kPageSizes.end()) {
        bad("'page_size' must be 10, 20 or 50");
    }
    p.meta["page_size"] = size;
    p.meta["pages"] = (total + static_cast<std::size_t>(size) - 1) / static_cast<std::size_t>(size);
    p.begin = std::min<std::size_t>(total, static_cast<std::size_t>((page - 1) * size));
    p.end = std::min<std::size_t>(total, p.begin + static_cast<std::size_t>(size));
    return p;
}

} // namespace detail

class Engine {
public:
    Engine(std::shared_ptr<const Corpus> corpus, providers::ProviderSet providers, EngineOptions opts = {})
        : corpus_(std::move(corpus)), providers_(std::move(providers)), opts_(opts) {
        if (!corpus_) fail(ErrorCode::InvalidArgument, "engine needs a corpus");
    }

    const Corpus& corpus() const { return *corpus_; }

    /// Resolves one stage query to a ranked list. `info` (optional) receives
    /// per-stage details such as the expansion variants used.
    RankedList run_stage(const json& stage, providers::Deadline deadline, json* info = nullptr) const {
        if (!stage.is_object()) detail::bad("stage query must be a JSON object");
        const std::string kind = detail::lower(detail::get_string(stage, "kind"));
        const auto top_k = static_cast<std::size_t>(detail::get_int(stage, "top_k", kDefaultTopK, 1, kMaxTopK));
        if (kind == "embedding") return run_embedding(stage, top_k, deadline, info);
        if (kind == "metadata") return run_metadata(stage, top_k);
        if (kind == "multi") {
            const json* qs = detail::get(stage, "queries");
            if (!qs || !qs->is_array() || qs->empty()) detail::bad("'queries' must be a non-empty array");
            std::vector<RankedList> lists;
            for (const auto& q : *qs) lists.push_back(run_stage(q, deadline));
            return fusion::rrf_fuse(lists, fusion::kDefaultRrfK, top_k);
        }
        detail::bad("'kind' must be \"embedding\", \"metadata\" or \"multi\"");
    }

    json search(const json& request) const {
        const auto deadline = request_deadline();
        json info = json::object();
        const RankedList list = run_stage(request, deadline, &info);
        const auto page = detail::paginate(request, list.hits.size());
        json out = page.meta;
        out["kind"] = detail::lower(detail::get_string(request, "kind"));
        out["origin"] = list.origin;
        out["space"] = list.space;
        for (const auto& [k, v] : info.items()) out[k] = v;
        json hits = json::array();
        for (std::size_t i = page.begin; i < page.end; ++i) {
            json h = detail::id_json(list.hits[i].id);
            h["rank"] = i + 1;
            h["score"] = list.hits[i].score;
            hits.push_back(std::move(h));
        }
        out["hits"] = std::move(hits);
        return out;
    }

    json temporal_search(const json& request) const {
        if (!request.is_object()) detail::bad("temporal request must be a JSON object");
        const auto deadline = request_deadline();
        const json* stages = detail::get(request, "stages");
        if (!stages || !stages->is_array()) detail::bad("'stages' must be an array");
        if (stages->size() < kMinStages || stages->size() > kMaxStages) {
            detail::bad("temporal search needs 2 to 4 stages");
        }
        fusion::FusionConfig cfg;
        cfg.window = static_cast<std::uint32_t>(detail::get_int(request, "window", fusion::kDefaultWindow, 1, 1000000));
        cfg.top_k = static_cast<std::size_t>(detail::get_int(request, "top_k", kDefaultTopK, 1, kMaxTopK));
        std::vector<RankedList> lists;
        json stage_info = json::array();
        for (const auto& s : *stages) {
            json info = json::object();
            lists.push_back(run_stage(s, deadline, &info));
            info["origin"] = lists.back().origin;
            info["total"] = lists.back().hits.size();
            stage_info.push_back(std::move(info));
        }
        const auto result = fusion::temporal_fuse(lists, cfg);
        const auto page = detail::paginate(request, result.hits.size());
        json out = page.meta;
        out["window"] = cfg.window;
        out["temporal_constant"] = cfg.temporal_constant;
        out["stages"] = std::move(stage_info);
        json hits = json::array();
        for (std::size_t i = page.begin; i < page.end; ++i) {
            const auto& h = result.hits[i];
            json chain = json::array();
            for (std::size_t j = 0; j < h.chain.size(); ++j) {
                if (!h.chain[j]) {
                    chain.push_back(nullptr);
                    continue;
                }
                json c = detail::id_json(*h.chain[j]);
                c["stage_rank"] = *h.ranks[j];
                chain.push_back(std::move(c));
            }
            json entry = detail::id_json(h.pivot);
            entry["rank"] = i + 1;
            entry["score"] = h.score;
            entry["best_chain"] = std::move(chain);
            hits.push_back(std::move(entry));
        }
        out["hits"] = std::move(hits);
        return out;
    }

    /// One /api/search-style run for a single stage, temporal for several.
    json query(const std::vector<json>& stages, std::uint32_t window, std::size_t top_k) const {
        return run_request(build_request(stages, window, top_k));
    }

    /// The request body query() sends, so other front ends can replay it.
    static json build_request(const std::vector<json>& stages, std::uint32_t window, std::size_t top_k) {
        if (stages.empty()) detail::bad("at least one stage is required");
        if (stages.size() == 1) {
            json s = stages[0];
            if (s.is_object() && !detail::get(s, "top_k")) s["top_k"] = top_k;
            return s;
        }
        return {{"stages", stages}, {"window", window}, {"top_k", top_k}};
    }

    json run_request(const json& request) const {
        return request.is_object() && request.contains("stages") ? temporal_search(request) : search(request);
    }

    /// floor(n/2) keyframes before idx and the rest after, shifted to stay
    /// inside the video; idx itself is excluded.
    json neighbors(const std::string& video_id, long long idx, long long n) const {
        const VideoInfo* v = corpus_->video(video_id);
        if (!v || idx < 0 || idx >= v->keyframe_count) {
            fail(ErrorCode::NotFound, "unknown keyframe " + video_id + "/" + std::to_string(idx));
        }
        if (n < 1 || n > kMaxNeighbors) detail::bad("'n' must be in [1, 200]");
        const long long count = v->keyframe_count;
        long long lo = idx - n / 2;
        long long hi = idx + (n - n / 2);
        if (lo < 0) {
            hi += -lo;
            lo = 0;
        }
        if (hi > count - 1) {
            lo = std::max(0LL, lo - (hi - (count - 1)));
            hi = count - 1;
        }
        json out = json::array();
        for (long long i = lo; i <= hi; ++i) {
            if (i == idx) continue;
            out.push_back(detail::id_json(*corpus_->keyframe(video_id, static_cast<std::uint32_t>(i))));
        }
        return out;
    }

    json keyframe(const std::string& video_id, long long idx) const {
        const meta::KeyframeRecord* r =
            idx < 0 || idx > UINT32_MAX ? nullptr : corpus_->record(video_id, static_cast<std::uint32_t>(idx));
        if (!r) fail(ErrorCode::NotFound, "unknown keyframe " + video_id + "/" + std::to_string(idx));
        json out = detail::id_json(r->id);
        out["grid_tokens"] = r->grid_tokens;
        out["color_tokens"] = r->color_tokens;
        out["tags"] = r->tag_string;
        out["ocr"] = r->ocr_text;
        return out;
    }

    json videos() const {
        json list = json::array();
        for (const auto& v : corpus_->videos()) {
            list.push_back({{"video_id", v.video_id}, {"fps", v.fps}, {"keyframe_count", v.keyframe_count}});
        }
        return {{"corpus_name", corpus_->name()}, {"videos", std::move(list)}};
    }

    json config() const {
        json spaces = json::array();
        for (const auto& [name, s] : corpus_->spaces()) spaces.push_back({{"name", name}, {"dim", s.dim()}});
        json palette = json::array();
        for (auto c : meta::kPalette) palette.push_back(std::string(c));
        json cells = json::array();
        for (int r = 0; r < meta::kGridSize; ++r)
            for (int c = 0; c < meta::kGridSize; ++c) cells.push_back(meta::codloc({r, c}));
        auto kind = [](const auto& p) -> json { return p ? json(p->kind()) : json(nullptr); };
        return {{"corpus_name", corpus_->name()},
                {"spaces", std::move(spaces)},
                {"grid_size", meta::kGridSize},
                {"cells", std::move(cells)},
                {"palette", std::move(palette)},
                {"classes", corpus_->classes()},
                {"page_sizes", kPageSizes},
                {"default_top_k", kDefaultTopK},
                {"default_window", fusion::kDefaultWindow},
                {"temporal_constant", fusion::kDefaultTemporalConstant},
                {"rrf_k", fusion::kDefaultRrfK},
                {"default_fuzziness", meta::kDefaultFuzziness},
                {"default_variants", providers::kDefaultVariants},
                {"stages", {{"min", kMinStages}, {"max", kMaxStages}}},
                {"providers", {{"expansion", kind(providers_.expansion)}, {"embedder", kind(providers_.embedder)}}}};
    }

    /// Image path for a keyframe, or nullopt when the keyframe or file is missing.
    std::optional<std::filesystem::path> media_file(const std::string& video_id, long long idx) const {
        if (idx < 0 || idx > UINT32_MAX) return std::nullopt;
        const KeyframeId* id = corpus_->keyframe(video_id, static_cast<std::uint32_t>(idx));
        if (!id) return std::nullopt;
        auto p = corpus_->media_path(*id);
        if (!std::filesystem::is_regular_file(p)) return std::nullopt;
        return p;
    }

private:
    providers::Deadline request_deadline() const {
        return providers::Clock::now() + std::chrono::milliseconds(opts_.request_timeout_ms);
    }

    RankedList run_embedding(const json& stage, std::size_t top_k, providers::Deadline deadline, json* info) const {
        const std::string space_name = detail::get_string(stage, "space");
        const EmbeddingSpace* space = corpus_->space(space_name);
        if (!space) detail::bad("unknown embedding space '" + space_name + "'");
        const json* text = detail::get(stage, "text");
        const json* vector = detail::get(stage, "vector");
        if ((text != nullptr) == (vector != nullptr)) detail::bad("embedding stage needs exactly one of 'text' or 'vector'");
        const bool expand = detail::get_bool(stage, "expand", false);
        if (vector) {
            if (expand) detail::bad("'expand' needs a 'text' query");
            if (!vector->is_array()) detail::bad("'vector' must be an array of numbers");
            std::vector<float> v;
            for (const auto& x : *vector) {
                if (!x.is_number()) detail::bad("'vector' must be an array of numbers");
                v.push_back(x.get<float>());
            }
            return space->search(v, top_k);
        }
        if (!text->is_string() || text->get<std::string>().empty()) detail::bad("'text' must be a non-empty string");
        const std::string query = text->get<std::string>();
        if (!expand) {
            return space->search(providers::embed_text(query, space_name, space->dim(), providers_.embedder.get(), deadline), top_k);
        }
        providers::ExpansionRequest req;
        req.query_text = query;
        req.n = static_cast<int>(detail::get_int(stage, "variants", providers::kDefaultVariants, 1, providers::kMaxVariants));
        if (const json* hint = detail::get(stage, "language_hint")) {
            if (!hint->is_string()) detail::bad("'language_hint' must be a string");
            req.language_hint = hint->get<std::string>();
        }
        req.translate = detail::get_bool(stage, "translate", false);
        // Embed the original first: it is mandatory and fails fast.
        const auto original = providers::embed_text(query, space_name, space->dim(), providers_.embedder.get(), deadline);
        const auto variants = providers::expand_query(req, providers_.expansion.get(), deadline);
        std::vector<RankedList> lists{space->search(original, top_k)};
        for (std::size_t i = 1; i < variants.size(); ++i) {
            lists.push_back(space->search(
                providers::embed_text(variants[i], space_name, space->dim(), providers_.embedder.get(), deadline), top_k));
        }
        if (info) (*info)["variants"] = variants;
        return fusion::expansion_fuse(lists, top_k);
    }

    RankedList run_metadata(const json& stage, std::size_t top_k) const {
        const auto& index = corpus_->metadata();
        std::vector<RankedList> lists;
        if (const json* g = detail::get(stage, "grid")) lists.push_back(index.grid_search(detail::parse_grid(*g), fusion::kUnlimited));
        const double fuzz = detail::get_number(stage, "fuzziness", meta::kDefaultFuzziness);
        if (detail::get(stage, "tags")) {
            lists.push_back(index.text_search(meta::TextField::Tags, detail::get_string(stage, "tags"), fusion::kUnlimited, fuzz));
        }
        if (detail::get(stage, "ocr")) {
            lists.push_back(index.text_search(meta::TextField::Ocr, detail::get_string(stage, "ocr"), fusion::kUnlimited, fuzz));
        }
        if (lists.empty()) detail::bad("metadata stage needs at least one of 'grid', 'tags' or 'ocr'");
        if (lists.size() == 1) {
            if (lists[0].hits.size() > top_k) lists[0].hits.resize(top_k);
            return std::move(lists[0]);
        }
        return fusion::rrf_fuse(lists, fusion::kDefaultRrfK, top_k);
    }

    std::shared_ptr<const Corpus> corpus_;
    providers::ProviderSet providers_;
    EngineOptions opts_;
};

} // namespace vidret::engine
