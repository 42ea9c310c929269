#pragma once

// Corpus manifests: one JSON file naming the videos, the embedding space
// files, and the per-keyframe JSONL metadata files. Everything is validated
// up front; a loaded Corpus is immutable.
//
// {
//   "corpus_name": "demo",
//   "videos": [{"video_id": "V000", "fps": 25, "keyframe_count": 30}],
//   "spaces": [{"name": "clip", "dim": 64, "vector_file": "spaces/clip.ems"}],
//   "detections_file": "detections.jsonl",
//   "colors_file": "colors.jsonl",          (optional)
//   "ocr_file": "ocr.jsonl",                (optional)
//   "media_root": "media"
// }
//
// JSONL lines, one keyframe each:
//   detections: {"video_id", "keyframe_index", "detections": [{"class", "confidence", "bbox": [x1,y1,x2,y2]}]}
//   colors:     {"video_id", "keyframe_index", "cells": [49 labels, row-major, "" for none]}
//   ocr:        {"video_id", "keyframe_index", "text"}

#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidret/binary_io.hpp"
#include "vidret/embed_index.hpp"
#include "vidret/error.hpp"
#include "vidret/grid_meta.hpp"

namespace vidret {

namespace fs = std::filesystem;

struct VideoInfo {
    std::string video_id;
    double fps = 0.0;
    std::uint32_t keyframe_count = 0;
};

struct SpaceEntry {
    std::string name;
    std::uint32_t dim = 0;
    std::string vector_file;
};

struct CorpusManifest {
    std::string corpus_name;
    std::vector<VideoInfo> videos;
    std::vector<SpaceEntry> spaces;
    std::string detections_file;
    std::optional<std::string> colors_file;
    std::optional<std::string> ocr_file;
    std::string media_root;
};

inline nlohmann::json to_json(const CorpusManifest& m) {
    nlohmann::json j;
    j["corpus_name"] = m.corpus_name;
    j["videos"] = nlohmann::json::array();
    for (const auto& v : m.videos) {
        j["videos"].push_back({{"video_id", v.video_id}, {"fps", v.fps}, {"keyframe_count", v.keyframe_count}});
    }
    j["spaces"] = nlohmann::json::array();
    for (const auto& s : m.spaces) {
        j["spaces"].push_back({{"name", s.name}, {"dim", s.dim}, {"vector_file", s.vector_file}});
    }
    j["detections_file"] = m.detections_file;
    if (m.colors_file) j["colors_file"] = *m.colors_file;
    if (m.ocr_file) j["ocr_file"] = *m.ocr_file;
    j["media_root"] = m.media_root;
    return j;
}

/// Per-keyframe metadata before it is bound to keyframe ids.
struct KeyframeMeta {
    std::set<std::string> grid_tokens;
    std::set<std::string> color_tokens;
    std::string tag_string;
    std::string ocr_text;
};

class Corpus {
public:
    const std::string& name() const { return name_; }
    const std::vector<VideoInfo>& videos() const { return videos_; }
    const std::vector<KeyframeId>& keyframes() const { return keyframes_; }
    const std::map<std::string, EmbeddingSpace>& spaces() const { return spaces_; }
    const meta::MetadataIndex& metadata() const { return metadata_; }
    const fs::path& media_root() const { return media_root_; }
    /// Distinct detection classes seen in grid tokens.
    const std::set<std::string>& classes() const { return classes_; }

    const VideoInfo* video(std::string_view id) const {
        auto it = video_pos_.find(std::string(id));
        return it == video_pos_.end() ? nullptr : &videos_[it->second];
    }

    const EmbeddingSpace* space(const std::string& name) const {
        auto it = spaces_.find(name);
        return it == spaces_.end() ? nullptr : &it->second;
    }

    /// Position of a keyframe in keyframes(), or nullopt if absent.
    std::optional<std::size_t> position(std::string_view video_id, std::uint32_t idx) const {
        auto it = video_pos_.find(std::string(video_id));
        if (it == video_pos_.end() || idx >= videos_[it->second].keyframe_count) return std::nullopt;
        return first_[it->second] + idx;
    }

    const KeyframeId* keyframe(std::string_view video_id, std::uint32_t idx) const {
        auto p = position(video_id, idx);
        return p ? &keyframes_[*p] : nullptr;
    }

    const meta::KeyframeRecord* record(std::string_view video_id, std::uint32_t idx) const {
        auto p = position(video_id, idx);
        return p ? &metadata_.records()[*p] : nullptr;
    }

    fs::path media_path(const KeyframeId& id) const {
        return media_root_ / id.video_id / (std::to_string(id.keyframe_index) + ".jpg");
    }

    /// Validates and binds in-memory parts. Keyframe frame numbers and
    /// timestamps come from the space rows, which must agree across spaces.
    /// `label` prefixes error messages.
    static Corpus assemble(std::string name, std::vector<VideoInfo> videos, std::vector<EmbeddingSpace> spaces,
                           std::map<KeyframeId, KeyframeMeta> meta, fs::path media_root,
                           const std::map<std::string, std::string>& space_files = {});

private:
    std::string name_;
    std::vector<VideoInfo> videos_;
    std::unordered_map<std::string, std::size_t> video_pos_;
    std::vector<std::size_t> first_;
    std::vector<KeyframeId> keyframes_;
    std::map<std::string, EmbeddingSpace> spaces_;
    meta::MetadataIndex metadata_;
    fs::path media_root_;
    std::set<std::string> classes_;
};

namespace detail {

[[noreturn]] inline void manifest_fail(const std::string& msg) { fail(ErrorCode::ManifestError, msg); }

} // namespace detail

inline Corpus Corpus::assemble(std::string name, std::vector<VideoInfo> videos, std::vector<EmbeddingSpace> spaces,
                               std::map<KeyframeId, KeyframeMeta> meta, fs::path media_root,
                               const std::map<std::string, std::string>& space_files) {
    using detail::manifest_fail;
    Corpus c;
    c.name_ = std::move(name);
    c.media_root_ = std::move(media_root);
    if (videos.empty()) manifest_fail("manifest lists no videos");
    if (spaces.empty()) manifest_fail("manifest lists no embedding spaces");
    std::size_t total = 0;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const auto& v = videos[i];
        const std::string where = "videos[" + std::to_string(i) + "]";
        if (v.video_id.empty()) manifest_fail(where + ": empty video_id");
        if (v.video_id.find_first_of("/\\") != std::string::npos || v.video_id == "." || v.video_id == "..") {
            manifest_fail(where + ": video_id '" + v.video_id + "' is not a valid path component");
        }
        if (!(v.fps > 0.0)) manifest_fail(where + ": fps must be positive");
        if (v.keyframe_count == 0) manifest_fail(where + ": keyframe_count must be positive");
        if (!c.video_pos_.emplace(v.video_id, i).second) manifest_fail(where + ": duplicate video_id '" + v.video_id + "'");
        c.first_.push_back(total);
        total += v.keyframe_count;
    }
    c.videos_ = std::move(videos);

    // Keyframe universe; timing fields filled from the first space.
    c.keyframes_.resize(total);
    std::vector<bool> filled(total, false);
    std::set<std::string> names;
    for (std::size_t s = 0; s < spaces.size(); ++s) {
        auto& space = spaces[s];
        auto file_it = space_files.find(space.name());
        const std::string where =
            "space '" + space.name() + "'" + (file_it != space_files.end() ? " (" + file_it->second + ")" : "");
        if (!names.insert(space.name()).second) manifest_fail(where + ": duplicate space name");
        if (space.size() != total) {
            manifest_fail(where + ": " + std::to_string(space.size()) + " rows for " + std::to_string(total) +
                          " keyframes");
        }
        std::vector<bool> seen(total, false);
        for (std::size_t r = 0; r < space.size(); ++r) {
            const auto& id = space.ids()[r];
            const std::string row = where + " row " + std::to_string(r);
            auto p = c.position(id.video_id, id.keyframe_index);
            if (!p) manifest_fail(row + ": unknown keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
            if (seen[*p]) manifest_fail(row + ": duplicate keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
            seen[*p] = true;
            if (!filled[*p]) {
                c.keyframes_[*p] = id;
                filled[*p] = true;
            } else if (c.keyframes_[*p].frame_number != id.frame_number ||
                       c.keyframes_[*p].timestamp_ms != id.timestamp_ms) {
                manifest_fail(row + ": frame_number/timestamp_ms of " + id.video_id + "/" +
                              std::to_string(id.keyframe_index) + " disagree with another space");
            }
        }
        c.spaces_.emplace(space.name(), std::move(space));
    }

    std::vector<meta::KeyframeRecord> records(total);
    for (std::size_t i = 0; i < total; ++i) records[i].id = c.keyframes_[i];
    for (auto& [id, m] : meta) {
        auto p = c.position(id.video_id, id.keyframe_index);
        if (!p) manifest_fail("metadata for unknown keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
        auto& r = records[*p];
        r.grid_tokens = std::move(m.grid_tokens);
        r.color_tokens = std::move(m.color_tokens);
        r.tag_string = std::move(m.tag_string);
        r.ocr_text = std::move(m.ocr_text);
        for (const auto& t : r.grid_tokens) {
            if (auto parsed = meta::parse_token(t)) c.classes_.insert(parsed->codclass);
        }
    }
    try {
        c.metadata_ = meta::MetadataIndex(std::move(records));
    } catch (const Error& e) {
        manifest_fail(std::string("metadata: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline nlohmann::json parse_json_file(const fs::path& path) {
    std::string text;
    try {
        text = io::read_file(path.string());
    } catch (const Error& e) {
        manifest_fail(e.what());
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        manifest_fail(path.string() + ": invalid JSON: " + e.what());
    }
}

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) manifest_fail(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        manifest_fail(where + ": field '" + key + "' has the wrong type");
    }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

/// Calls fn(json, "file:line") for every non-blank line.
template <class Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
    std::string text;
    try {
        text = io::read_file(path.string());
    } catch (const Error& e) {
        manifest_fail(e.what());
    }
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            manifest_fail(where + ": invalid JSON");
        }
        if (!j.is_object()) manifest_fail(where + ": record must be a JSON object");
        fn(j, where);
    }
}

inline KeyframeId record_key(const nlohmann::json& j, const std::string& where,
                             const std::unordered_map<std::string, std::uint32_t>& counts) {
    const auto video = field<std::string>(j, "video_id", where);
    const auto idx = field<long long>(j, "keyframe_index", where);
    auto it = counts.find(video);
    if (it == counts.end()) manifest_fail(where + ": unknown video_id '" + video + "'");
    if (idx < 0 || idx >= it->second) {
        manifest_fail(where + ": keyframe_index " + std::to_string(idx) + " outside video '" + video + "'");
    }
    return {video, static_cast<std::uint32_t>(idx), 0, 0};
}

} // namespace detail

inline CorpusManifest parse_manifest(const nlohmann::json& j, const std::string& where = "manifest") {
    using detail::field;
    using detail::manifest_fail;
    if (!j.is_object()) manifest_fail(where + ": manifest must be a JSON object");
    CorpusManifest m;
    m.corpus_name = field<std::string>(j, "corpus_name", where);
    const auto videos = field<nlohmann::json>(j, "videos", where);
    if (!videos.is_array()) manifest_fail(where + ": videos must be an array");
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const std::string w = where + ": videos[" + std::to_string(i) + "]";
        const auto count = field<long long>(videos[i], "keyframe_count", w);
        if (count <= 0 || count > UINT32_MAX) manifest_fail(w + ": keyframe_count must be positive");
        m.videos.push_back({field<std::string>(videos[i], "video_id", w), field<double>(videos[i], "fps", w),
                            static_cast<std::uint32_t>(count)});
    }
    const auto spaces = field<nlohmann::json>(j, "spaces", where);
    if (!spaces.is_array()) manifest_fail(where + ": spaces must be an array");
    for (std::size_t i = 0; i < spaces.size(); ++i) {
        const std::string w = where + ": spaces[" + std::to_string(i) + "]";
        const auto dim = field<long long>(spaces[i], "dim", w);
        if (dim <= 0 || dim > UINT32_MAX) manifest_fail(w + ": dim must be positive");
        m.spaces.push_back({field<std::string>(spaces[i], "name", w), static_cast<std::uint32_t>(dim),
                            field<std::string>(spaces[i], "vector_file", w)});
    }
    m.detections_file = field<std::string>(j, "detections_file", where);
    if (j.contains("colors_file") && !j["colors_file"].is_null()) m.colors_file = field<std::string>(j, "colors_file", where);
    if (j.contains("ocr_file") && !j["ocr_file"].is_null()) m.ocr_file = field<std::string>(j, "ocr_file", where);
    m.media_root = field<std::string>(j, "media_root", where);
    return m;
}

inline Corpus load_corpus(const std::string& manifest_path) {
    using detail::manifest_fail;
    const fs::path mpath(manifest_path);
    const fs::path base = mpath.parent_path();
    const CorpusManifest m = parse_manifest(detail::parse_json_file(mpath), mpath.string());

    std::unordered_map<std::string, std::uint32_t> counts;
    for (const auto& v : m.videos) counts[v.video_id] = v.keyframe_count;

    std::vector<EmbeddingSpace> spaces;
    std::map<std::string, std::string> space_files;
    for (const auto& s : m.spaces) {
        const fs::path file = detail::resolve(base, s.vector_file);
        space_files[s.name] = file.string();
        EmbeddingSpace space;
        try {
            space = load_space(file.string(), s.name);
        } catch (const Error& e) {
            manifest_fail("space '" + s.name + "' (" + file.string() + "): " + e.what());
        }
        if (space.dim() != s.dim) {
            manifest_fail("space '" + s.name + "' (" + file.string() + "): file dim " + std::to_string(space.dim()) +
                          " != manifest dim " + std::to_string(s.dim));
        }
        spaces.push_back(std::move(space));
    }

    std::map<KeyframeId, KeyframeMeta> meta;
    std::set<KeyframeId> seen_det, seen_col, seen_ocr;
    detail::for_each_jsonl(detail::resolve(base, m.detections_file), [&](const nlohmann::json& j, const std::string& where) {
        const KeyframeId key = detail::record_key(j, where, counts);
        if (!seen_det.insert(key).second) manifest_fail(where + ": duplicate record for " + key.video_id + "/" + std::to_string(key.keyframe_index));
        const auto dets = detail::field<nlohmann::json>(j, "detections", where);
        if (!dets.is_array()) manifest_fail(where + ": detections must be an array");
        std::vector<meta::Detection> parsed;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            const std::string w = where + ": detections[" + std::to_string(i) + "]";
            meta::Detection d;
            d.class_name = detail::field<std::string>(dets[i], "class", w);
            d.confidence = dets[i].contains("confidence") ? detail::field<double>(dets[i], "confidence", w) : 1.0;
            const auto bbox = detail::field<std::vector<double>>(dets[i], "bbox", w);
            if (bbox.size() != 4) manifest_fail(w + ": bbox needs 4 numbers");
            std::copy(bbox.begin(), bbox.end(), d.bbox.begin());
            try {
                meta::validate(d);
            } catch (const Error& e) {
                manifest_fail(w + ": " + e.what());
            }
            parsed.push_back(std::move(d));
        }
        auto enc = meta::encode_detections(parsed);
        auto& km = meta[key];
        km.grid_tokens = std::move(enc.grid_tokens);
        km.tag_string = std::move(enc.tag_string);
    });
    if (m.colors_file) {
        detail::for_each_jsonl(detail::resolve(base, *m.colors_file), [&](const nlohmann::json& j, const std::string& where) {
            const KeyframeId key = detail::record_key(j, where, counts);
            if (!seen_col.insert(key).second) manifest_fail(where + ": duplicate record for " + key.video_id + "/" + std::to_string(key.keyframe_index));
            const auto cells = detail::field<std::vector<std::string>>(j, "cells", where);
            if (cells.size() != static_cast<std::size_t>(meta::kCellCount)) manifest_fail(where + ": cells needs 49 labels");
            std::array<std::string, meta::kCellCount> labels;
            std::copy(cells.begin(), cells.end(), labels.begin());
            try {
                meta[key].color_tokens = meta::encode_colors(labels);
            } catch (const Error& e) {
                manifest_fail(where + ": " + e.what());
            }
        });
    }
    if (m.ocr_file) {
        detail::for_each_jsonl(detail::resolve(base, *m.ocr_file), [&](const nlohmann::json& j, const std::string& where) {
            const KeyframeId key = detail::record_key(j, where, counts);
            if (!seen_ocr.insert(key).second) manifest_fail(where + ": duplicate record for " + key.video_id + "/" + std::to_string(key.keyframe_index));
            meta[key].ocr_text = detail::field<std::string>(j, "text", where);
        });
    }

    const fs::path media = detail::resolve(base, m.media_root);
    if (!fs::is_directory(media)) manifest_fail(mpath.string() + ": media_root '" + media.string() + "' is not a directory");
    return Corpus::assemble(m.corpus_name, m.videos, std::move(spaces), std::move(meta), media, space_files);
}

} // namespace vidret
