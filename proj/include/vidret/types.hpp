#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace vidret {

/// Keyframe identity. Ordering and equality use (video_id, keyframe_index);
/// frame_number and timestamp_ms ride along for display.
struct KeyframeId {
    std::string video_id;
    std::uint32_t keyframe_index = 0;
    std::uint32_t frame_number = 0;
    std::uint64_t timestamp_ms = 0;

    friend bool operator==(const KeyframeId& a, const KeyframeId& b) {
        return a.keyframe_index == b.keyframe_index && a.video_id == b.video_id;
    }
    friend std::strong_ordering operator<=>(const KeyframeId& a, const KeyframeId& b) {
        if (auto c = a.video_id <=> b.video_id; c != 0) return c;
        return a.keyframe_index <=> b.keyframe_index;
    }
};

struct KeyframeIdHash {
    std::size_t operator()(const KeyframeId& id) const noexcept {
        return std::hash<std::string>{}(id.video_id) * 1000003u ^ id.keyframe_index;
    }
};

struct Hit {
    KeyframeId id;
    double score = 0.0;
};

/// Ordered hits, best first. Rank of hits[i] is i + 1.
struct RankedList {
    std::vector<Hit> hits;
    /// Modality / query tag, e.g. "clip", "grid", "ocr".
    std::string origin;
    /// Embedding space the scores come from; empty for non-embedding lists.
    std::string space;
};

/// Descending score, then ascending id.
inline bool hit_before(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

} // namespace vidret
