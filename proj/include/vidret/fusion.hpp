#pragma once

// Rank and score fusion: reciprocal rank fusion across modalities, max-score
// fusion across query-expansion variants, and temporal fusion of per-scene
// result lists into pivot-anchored event chains.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vidret/error.hpp"
#include "vidret/types.hpp"

namespace vidret::fusion {

inline constexpr double kDefaultRrfK = 60.0;
inline constexpr double kDefaultTemporalConstant = 100.0;
inline constexpr std::uint32_t kDefaultWindow = 10;
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct FusionConfig {
    double rrf_k = kDefaultRrfK;
    double temporal_constant = kDefaultTemporalConstant;
    /// Maximum exclusive keyframe_index gap between consecutive scenes.
    std::uint32_t window = kDefaultWindow;
    std::size_t top_k = kUnlimited;
};

struct TemporalHit {
    KeyframeId pivot;
    double score = 0.0;
    /// One entry per stage; chain[0] is the pivot. nullopt marks a stage with
    /// no valid continuation.
    std::vector<std::optional<KeyframeId>> chain;
    /// 1-based rank of each chain frame within its stage list.
    std::vector<std::optional<std::size_t>> ranks;
};

struct TemporalResult {
    std::vector<TemporalHit> hits;
};

namespace detail {

inline void sort_and_truncate(std::vector<Hit>& hits, std::size_t top_k) {
    std::sort(hits.begin(), hits.end(), hit_before);
    if (hits.size() > top_k) hits.resize(top_k);
}

} // namespace detail

/// RRF(d) = sum over lists containing d of 1 / (k + rank). Contributions are
/// summed in ascending rank order so the result does not depend on list order.
inline RankedList rrf_fuse(const std::vector<RankedList>& lists, double rrf_k = kDefaultRrfK,
                           std::size_t top_k = kUnlimited) {
    if (lists.empty()) {
        fail(ErrorCode::InvalidArgument, "rrf_fuse needs at least one list");
    }
    if (!(rrf_k > 0.0)) {
        fail(ErrorCode::InvalidArgument, "rrf_k must be positive");
    }
    struct Entry {
        KeyframeId id;
        std::vector<std::size_t> ranks;
    };
    std::unordered_map<KeyframeId, Entry, KeyframeIdHash> acc;
    for (const auto& list : lists) {
        std::unordered_set<KeyframeId, KeyframeIdHash> seen;
        for (std::size_t i = 0; i < list.hits.size(); ++i) {
            const auto& id = list.hits[i].id;
            if (!seen.insert(id).second) continue;
            auto [it, fresh] = acc.try_emplace(id, Entry{id, {}});
            it->second.ranks.push_back(i + 1);
        }
    }
    RankedList out;
    out.origin = "rrf";
    out.hits.reserve(acc.size());
    for (auto& [id, e] : acc) {
        std::sort(e.ranks.begin(), e.ranks.end());
        double score = 0.0;
        for (std::size_t r : e.ranks) score += 1.0 / (rrf_k + static_cast<double>(r));
        out.hits.push_back({e.id, score});
    }
    detail::sort_and_truncate(out.hits, top_k);
    return out;
}

/// Fuses the result lists of several phrasings of one query against one
/// embedding space: each distinct keyframe keeps its best similarity.
inline RankedList expansion_fuse(const std::vector<RankedList>& per_query, std::size_t top_k = kUnlimited) {
    std::string space;
    for (const auto& l : per_query) {
        if (l.space.empty()) continue;
        if (space.empty()) {
            space = l.space;
        } else if (l.space != space) {
            fail(ErrorCode::MixedSpaces, "expansion lists come from spaces '" + space + "' and '" + l.space + "'");
        }
    }
    std::unordered_map<KeyframeId, Hit, KeyframeIdHash> best;
    for (const auto& l : per_query) {
        for (const auto& h : l.hits) {
            auto [it, fresh] = best.try_emplace(h.id, h);
            if (!fresh && h.score > it->second.score) it->second.score = h.score;
        }
    }
    RankedList out;
    out.origin = "expansion";
    out.space = space;
    out.hits.reserve(best.size());
    for (auto& [id, h] : best) out.hits.push_back(h);
    detail::sort_and_truncate(out.hits, top_k);
    return out;
}

/// Temporal event fusion. For every pivot in the first stage list,
///   s(pivot) = 1/(C + r_1) + max over chains (f_2..f_n) of sum_j 1/(C + r_j)
/// where stage j only counts while every gap so far satisfies
/// 0 < kf(f_i) - kf(f_{i-1}) < window within the pivot's video. The maximum
/// is found exactly by a backward pass over the stages.
inline TemporalResult temporal_fuse(const std::vector<RankedList>& stages, const FusionConfig& cfg = {}) {
    if (stages.empty()) {
        fail(ErrorCode::InvalidArgument, "temporal_fuse needs at least one stage");
    }
    if (!(cfg.temporal_constant > 0.0) || cfg.window == 0) {
        fail(ErrorCode::InvalidArgument, "temporal constant and window must be positive");
    }
    const std::size_t n = stages.size();
    const double c = cfg.temporal_constant;

    struct Node {
        const KeyframeId* id;
        std::size_t rank; // 1-based
        double ext = 0.0; // best continuation value from here
        std::optional<std::size_t> next; // index into next stage's nodes
    };
    std::vector<std::vector<Node>> nodes(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::unordered_set<KeyframeId, KeyframeIdHash> seen;
        for (std::size_t i = 0; i < stages[j].hits.size(); ++i) {
            const auto& id = stages[j].hits[i].id;
            if (seen.insert(id).second) nodes[j].push_back({&id, i + 1});
        }
    }

    for (std::size_t jj = n - 1; jj-- > 0;) {
        // Next stage grouped by video, ordered by keyframe_index then rank.
        std::map<std::string_view, std::vector<std::size_t>> by_video;
        for (std::size_t i = 0; i < nodes[jj + 1].size(); ++i) {
            by_video[nodes[jj + 1][i].id->video_id].push_back(i);
        }
        const auto& next_nodes = nodes[jj + 1];
        for (auto& [video, idx] : by_video) {
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                if (next_nodes[a].id->keyframe_index != next_nodes[b].id->keyframe_index) {
                    return next_nodes[a].id->keyframe_index < next_nodes[b].id->keyframe_index;
                }
                return next_nodes[a].rank < next_nodes[b].rank;
            });
        }
        for (auto& node : nodes[jj]) {
            auto it = by_video.find(node.id->video_id);
            if (it == by_video.end()) continue;
            const auto& idx = it->second;
            const std::int64_t kf = node.id->keyframe_index;
            auto first = std::partition_point(idx.begin(), idx.end(), [&](std::size_t i) {
                return static_cast<std::int64_t>(next_nodes[i].id->keyframe_index) <= kf;
            });
            for (auto p = first; p != idx.end(); ++p) {
                const auto& cand = next_nodes[*p];
                if (static_cast<std::int64_t>(cand.id->keyframe_index) - kf >= static_cast<std::int64_t>(cfg.window)) {
                    break;
                }
                const double value = 1.0 / (c + static_cast<double>(cand.rank)) + cand.ext;
                if (!node.next || value > node.ext ||
                    (value == node.ext && cand.rank < next_nodes[*node.next].rank)) {
                    node.ext = value;
                    node.next = *p;
                }
            }
        }
    }

    TemporalResult out;
    out.hits.reserve(nodes[0].size());
    for (const auto& pivot : nodes[0]) {
        TemporalHit h;
        h.pivot = *pivot.id;
        h.score = 1.0 / (c + static_cast<double>(pivot.rank)) + pivot.ext;
        h.chain.assign(n, std::nullopt);
        h.ranks.assign(n, std::nullopt);
        h.chain[0] = *pivot.id;
        h.ranks[0] = pivot.rank;
        const Node* cur = &pivot;
        for (std::size_t j = 1; j < n && cur->next; ++j) {
            cur = &nodes[j][*cur->next];
            h.chain[j] = *cur->id;
            h.ranks[j] = cur->rank;
        }
        out.hits.push_back(std::move(h));
    }
    std::sort(out.hits.begin(), out.hits.end(), [](const TemporalHit& a, const TemporalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.pivot < b.pivot;
    });
    if (out.hits.size() > cfg.top_k) out.hits.resize(cfg.top_k);
    return out;
}

} // namespace vidret::fusion
