#pragma once

// Exact cosine-similarity search over unit-normalized keyframe embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vidret/binary_io.hpp"
#include "vidret/error.hpp"
#include "vidret/types.hpp"

namespace vidret {

class EmbeddingSpace {
public:
    EmbeddingSpace() = default;
    EmbeddingSpace(std::string name, std::uint32_t dim) : name_(std::move(name)), dim_(dim) {
        if (dim_ == 0) {
            fail(ErrorCode::InvalidArgument, "embedding dimension must be positive");
        }
    }

    const std::string& name() const { return name_; }
    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<KeyframeId>& ids() const { return ids_; }
    std::span<const float> row(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }

    bool contains(const KeyframeId& id) const { return index_.contains(id); }

    /// Normalizes and appends one vector.
    void add(const KeyframeId& id, std::span<const float> raw) {
        check_dim(raw.size());
        if (contains(id)) {
            fail(ErrorCode::DuplicateId, "duplicate keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
        }
        const double norm = l2(raw);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            fail(ErrorCode::ZeroVector, "zero or non-finite vector for " + id.video_id + "/" +
                                            std::to_string(id.keyframe_index));
        }
        append(id, raw, norm);
    }

    /// All-or-nothing batch add.
    void add_vectors(const std::vector<std::pair<KeyframeId, std::vector<float>>>& entries) {
        std::unordered_map<KeyframeId, int, KeyframeIdHash> seen;
        for (const auto& [id, v] : entries) {
            check_dim(v.size());
            if (contains(id) || !seen.emplace(id, 0).second) {
                fail(ErrorCode::DuplicateId, "duplicate keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
            }
            const double norm = l2(v);
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                fail(ErrorCode::ZeroVector, "zero or non-finite vector for " + id.video_id + "/" +
                                                std::to_string(id.keyframe_index));
            }
        }
        for (const auto& [id, v] : entries) {
            append(id, v, l2(v));
        }
    }

    /// Exact top-k by inner product of the normalized query against every row.
    RankedList search(std::span<const float> query, std::size_t top_k) const {
        check_dim(query.size());
        const double qn = l2(query);
        if (!(qn > 0.0) || !std::isfinite(qn)) {
            fail(ErrorCode::ZeroVector, "query vector is zero");
        }
        std::vector<double> q(dim_);
        for (std::size_t d = 0; d < dim_; ++d) q[d] = static_cast<double>(query[d]) / qn;

        std::vector<double> scores(size());
        for (std::size_t i = 0; i < size(); ++i) {
            const float* r = vectors_.data() + i * dim_;
            double acc = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) acc += static_cast<double>(r[d]) * q[d];
            scores[i] = std::clamp(acc, -1.0, 1.0);
        }
        std::vector<std::size_t> order(size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t k = std::min(top_k, order.size());
        auto before = [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return ids_[a] < ids_[b];
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);

        RankedList out;
        out.origin = name_;
        out.space = name_;
        out.hits.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            out.hits.push_back({ids_[order[i]], scores[order[i]]});
        }
        return out;
    }

    /// Appends a stored row verbatim when it is already unit-norm (within
    /// 1e-5), so serialized spaces reload bit-exactly.
    void add_stored(const KeyframeId& id, std::span<const float> stored) {
        check_dim(stored.size());
        if (contains(id)) {
            fail(ErrorCode::DuplicateId, "duplicate keyframe " + id.video_id + "/" + std::to_string(id.keyframe_index));
        }
        const double norm = l2(stored);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            fail(ErrorCode::ZeroVector, "zero or non-finite vector for " + id.video_id + "/" +
                                            std::to_string(id.keyframe_index));
        }
        if (std::abs(norm - 1.0) <= 1e-5) {
            append(id, stored, 1.0, /*verbatim=*/true);
        } else {
            append(id, stored, norm);
        }
    }

    friend bool operator==(const EmbeddingSpace& a, const EmbeddingSpace& b) {
        if (a.dim_ != b.dim_ || a.ids_.size() != b.ids_.size()) return false;
        for (std::size_t i = 0; i < a.ids_.size(); ++i) {
            const auto& x = a.ids_[i];
            const auto& y = b.ids_[i];
            if (!(x == y) || x.frame_number != y.frame_number || x.timestamp_ms != y.timestamp_ms) return false;
        }
        for (std::size_t i = 0; i < a.vectors_.size(); ++i) {
            if (std::bit_cast<std::uint32_t>(a.vectors_[i]) != std::bit_cast<std::uint32_t>(b.vectors_[i])) {
                return false;
            }
        }
        return true;
    }

private:
    void check_dim(std::size_t n) const {
        if (n != dim_) {
            fail(ErrorCode::DimensionMismatch, "space '" + name_ + "' expects dimension " + std::to_string(dim_) +
                                                   ", got " + std::to_string(n));
        }
    }

    static double l2(std::span<const float> v) {
        double s = 0.0;
        for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
        return std::sqrt(s);
    }

    void append(const KeyframeId& id, std::span<const float> v, double norm, bool verbatim = false) {
        index_.emplace(id, ids_.size());
        ids_.push_back(id);
        for (float x : v) {
            vectors_.push_back(verbatim ? x : static_cast<float>(static_cast<double>(x) / norm));
        }
    }

    std::string name_;
    std::uint32_t dim_ = 0;
    std::vector<float> vectors_; // row-major
    std::vector<KeyframeId> ids_;
    std::unordered_map<KeyframeId, std::size_t, KeyframeIdHash> index_;
};

inline constexpr std::string_view kSpaceMagic = "EMS1";

inline std::string encode_space(const EmbeddingSpace& space) {
    io::ByteWriter w;
    w.raw(kSpaceMagic);
    w.le<std::uint32_t>(space.dim());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(space.size()));
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& id = space.ids()[i];
        if (id.video_id.size() > 0xFFFF) {
            fail(ErrorCode::InvalidArgument, "video_id too long to serialize");
        }
        w.le<std::uint16_t>(static_cast<std::uint16_t>(id.video_id.size()));
        w.raw(id.video_id);
        w.le<std::uint32_t>(id.keyframe_index);
        w.le<std::uint32_t>(id.frame_number);
        w.le<std::uint64_t>(id.timestamp_ms);
        for (float v : space.row(i)) w.f32(v);
    }
    return w.bytes();
}

inline EmbeddingSpace decode_space(std::string_view bytes, std::string name, const std::string& source = "space") {
    io::ByteReader r(bytes, source);
    if (r.raw(4) != kSpaceMagic) {
        fail(ErrorCode::FormatError, source + ": bad magic");
    }
    const auto dim = r.le<std::uint32_t>();
    const auto count = r.le<std::uint32_t>();
    if (dim == 0) {
        fail(ErrorCode::FormatError, source + ": zero dimension");
    }
    EmbeddingSpace space(std::move(name), dim);
    std::vector<float> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        KeyframeId id;
        const auto len = r.le<std::uint16_t>();
        id.video_id = std::string(r.raw(len));
        id.keyframe_index = r.le<std::uint32_t>();
        id.frame_number = r.le<std::uint32_t>();
        id.timestamp_ms = r.le<std::uint64_t>();
        for (auto& v : row) v = r.f32();
        try {
            space.add_stored(id, row);
        } catch (const Error& e) {
            fail(ErrorCode::FormatError, source + ": row " + std::to_string(i) + ": " + e.what());
        }
    }
    if (!r.at_end()) {
        fail(ErrorCode::FormatError, source + ": trailing bytes after " + std::to_string(count) + " rows");
    }
    return space;
}

inline void save_space(const EmbeddingSpace& space, const std::string& path) {
    io::write_file(path, encode_space(space));
}

inline EmbeddingSpace load_space(const std::string& path, std::string name) {
    return decode_space(io::read_file(path), std::move(name), path);
}

} // namespace vidret
