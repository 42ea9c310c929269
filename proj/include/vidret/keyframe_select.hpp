#pragma once

// K-Means over per-shot frame features and centroid-nearest exemplar pick.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vidret/binary_io.hpp"
#include "vidret/error.hpp"
#include "vidret/random.hpp"

namespace vidret::keyframes {

struct FeatureVector {
    std::uint32_t frame_number = 0;
    std::vector<float> values;
};

struct Clustering {
    std::vector<std::vector<double>> centroids;
    /// Frames in canonical (ascending frame_number) order, parallel to assignment.
    std::vector<std::uint32_t> frames;
    std::vector<std::size_t> assignment;
    double inertia = 0.0;
    /// Inertia after every centroid update.
    std::vector<double> inertia_trace;
    int iterations = 0;
};

inline constexpr int kDefaultK = 3;
inline constexpr int kDefaultMaxIterations = 100;

namespace detail {

inline double squared_distance(const std::vector<float>& x, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = static_cast<double>(x[d]) - c[d];
        s += diff * diff;
    }
    return s;
}

inline std::vector<FeatureVector> canonicalize(std::vector<FeatureVector> features) {
    if (features.empty()) {
        fail(ErrorCode::EmptyInput, "no feature vectors");
    }
    const std::size_t dim = features.front().values.size();
    for (const auto& f : features) {
        if (f.values.size() != dim) {
            fail(ErrorCode::DimensionMismatch, "feature dimensions differ within the shot");
        }
        for (float v : f.values) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::InvalidArgument, "non-finite feature in frame " + std::to_string(f.frame_number));
            }
        }
    }
    std::stable_sort(features.begin(), features.end(), [](const auto& a, const auto& b) {
        return a.frame_number < b.frame_number;
    });
    return features;
}

inline std::size_t distinct_count(const std::vector<FeatureVector>& features) {
    std::vector<const std::vector<float>*> ptrs;
    ptrs.reserve(features.size());
    for (const auto& f : features) ptrs.push_back(&f.values);
    std::sort(ptrs.begin(), ptrs.end(), [](auto* a, auto* b) { return *a < *b; });
    return static_cast<std::size_t>(
        std::unique(ptrs.begin(), ptrs.end(), [](auto* a, auto* b) { return *a == *b; }) - ptrs.begin());
}

inline std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

} // namespace detail

/// Lloyd's algorithm from a seeded k-means++ start. k is capped by the number
/// of distinct vectors; an emptied cluster takes over the point farthest from
/// its current centroid.
inline Clustering kmeans(std::vector<FeatureVector> input, int k = kDefaultK, std::uint64_t seed = 0,
                         int max_iter = kDefaultMaxIterations) {
    if (k < 1) {
        fail(ErrorCode::InvalidArgument, "k must be >= 1");
    }
    const auto features = detail::canonicalize(std::move(input));
    const std::size_t n = features.size();
    const std::size_t dim = features.front().values.size();
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), detail::distinct_count(features));

    Clustering out;
    out.frames.reserve(n);
    for (const auto& f : features) out.frames.push_back(f.frame_number);

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<std::vector<double>> centers;
    centers.push_back(detail::to_double(features[rng.below(n)].values));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(features[i].values, centers[0]);
    while (centers.size() < kk) {
        double total = 0.0;
        for (double v : d2) total += v;
        double target = rng.uniform() * total;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            pick = i;
            if (target < d2[i]) break;
            target -= d2[i];
        }
        centers.push_back(detail::to_double(features[pick].values));
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], detail::squared_distance(features[i].values, centers.back()));
        }
    }

    auto nearest = [&](const std::vector<std::vector<double>>& cs) {
        std::vector<std::size_t> a(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < cs.size(); ++c) {
                const double d = detail::squared_distance(features[i].values, cs[c]);
                if (d < best) {
                    best = d;
                    a[i] = c;
                }
            }
        }
        return a;
    };

    auto update_means = [&](std::vector<std::size_t>& a) {
        std::vector<std::vector<double>> cs(kk, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[a[i]];
            for (std::size_t d = 0; d < dim; ++d) cs[a[i]][d] += features[i].values[d];
        }
        for (std::size_t c = 0; c < kk; ++c) {
            if (counts[c] == 0) continue;
            for (auto& v : cs[c]) v /= static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < kk; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[a[i]] < 2) continue;
                const double d = detail::squared_distance(features[i].values, cs[a[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            const std::size_t donor = a[far];
            --counts[donor];
            a[far] = c;
            counts[c] = 1;
            cs[c] = detail::to_double(features[far].values);
            std::fill(cs[donor].begin(), cs[donor].end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] != donor) continue;
                for (std::size_t d = 0; d < dim; ++d) cs[donor][d] += features[i].values[d];
            }
            for (auto& v : cs[donor]) v /= static_cast<double>(counts[donor]);
        }
        return cs;
    };

    auto inertia_of = [&](const std::vector<std::size_t>& a, const std::vector<std::vector<double>>& cs) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += detail::squared_distance(features[i].values, cs[a[i]]);
        return s;
    };

    out.assignment = nearest(centers);
    for (int it = 1; it <= std::max(max_iter, 1); ++it) {
        out.centroids = update_means(out.assignment);
        out.inertia_trace.push_back(inertia_of(out.assignment, out.centroids));
        out.iterations = it;
        auto next = nearest(out.centroids);
        if (next == out.assignment) {
            break;
        }
        if (it == max_iter) {
            // Keep centroids consistent with the reported assignment.
            break;
        }
        out.assignment = std::move(next);
    }
    out.inertia = out.inertia_trace.back();
    return out;
}

/// Per cluster, the member frame closest to its centroid (ties to the smaller
/// frame number); returned sorted by frame number.
inline std::vector<std::uint32_t> select_exemplars(std::vector<FeatureVector> features, int k = kDefaultK,
                                                   std::uint64_t seed = 0, int max_iter = kDefaultMaxIterations) {
    const auto canon = detail::canonicalize(std::move(features));
    const Clustering cl = kmeans(canon, k, seed, max_iter);
    const std::size_t kk = cl.centroids.size();
    std::vector<std::size_t> best(kk, canon.size());
    std::vector<double> best_d(kk, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < canon.size(); ++i) {
        const std::size_t c = cl.assignment[i];
        const double d = detail::squared_distance(canon[i].values, cl.centroids[c]);
        // canonical order is ascending frame_number, so strict '<' keeps the smaller frame on ties.
        if (d < best_d[c]) {
            best_d[c] = d;
            best[c] = i;
        }
    }
    std::vector<std::uint32_t> out;
    for (std::size_t c = 0; c < kk; ++c) {
        if (best[c] < canon.size()) out.push_back(canon[best[c]].frame_number);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline constexpr std::string_view kFeatureMagic = "KFV1";

inline std::string encode_features(const std::vector<FeatureVector>& features, std::uint32_t dim) {
    io::ByteWriter w;
    w.raw(kFeatureMagic);
    w.le<std::uint32_t>(dim);
    for (const auto& f : features) {
        if (f.values.size() != dim) {
            fail(ErrorCode::DimensionMismatch, "feature of frame " + std::to_string(f.frame_number) +
                                                   " has dimension " + std::to_string(f.values.size()));
        }
        w.le<std::uint32_t>(f.frame_number);
        for (float v : f.values) w.f32(v);
    }
    return w.bytes();
}

inline std::vector<FeatureVector> decode_features(std::string_view bytes, const std::string& source = "features") {
    io::ByteReader r(bytes, source);
    if (r.raw(4) != kFeatureMagic) {
        fail(ErrorCode::FormatError, source + ": bad magic");
    }
    const auto dim = r.le<std::uint32_t>();
    if (dim == 0) {
        fail(ErrorCode::FormatError, source + ": zero dimension");
    }
    std::vector<FeatureVector> out;
    while (!r.at_end()) {
        FeatureVector f;
        f.frame_number = r.le<std::uint32_t>();
        f.values.resize(dim);
        for (auto& v : f.values) v = r.f32();
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<FeatureVector> read_feature_file(const std::string& path) {
    return decode_features(io::read_file(path), path);
}

inline void write_feature_file(const std::string& path, const std::vector<FeatureVector>& features,
                               std::uint32_t dim) {
    io::write_file(path, encode_features(features, dim));
}

} // namespace vidret::keyframes
