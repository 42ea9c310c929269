#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the code paths it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidret/random.hpp"
#include "vidret/types.hpp"

namespace oracle {

struct Gaussian {
    double weight;
    double mean;
    double sigma;
};

inline double pdf(const Gaussian& g, double x) {
    const double z = (x - g.mean) / g.sigma;
    return g.weight * std::exp(-0.5 * z * z) / (g.sigma * std::sqrt(2.0 * M_PI));
}

inline double cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Misclassification mass of "x > t => high" under a two-component mixture.
inline double threshold_error(Gaussian a, Gaussian b, double t) {
    if (b.mean < a.mean) std::swap(a, b);
    return a.weight * (1.0 - cdf((t - a.mean) / a.sigma)) + b.weight * cdf((t - b.mean) / b.sigma);
}

/// Bayes threshold by dense scan over [mu_low, mu_high] plus golden-section
/// refinement of the best bracket.
inline double bayes_threshold_scan(Gaussian a, Gaussian b, int steps = 20000) {
    if (b.mean < a.mean) std::swap(a, b);
    const double lo = a.mean, hi = b.mean;
    double best_t = lo, best_e = threshold_error(a, b, lo);
    const double h = (hi - lo) / steps;
    for (int i = 1; i <= steps; ++i) {
        const double t = lo + h * i;
        const double e = threshold_error(a, b, t);
        if (e < best_e) {
            best_e = e;
            best_t = t;
        }
    }
    double x0 = std::max(lo, best_t - h), x1 = std::min(hi, best_t + h);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
        const double c = x1 - phi * (x1 - x0);
        const double d = x0 + phi * (x1 - x0);
        if (threshold_error(a, b, c) < threshold_error(a, b, d)) {
            x1 = d;
        } else {
            x0 = c;
        }
    }
    return 0.5 * (x0 + x1);
}

/// Sign changes of w1 phi1 - w2 phi2 (in log domain) on a uniform grid.
inline std::vector<double> intersection_scan(const Gaussian& a, const Gaussian& b, double step = 1e-5) {
    auto f = [&](double x) {
        const double za = (x - a.mean) / a.sigma;
        const double zb = (x - b.mean) / b.sigma;
        return std::log(a.weight / a.sigma) - 0.5 * za * za - std::log(b.weight / b.sigma) + 0.5 * zb * zb;
    };
    std::vector<double> roots;
    const double lo = std::min(a.mean, b.mean), hi = std::max(a.mean, b.mean);
    const auto steps = static_cast<long>(std::ceil((hi - lo) / step));
    double prev_x = lo, prev = f(lo);
    if (prev == 0.0) roots.push_back(lo);
    for (long i = 1; i <= steps; ++i) {
        const double x = std::min(hi, lo + step * static_cast<double>(i));
        const double v = f(x);
        if (v == 0.0) {
            roots.push_back(x);
        } else if ((prev < 0.0 && v > 0.0) || (prev > 0.0 && v < 0.0)) {
            // bisect the bracket
            double l = prev_x, r = x, fl = prev;
            for (int k = 0; k < 80; ++k) {
                const double m = 0.5 * (l + r);
                const double fm = f(m);
                if ((fm < 0.0) == (fl < 0.0)) {
                    l = m;
                    fl = fm;
                } else {
                    r = m;
                }
            }
            roots.push_back(0.5 * (l + r));
        }
        prev = v;
        prev_x = x;
    }
    return roots;
}

inline std::vector<double> sample_mixture(vidret::Rng& rng, const Gaussian& a, const Gaussian& b, int n) {
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool first = rng.uniform() < a.weight;
        xs.push_back(first ? rng.normal(a.mean, a.sigma) : rng.normal(b.mean, b.sigma));
    }
    return xs;
}

/// Plain Levenshtein over bytes, full matrix.
inline int edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[a.size()][b.size()];
}

inline double similarity(const std::string& a, const std::string& b) {
    const std::size_t len = std::max(a.size(), b.size());
    return len == 0 ? 1.0 : 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(len);
}

/// Pixel-rasterized cell coverage of a normalized box on a res x res raster.
/// Pixel (i, j) belongs to the cell containing its center; coverage is the
/// fraction of the cell's pixels whose centers fall inside the box.
struct RasterCoverage {
    std::array<std::array<double, 7>, 7> coverage{};
    int center_row = 0;
    int center_col = 0;
};

inline RasterCoverage rasterize(const std::array<double, 4>& b, int res = 1000) {
    std::array<std::array<long, 7>, 7> inside{}, total{};
    auto cell_of = [&](int px) { return std::min(6, static_cast<int>((px + 0.5) * 7.0 / res)); };
    for (int py = 0; py < res; ++py) {
        const double y = (py + 0.5) / res;
        const int r = cell_of(py);
        const bool in_y = y >= b[1] && y <= b[3];
        for (int px = 0; px < res; ++px) {
            const int c = cell_of(px);
            ++total[r][c];
            const double x = (px + 0.5) / res;
            if (in_y && x >= b[0] && x <= b[2]) ++inside[r][c];
        }
    }
    RasterCoverage out;
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 7; ++c) out.coverage[r][c] = static_cast<double>(inside[r][c]) / total[r][c];
    const int cx = std::min(res - 1, static_cast<int>((b[0] + b[2]) / 2 * res));
    const int cy = std::min(res - 1, static_cast<int>((b[1] + b[3]) / 2 * res));
    out.center_col = cell_of(cx);
    out.center_row = cell_of(cy);
    return out;
}

// Best chain value continuing from (stage j, id), enumerating every chain.
inline double temporal_extension(const std::vector<vidret::RankedList>& stages, std::size_t j,
                                 const vidret::KeyframeId& from, double c, std::uint32_t window) {
    if (j + 1 >= stages.size()) return 0.0;
    double best = 0.0;
    const auto& next = stages[j + 1].hits;
    for (std::size_t i = 0; i < next.size(); ++i) {
        const auto& id = next[i].id;
        if (id.video_id != from.video_id) continue;
        const long gap = static_cast<long>(id.keyframe_index) - static_cast<long>(from.keyframe_index);
        if (gap <= 0 || gap >= static_cast<long>(window)) continue;
        best = std::max(best, 1.0 / (c + static_cast<double>(i + 1)) + temporal_extension(stages, j + 1, id, c, window));
    }
    return best;
}

/// Best total score per stage-1 pivot by exhaustive tuple enumeration.
inline std::map<vidret::KeyframeId, double> temporal_brute_force(const std::vector<vidret::RankedList>& stages, double c,
                                                                 std::uint32_t window) {
    std::map<vidret::KeyframeId, double> out;
    for (std::size_t i = 0; i < stages[0].hits.size(); ++i) {
        const auto& id = stages[0].hits[i].id;
        out[id] = 1.0 / (c + static_cast<double>(i + 1)) + temporal_extension(stages, 0, id, c, window);
    }
    return out;
}

} // namespace oracle
