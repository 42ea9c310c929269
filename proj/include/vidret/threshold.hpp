#pragma once

// Boundary-score thresholding: a Gaussian KDE locates the two main modes of a
// per-frame transition-score stream, the valley between them seeds a
// two-component Gaussian mixture, EM refines it, and the threshold is placed
// at the component intersection with the lowest expected misclassification.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidret/error.hpp"

namespace vidret::threshold {

struct ScoreSeries {
    std::vector<double> values;
    std::string source_label;
};

struct KdeConfig {
    /// Unset means Silverman's rule of thumb.
    std::optional<double> bandwidth;
    std::size_t grid_points = 512;
};

struct DensityCurve {
    std::vector<double> xs;
    std::vector<double> ys;
    double bandwidth = 0.0;
    /// Number of scores behind the estimate; 0 for hand-built curves.
    std::size_t sample_count = 0;
};

struct ModeAnalysis {
    double m1 = 0.0;
    double m2 = 0.0;
    double valley = 0.0;
    bool found = false;
};

struct MixtureComponent {
    double weight = 0.5;
    double mean = 0.0;
    double sigma = 1.0;
};

struct MixtureModel {
    std::array<MixtureComponent, 2> components;

    /// Copy with components ordered by ascending mean.
    MixtureModel ordered() const {
        MixtureModel m = *this;
        if (m.components[1].mean < m.components[0].mean) {
            std::swap(m.components[0], m.components[1]);
        }
        return m;
    }
};

struct EmOptions {
    /// Convergence when |delta log-likelihood| / N drops below this.
    double tolerance = 1e-6;
    int max_iterations = 500;
    double variance_floor = 1e-8;
};

struct EmFit {
    MixtureModel model;
    std::vector<double> log_likelihood_trace; // initial value, then one per iteration
    int iterations = 0;
};

struct ThresholdResult {
    double threshold = 0.0;
    MixtureModel mixture; // ordered by mean
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_trace;
    int iterations = 0;
    bool fallback_used = false;
    ModeAnalysis modes;
    double bandwidth = 0.0;
};

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;
inline constexpr double kHalfLog2Pi = 0.9189385332046727417803297364056176;

inline void validate(const ScoreSeries& scores) {
    if (scores.values.empty()) {
        fail(ErrorCode::EmptyInput, "score series is empty");
    }
    for (std::size_t i = 0; i < scores.values.size(); ++i) {
        if (!std::isfinite(scores.values[i])) {
            fail(ErrorCode::InvalidArgument, "score " + std::to_string(i) + " is not finite");
        }
    }
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double log_normal_pdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// log(w1 phi1(x)) - log(w2 phi2(x))
inline double log_ratio(const MixtureModel& m, double x) {
    const auto& a = m.components[0];
    const auto& b = m.components[1];
    return std::log(a.weight) + log_normal_pdf(x, a.mean, a.sigma) - std::log(b.weight) -
           log_normal_pdf(x, b.mean, b.sigma);
}

inline double log_ratio_derivative(const MixtureModel& m, double x) {
    const auto& a = m.components[0];
    const auto& b = m.components[1];
    return -(x - a.mean) / (a.sigma * a.sigma) + (x - b.mean) / (b.sigma * b.sigma);
}

} // namespace detail

/// Silverman's rule: 0.9 * min(sd, IQR/1.34) * N^(-1/5).
inline double silverman_bandwidth(const std::vector<double>& values) {
    if (values.size() < 2) {
        fail(ErrorCode::DegenerateInput, "automatic bandwidth needs at least 2 scores");
    }
    const double mean = detail::mean_of(values);
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    if (!(sd > 0.0) || sorted.front() == sorted.back()) {
        fail(ErrorCode::DegenerateInput, "scores have zero spread");
    }
    const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
    // A zero IQR (heavy ties) would collapse the bandwidth; fall back to sd.
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
}

inline DensityCurve kde_density(const ScoreSeries& scores, const KdeConfig& cfg = {}) {
    detail::validate(scores);
    if (cfg.grid_points < 16) {
        fail(ErrorCode::InvalidArgument, "grid_points must be at least 16");
    }
    double h = 0.0;
    if (cfg.bandwidth) {
        h = *cfg.bandwidth;
        if (!(h > 0.0) || !std::isfinite(h)) {
            fail(ErrorCode::InvalidArgument, "bandwidth must be positive");
        }
    } else {
        h = silverman_bandwidth(scores.values);
    }

    const auto [min_it, max_it] = std::minmax_element(scores.values.begin(), scores.values.end());
    const double lo = *min_it - 3.0 * h;
    const double hi = *max_it + 3.0 * h;
    const std::size_t g = cfg.grid_points;
    const double step = (hi - lo) / static_cast<double>(g - 1);

    DensityCurve curve;
    curve.bandwidth = h;
    curve.sample_count = scores.values.size();
    curve.xs.resize(g);
    curve.ys.assign(g, 0.0);
    const double norm = detail::kInvSqrt2Pi / (static_cast<double>(scores.values.size()) * h);
    for (std::size_t i = 0; i < g; ++i) {
        const double x = lo + step * static_cast<double>(i);
        curve.xs[i] = x;
        double acc = 0.0;
        for (double p : scores.values) {
            const double z = (x - p) / h;
            acc += std::exp(-0.5 * z * z);
        }
        curve.ys[i] = acc * norm;
    }
    return curve;
}

/// Minimum prominence, in KDE standard errors, for a secondary peak to count
/// as a main mode.
inline constexpr double kPeakSignificance = 2.0;

/// Strict local maxima on the grid; the densest peak plus the densest other
/// peak that stands out from the noise (ties to the smaller abscissa) become
/// m1 < m2, and the valley is the lowest point between them.
///
/// For curves produced by kde_density the secondary peak must rise above the
/// valley separating it from the main peak by kPeakSignificance standard
/// errors of the estimate, sqrt(f(x) R(K) / (N h)) with R(K) = 1/(2 sqrt(pi)).
/// Finite samples otherwise produce tail and shoulder ripples that would be
/// mistaken for a second mode.
inline ModeAnalysis find_modes(const DensityCurve& curve) {
    ModeAnalysis out;
    const auto& ys = curve.ys;
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < ys.size(); ++i) {
        if (ys[i] > ys[i - 1] && ys[i] > ys[i + 1]) {
            peaks.push_back(i);
        }
    }
    if (peaks.size() < 2) {
        return out;
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [&](std::size_t a, std::size_t b) { return ys[a] > ys[b]; });

    auto valley_between = [&](std::size_t a, std::size_t b) {
        const std::size_t left = std::min(a, b);
        const std::size_t right = std::max(a, b);
        std::size_t v = left + 1;
        for (std::size_t i = left + 1; i < right; ++i) {
            if (ys[i] < ys[v]) v = i;
        }
        return v;
    };
    const double roughness = 0.5 / std::sqrt(std::numbers::pi);

    const std::size_t top = peaks[0];
    for (std::size_t k = 1; k < peaks.size(); ++k) {
        const std::size_t q = peaks[k];
        const std::size_t v = valley_between(top, q);
        if (curve.sample_count > 0) {
            const double se = std::sqrt(ys[q] * roughness /
                                        (static_cast<double>(curve.sample_count) * curve.bandwidth));
            if (ys[q] - ys[v] < kPeakSignificance * se) {
                continue;
            }
        }
        out.m1 = curve.xs[std::min(top, q)];
        out.m2 = curve.xs[std::max(top, q)];
        out.valley = curve.xs[v];
        out.found = true;
        break;
    }
    return out;
}

inline double mixture_log_likelihood(const std::vector<double>& xs, const MixtureModel& m) {
    double ll = 0.0;
    for (double x : xs) {
        const double a = std::log(m.components[0].weight) +
                         detail::log_normal_pdf(x, m.components[0].mean, m.components[0].sigma);
        const double b = std::log(m.components[1].weight) +
                         detail::log_normal_pdf(x, m.components[1].mean, m.components[1].sigma);
        const double hi = std::max(a, b);
        ll += hi + std::log1p(std::exp(std::min(a, b) - hi));
    }
    return ll;
}

inline EmFit em_fit(const ScoreSeries& scores, const MixtureModel& init, const EmOptions& opts = {}) {
    detail::validate(scores);
    const auto& xs = scores.values;
    const std::size_t n = xs.size();
    if (n < 4) {
        fail(ErrorCode::DegenerateInput, "EM needs at least 4 scores");
    }
    if (!(opts.tolerance > 0.0) || opts.max_iterations < 1) {
        fail(ErrorCode::InvalidArgument, "EM tolerance must be > 0 and max_iterations >= 1");
    }
    for (const auto& c : init.components) {
        if (!(c.weight > 0.0 && c.weight < 1.0) || !(c.sigma > 0.0) || !std::isfinite(c.mean)) {
            fail(ErrorCode::InvalidArgument, "invalid initial mixture component");
        }
    }

    const double sigma_floor = std::sqrt(opts.variance_floor);
    EmFit fit;
    fit.model = init;
    for (auto& c : fit.model.components) {
        c.sigma = std::max(c.sigma, sigma_floor);
    }

    std::vector<double> resp(n); // responsibility of component 0
    auto e_step = [&](const MixtureModel& m) {
        const double lw0 = std::log(m.components[0].weight);
        const double lw1 = std::log(m.components[1].weight);
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = lw0 + detail::log_normal_pdf(xs[i], m.components[0].mean, m.components[0].sigma);
            const double b = lw1 + detail::log_normal_pdf(xs[i], m.components[1].mean, m.components[1].sigma);
            const double hi = std::max(a, b);
            const double lse = hi + std::log1p(std::exp(std::min(a, b) - hi));
            resp[i] = std::exp(a - lse);
            ll += lse;
        }
        return ll;
    };

    double ll = e_step(fit.model);
    fit.log_likelihood_trace.push_back(ll);
    const double dn = static_cast<double>(n);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        MixtureModel next = fit.model;
        std::array<double, 2> mass{0.0, 0.0};
        std::array<double, 2> sum{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            mass[0] += resp[i];
            mass[1] += 1.0 - resp[i];
            sum[0] += resp[i] * xs[i];
            sum[1] += (1.0 - resp[i]) * xs[i];
        }
        for (int k = 0; k < 2; ++k) {
            if (mass[k] <= 1e-300) {
                continue; // component lost all support; keep its location
            }
            const double mean = sum[k] / mass[k];
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double g = k == 0 ? resp[i] : 1.0 - resp[i];
                ss += g * (xs[i] - mean) * (xs[i] - mean);
            }
            next.components[k].mean = mean;
            next.components[k].sigma = std::sqrt(std::max(ss / mass[k], opts.variance_floor));
        }
        const double w0 = std::clamp(mass[0] / dn, 1e-12, 1.0 - 1e-12);
        next.components[0].weight = w0;
        next.components[1].weight = 1.0 - w0;

        fit.model = next;
        const double ll_next = e_step(fit.model);
        fit.log_likelihood_trace.push_back(ll_next);
        fit.iterations = it;
        const double delta = std::abs(ll_next - ll);
        ll = ll_next;
        if (delta / dn < opts.tolerance) {
            break;
        }
    }
    return fit;
}

/// Roots of w1*phi1(x) = w2*phi2(x) inside [min(mu), max(mu)], ascending.
inline std::vector<double> gaussian_intersections(const MixtureModel& m) {
    const auto& c1 = m.components[0];
    const auto& c2 = m.components[1];
    std::vector<double> roots;
    const double lo = std::min(c1.mean, c2.mean);
    const double hi = std::max(c1.mean, c2.mean);
    if (lo == hi) {
        if (std::abs(detail::log_ratio(m, lo)) <= 1e-12) {
            roots.push_back(lo);
        }
        return roots;
    }

    // Solve in coordinates where the means sit at -1 and +1; the log-ratio is
    // then a quadratic A u^2 + B u + C.
    const double mid = 0.5 * (c1.mean + c2.mean);
    const double half = 0.5 * (hi - lo);
    const double u1 = (c1.mean - mid) / half;
    const double u2 = (c2.mean - mid) / half;
    const double s1 = c1.sigma / half;
    const double s2 = c2.sigma / half;
    const double p1 = 1.0 / (2.0 * s1 * s1);
    const double p2 = 1.0 / (2.0 * s2 * s2);
    const double a = p2 - p1;
    const double b = 2.0 * (u1 * p1 - u2 * p2);
    const double c = u2 * u2 * p2 - u1 * u1 * p1 + std::log((c1.weight * s2) / (c2.weight * s1));

    std::vector<double> us;
    if (std::abs(a) <= 1e-12 * (p1 + p2)) {
        us.push_back(-c / b);
    } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
            if (q != 0.0) {
                us.push_back(q / a);
                us.push_back(c / q);
            } else {
                us.push_back(-b / (2.0 * a));
            }
        }
    }

    constexpr double kSlack = 1e-12;
    for (double u : us) {
        if (!std::isfinite(u) || u < -1.0 - kSlack || u > 1.0 + kSlack) {
            continue;
        }
        double x = std::clamp(mid + half * u, lo, hi);
        // Newton polish on the log-ratio; accept only improving steps.
        for (int step = 0; step < 3; ++step) {
            const double f = detail::log_ratio(m, x);
            const double d = detail::log_ratio_derivative(m, x);
            if (f == 0.0 || d == 0.0) break;
            const double x_next = x - f / d;
            if (x_next < lo || x_next > hi ||
                std::abs(detail::log_ratio(m, x_next)) >= std::abs(f)) {
                break;
            }
            x = x_next;
        }
        roots.push_back(x);
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [&](double x, double y) { return std::abs(x - y) <= 1e-12 * (hi - lo); }),
                roots.end());
    return roots;
}

/// Misclassification mass of the threshold rule "above t means high component".
inline double expected_error(const MixtureModel& model, double t) {
    const MixtureModel m = model.ordered();
    const auto& low = m.components[0];
    const auto& high = m.components[1];
    return low.weight * detail::normal_sf((t - low.mean) / low.sigma) +
           high.weight * detail::normal_cdf((t - high.mean) / high.sigma);
}

inline ThresholdResult solve_threshold(const ScoreSeries& scores, const KdeConfig& cfg = {},
                                       const EmOptions& em = {}) {
    detail::validate(scores);
    const auto& xs = scores.values;
    if (xs.size() < 4) {
        fail(ErrorCode::DegenerateInput, "thresholding needs at least 4 scores");
    }

    ThresholdResult result;
    const DensityCurve curve = kde_density(scores, cfg);
    result.bandwidth = curve.bandwidth;
    result.modes = find_modes(curve);

    auto split_at = [&](double b, std::vector<double>& low, std::vector<double>& high) {
        low.clear();
        high.clear();
        for (double x : xs) {
            (x <= b ? low : high).push_back(x);
        }
    };
    std::vector<double> low;
    std::vector<double> high;
    if (result.modes.found) {
        split_at(result.modes.valley, low, high);
    }
    if (!result.modes.found || low.empty() || high.empty()) {
        std::vector<double> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        split_at(detail::quantile_sorted(sorted, 0.5), low, high);
        result.fallback_used = true;
        if (low.empty() || high.empty()) {
            fail(ErrorCode::DegenerateInput, "scores have zero spread");
        }
    }

    const double n = static_cast<double>(xs.size());
    MixtureModel init;
    auto component_from = [&](const std::vector<double>& region) {
        MixtureComponent c;
        c.weight = static_cast<double>(region.size()) / n;
        c.mean = detail::mean_of(region);
        double ss = 0.0;
        for (double x : region) ss += (x - c.mean) * (x - c.mean);
        c.sigma = std::sqrt(std::max(ss / static_cast<double>(region.size()), em.variance_floor));
        return c;
    };
    init.components[0] = component_from(low);
    init.components[1] = component_from(high);

    const EmFit fit = em_fit(scores, init, em);
    result.mixture = fit.model.ordered();
    result.log_likelihood = fit.log_likelihood_trace.back();
    result.log_likelihood_trace = fit.log_likelihood_trace;
    result.iterations = fit.iterations;

    std::vector<double> candidates = gaussian_intersections(result.mixture);
    if (candidates.empty()) {
        candidates = {result.mixture.components[0].mean, result.mixture.components[1].mean};
    }
    double best = candidates.front();
    double best_err = expected_error(result.mixture, best);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double err = expected_error(result.mixture, candidates[i]);
        if (err < best_err) {
            best = candidates[i];
            best_err = err;
        }
    }
    result.threshold = best;
    return result;
}

struct ScoreFile {
    std::vector<std::uint64_t> frames;
    ScoreSeries series;
};

/// One record per line: `<score>` or `<frame_index>,<score>`; '#' lines and
/// blank lines are skipped. Frames default to the record position.
inline ScoreFile parse_scores(std::string_view text, const std::string& label = {}) {
    ScoreFile out;
    out.series.source_label = label;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    auto trim = [](std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return std::string_view{};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    auto bad = [&](const std::string& what) {
        fail(ErrorCode::FormatError, label + ":" + std::to_string(line_no) + ": " + what);
    };
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        std::string_view line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty() || line.front() == '#') {
            if (nl == std::string_view::npos) break;
            continue;
        }
        std::uint64_t frame = out.frames.size();
        std::string_view score_text = line;
        if (const auto comma = line.find(','); comma != std::string_view::npos) {
            const auto frame_text = trim(line.substr(0, comma));
            const auto [p, ec] = std::from_chars(frame_text.data(), frame_text.data() + frame_text.size(), frame);
            if (ec != std::errc{} || p != frame_text.data() + frame_text.size()) bad("bad frame index");
            score_text = trim(line.substr(comma + 1));
        }
        double score = 0.0;
        const auto [p, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (ec != std::errc{} || p != score_text.data() + score_text.size()) bad("bad score");
        if (!std::isfinite(score)) bad("score is not finite");
        out.frames.push_back(frame);
        out.series.values.push_back(score);
        if (nl == std::string_view::npos) break;
    }
    return out;
}

inline ScoreFile read_score_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open score file " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_scores(text, path);
}

} // namespace vidret::threshold
