#pragma once

// External-service boundary: query expansion (paraphrase generation) and
// text embedding. Each has a deterministic mock and an HTTP client speaking
//   expansion: {"text", "n"}     -> {"variants": [...]}
//   embedding: {"text", "space"} -> {"vector": [...]}

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <json.hpp>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "vidret/error.hpp"
#include "vidret/random.hpp"

namespace vidret::providers {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

inline constexpr int kMaxVariants = 16;
inline constexpr int kDefaultVariants = 3;
inline constexpr int kEmbedderTimeoutMs = 5000;
inline constexpr int kExpansionTimeoutMs = 8000;
inline constexpr int kMinTimeoutMs = 100;
inline constexpr int kBackoffBaseMs = 200;

struct ExpansionRequest {
    std::string query_text;
    int n = kDefaultVariants;
    std::optional<std::string> language_hint;
    /// Forwarded verbatim to remote providers; mocks ignore it.
    bool translate = false;
};

inline void validate(const ExpansionRequest& req) {
    if (req.query_text.empty()) fail(ErrorCode::InvalidQuery, "expansion query text is empty");
    if (req.n < 1 || req.n > kMaxVariants) {
        fail(ErrorCode::InvalidQuery, "expansion variant count must be in [1, 16]");
    }
}

struct ProviderConfig {
    std::string endpoint_url;
    std::string auth_token; // never logged
    /// Total budget for one call, retries included.
    int timeout_ms = kEmbedderTimeoutMs;
    int retries = 2;
    int max_in_flight = 8;
};

inline void validate(const ProviderConfig& cfg) {
    if (cfg.endpoint_url.empty()) fail(ErrorCode::InvalidArgument, "provider endpoint_url is empty");
    if (cfg.timeout_ms < kMinTimeoutMs) fail(ErrorCode::InvalidArgument, "provider timeout_ms must be >= 100");
    if (cfg.retries < 0) fail(ErrorCode::InvalidArgument, "provider retries must be >= 0");
    if (cfg.max_in_flight < 1) fail(ErrorCode::InvalidArgument, "provider max_in_flight must be >= 1");
}

/// scheme://host[:port] with userinfo, path and query dropped, for logs.
inline std::string redact_url(const std::string& url) {
    const auto scheme = url.find("://");
    const std::size_t start = scheme == std::string::npos ? 0 : scheme + 3;
    std::size_t end = url.find_first_of("/?#", start);
    if (end == std::string::npos) end = url.size();
    std::string authority = url.substr(start, end - start);
    if (auto at = authority.rfind('@'); at != std::string::npos) authority = authority.substr(at + 1);
    return url.substr(0, start) + authority;
}

/// Absolute point in time after which a call must not start new work.
using Deadline = std::optional<Clock::time_point>;

class ExpansionProvider {
public:
    virtual ~ExpansionProvider() = default;
    /// May throw; expand_query turns any failure into the degraded result.
    virtual std::vector<std::string> variants(const ExpansionRequest& req, Deadline deadline) const = 0;
    virtual std::string kind() const = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<float> embed(const std::string& text, const std::string& space, std::size_t dim,
                                     Deadline deadline) const = 0;
    virtual std::string kind() const = 0;
};

// ---------------------------------------------------------------------------
// Mocks

class MockExpansionProvider final : public ExpansionProvider {
public:
    explicit MockExpansionProvider(std::uint64_t seed = 0) : seed_(seed) {}

    std::vector<std::string> variants(const ExpansionRequest& req, Deadline) const override {
        static const std::vector<std::string> templates = {
            "a photo of {}", "a video frame showing {}", "a scene where {}", "footage of {}",
            "an image depicting {}", "{}, seen in a news clip", "a close-up shot of {}", "a picture with {}",
            "a still frame of {}", "a television scene of {}", "the moment {}", "a camera view of {}",
            "a recorded scene showing {}", "an everyday scene of {}", "a snapshot of {}", "a clip showing {}"};
        std::vector<std::string> out{req.query_text};
        for (int i = 1; i < req.n; ++i) {
            const auto& t = templates[(seed_ + static_cast<std::uint64_t>(i) - 1) % templates.size()];
            const auto pos = t.find("{}");
            out.push_back(t.substr(0, pos) + req.query_text + t.substr(pos + 2));
        }
        return out;
    }

    std::string kind() const override { return "mock"; }

private:
    std::uint64_t seed_;
};

/// Hash of (space, text) seeds a Gaussian draw that is normalized to unit
/// length, so equal texts always embed identically.
inline std::vector<float> mock_embedding(const std::string& text, const std::string& space, std::size_t dim,
                                         std::uint64_t seed = 0) {
    Rng rng(fnv1a(space + '\x1f' + text) ^ (seed * 0x9e3779b97f4a7c15ull));
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::uint64_t seed = 0) : seed_(seed) {}

    std::vector<float> embed(const std::string& text, const std::string& space, std::size_t dim,
                             Deadline) const override {
        return mock_embedding(text, space, dim, seed_);
    }

    std::string kind() const override { return "mock"; }

private:
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// HTTP clients

namespace detail {

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(ErrorCode::InvalidArgument, "provider URL needs a scheme: " + redact_url(url));
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

/// POSTs a JSON body with retries and exponential backoff inside the total
/// budget. Returns the parsed response or throws ProviderUnavailable.
class JsonPoster {
public:
    JsonPoster(ProviderConfig cfg, std::string what)
        : cfg_(validated(std::move(cfg))), what_(std::move(what)), url_(split_url(cfg_.endpoint_url)),
          slots_(cfg_.max_in_flight) {}

    json post(const json& body, Deadline deadline) const {
        auto end = Clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
        if (deadline && *deadline < end) end = *deadline;
        const std::string payload = body.dump();
        Rng jitter(fnv1a(payload));
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            if (attempt > 0) {
                const double base = kBackoffBaseMs * std::pow(2.0, attempt - 1);
                const auto pause = std::chrono::milliseconds(static_cast<long>(base * (0.5 + jitter.uniform())));
                if (Clock::now() + pause >= end) break;
                std::this_thread::sleep_for(pause);
            }
            const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(end - Clock::now());
            if (remaining.count() <= 0) break;
            Slot slot(slots_);
            httplib::Client cli(url_.base);
            cli.set_connection_timeout(remaining);
            cli.set_read_timeout(remaining);
            cli.set_write_timeout(remaining);
            httplib::Headers headers;
            if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
            auto res = cli.Post(url_.path, headers, payload, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
            } else if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                if (res->status >= 400 && res->status < 500 && res->status != 429) break;
            } else {
                try {
                    return json::parse(res->body);
                } catch (const json::exception&) {
                    last_error = "response is not JSON";
                }
            }
            spdlog::debug("{} attempt {} to {} failed: {}", what_, attempt + 1, redact_url(cfg_.endpoint_url),
                          last_error);
        }
        fail(ErrorCode::ProviderUnavailable,
             what_ + " provider at " + redact_url(cfg_.endpoint_url) + " unavailable: " + last_error);
    }

    const ProviderConfig& config() const { return cfg_; }

private:
    static ProviderConfig validated(ProviderConfig cfg) {
        validate(cfg);
        return cfg;
    }

    struct Slot {
        explicit Slot(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
        ~Slot() { sem.release(); }
        std::counting_semaphore<>& sem;
    };

    ProviderConfig cfg_;
    std::string what_;
    SplitUrl url_;
    mutable std::counting_semaphore<> slots_;
};

} // namespace detail

class RemoteExpansionProvider final : public ExpansionProvider {
public:
    explicit RemoteExpansionProvider(ProviderConfig cfg) : poster_(std::move(cfg), "expansion") {}

    std::vector<std::string> variants(const ExpansionRequest& req, Deadline deadline) const override {
        json body{{"text", req.query_text}, {"n", req.n}};
        if (req.language_hint) body["language_hint"] = *req.language_hint;
        if (req.translate) body["translate"] = true;
        const json res = poster_.post(body, deadline);
        if (!res.is_object() || !res.contains("variants") || !res["variants"].is_array()) {
            fail(ErrorCode::ProviderUnavailable, "expansion response lacks a variants array");
        }
        std::vector<std::string> out;
        for (const auto& v : res["variants"]) {
            if (v.is_string()) out.push_back(v.get<std::string>());
        }
        return out;
    }

    std::string kind() const override { return "remote"; }

private:
    detail::JsonPoster poster_;
};

class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit RemoteEmbeddingProvider(ProviderConfig cfg) : poster_(std::move(cfg), "embedding") {}

    std::vector<float> embed(const std::string& text, const std::string& space, std::size_t,
                             Deadline deadline) const override {
        const json res = poster_.post({{"text", text}, {"space", space}}, deadline);
        if (!res.is_object() || !res.contains("vector") || !res["vector"].is_array()) {
            fail(ErrorCode::ProviderUnavailable, "embedding response lacks a vector array");
        }
        std::vector<float> out;
        out.reserve(res["vector"].size());
        for (const auto& x : res["vector"]) {
            if (!x.is_number()) fail(ErrorCode::ProviderUnavailable, "embedding vector holds a non-number");
            out.push_back(x.get<float>());
        }
        return out;
    }

    std::string kind() const override { return "remote"; }

private:
    detail::JsonPoster poster_;
};

// ---------------------------------------------------------------------------
// Call sites

/// Variants for a query: original first, then distinct non-empty provider
/// variants, at most req.n in total. Never throws on provider failure.
inline std::vector<std::string> expand_query(const ExpansionRequest& req, const ExpansionProvider* provider,
                                             Deadline deadline = std::nullopt) {
    validate(req);
    std::vector<std::string> out{req.query_text};
    if (req.n == 1) return out;
    if (!provider) {
        spdlog::warn("query expansion requested but no expansion provider is configured; using the original query");
        return out;
    }
    std::vector<std::string> got;
    try {
        got = provider->variants(req, deadline);
    } catch (const std::exception& e) {
        spdlog::warn("query expansion failed, using the original query: {}", e.what());
        return out;
    }
    std::unordered_set<std::string> seen{req.query_text};
    for (auto& v : got) {
        if (static_cast<int>(out.size()) >= req.n) break;
        if (v.empty() || !seen.insert(v).second) continue;
        out.push_back(std::move(v));
    }
    return out;
}

inline std::vector<float> embed_text(const std::string& text, const std::string& space, std::size_t dim,
                                     const EmbeddingProvider* provider, Deadline deadline = std::nullopt) {
    if (!provider) fail(ErrorCode::ProviderUnavailable, "no embedding provider is configured");
    std::vector<float> v;
    try {
        v = provider->embed(text, space, dim, deadline);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ProviderUnavailable) throw;
        fail(ErrorCode::ProviderUnavailable, std::string("embedding failed: ") + e.what());
    } catch (const std::exception& e) {
        fail(ErrorCode::ProviderUnavailable, std::string("embedding failed: ") + e.what());
    }
    if (v.size() != dim) {
        fail(ErrorCode::DimensionMismatch, "embedder returned " + std::to_string(v.size()) +
                                               " values for space '" + space + "' of dim " + std::to_string(dim));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Configuration

struct ProvidersConfig {
    std::optional<ProviderConfig> expansion;
    std::optional<ProviderConfig> embedder;
};

namespace detail {

inline void apply_setting(ProvidersConfig& pc, const std::string& key, const std::string& value) {
    auto& exp = pc.expansion;
    auto& emb = pc.embedder;
    auto ensure = [](std::optional<ProviderConfig>& c, int timeout) -> ProviderConfig& {
        if (!c) {
            c = ProviderConfig{};
            c->timeout_ms = timeout;
        }
        return *c;
    };
    auto to_int = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            const int n = std::stoi(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "provider setting " + key + " must be an integer");
        }
    };
    if (key == "EXPANSION_URL") ensure(exp, kExpansionTimeoutMs).endpoint_url = value;
    else if (key == "EXPANSION_TOKEN") ensure(exp, kExpansionTimeoutMs).auth_token = value;
    else if (key == "EXPANSION_TIMEOUT_MS") ensure(exp, kExpansionTimeoutMs).timeout_ms = to_int(value);
    else if (key == "EXPANSION_RETRIES") ensure(exp, kExpansionTimeoutMs).retries = to_int(value);
    else if (key == "EXPANSION_MAX_IN_FLIGHT") ensure(exp, kExpansionTimeoutMs).max_in_flight = to_int(value);
    else if (key == "EMBEDDER_URL") ensure(emb, kEmbedderTimeoutMs).endpoint_url = value;
    else if (key == "EMBEDDER_TOKEN") ensure(emb, kEmbedderTimeoutMs).auth_token = value;
    else if (key == "EMBEDDER_TIMEOUT_MS") ensure(emb, kEmbedderTimeoutMs).timeout_ms = to_int(value);
    else if (key == "EMBEDDER_RETRIES") ensure(emb, kEmbedderTimeoutMs).retries = to_int(value);
    else if (key == "EMBEDDER_MAX_IN_FLIGHT") ensure(emb, kEmbedderTimeoutMs).max_in_flight = to_int(value);
    else fail(ErrorCode::InvalidArgument, "unknown provider setting " + key);
}

inline const std::vector<std::string>& setting_names() {
    static const std::vector<std::string> names = {
        "EXPANSION_URL",    "EXPANSION_TOKEN",  "EXPANSION_TIMEOUT_MS", "EXPANSION_RETRIES",
        "EXPANSION_MAX_IN_FLIGHT", "EMBEDDER_URL", "EMBEDDER_TOKEN", "EMBEDDER_TIMEOUT_MS",
        "EMBEDDER_RETRIES", "EMBEDDER_MAX_IN_FLIGHT"};
    return names;
}

} // namespace detail

/// Settings from the environment (EXPANSION_URL, EXPANSION_TOKEN,
/// EMBEDDER_URL, EMBEDDER_TOKEN and the *_TIMEOUT_MS / *_RETRIES /
/// *_MAX_IN_FLIGHT knobs). A provider without a URL stays unconfigured.
inline ProvidersConfig config_from_env() {
    ProvidersConfig pc;
    for (const auto& name : detail::setting_names()) {
        if (const char* v = std::getenv(name.c_str()); v && *v) detail::apply_setting(pc, name, v);
    }
    return pc;
}

/// Overlays a JSON object using the same keys as the environment, e.g.
/// {"EXPANSION_URL": "http://...", "EXPANSION_TIMEOUT_MS": 8000}.
inline void apply_config_json(ProvidersConfig& pc, const json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "provider config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) detail::apply_setting(pc, key, value.get<std::string>());
        else if (value.is_number_integer()) detail::apply_setting(pc, key, std::to_string(value.get<long>()));
        else fail(ErrorCode::InvalidArgument, "provider setting " + key + " must be a string or integer");
    }
}

struct ProviderSet {
    std::shared_ptr<const ExpansionProvider> expansion;
    std::shared_ptr<const EmbeddingProvider> embedder;
};

inline ProviderSet make_providers(const ProvidersConfig& pc) {
    ProviderSet set;
    if (pc.expansion && !pc.expansion->endpoint_url.empty()) {
        set.expansion = std::make_shared<RemoteExpansionProvider>(*pc.expansion);
    }
    if (pc.embedder && !pc.embedder->endpoint_url.empty()) {
        set.embedder = std::make_shared<RemoteEmbeddingProvider>(*pc.embedder);
    }
    return set;
}

inline ProviderSet mock_providers(std::uint64_t seed = 0) {
    return {std::make_shared<MockExpansionProvider>(seed), std::make_shared<MockEmbeddingProvider>(seed)};
}

} // namespace vidret::providers
