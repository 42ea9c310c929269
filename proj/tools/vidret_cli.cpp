// vidret: operator command line.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <json.hpp>

#include "vidret/demo.hpp"
#include "vidret/engine.hpp"
#include "vidret/ingest.hpp"
#include "vidret/keyframe_select.hpp"
#include "vidret/providers.hpp"
#include "vidret/service.hpp"
#include "vidret/threshold.hpp"

using namespace vidret;
using json = nlohmann::json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitDegenerate = 2;
constexpr int kExitUsage = 64;

int report(ErrorCode code, const std::string& message, int exit_code) {
    std::cerr << engine::serialize(engine::error_json(code, message));
    return exit_code;
}

json threshold_json(const threshold::ThresholdResult& r, const std::string& source) {
    json comps = json::array();
    for (const auto& c : r.mixture.components) {
        comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"sigma", c.sigma}});
    }
    return {{"source", source},
            {"threshold", r.threshold},
            {"mixture", comps},
            {"log_likelihood", r.log_likelihood},
            {"iterations", r.iterations},
            {"fallback_used", r.fallback_used},
            {"bandwidth", r.bandwidth},
            {"modes", {{"found", r.modes.found}, {"m1", r.modes.m1}, {"m2", r.modes.m2}, {"valley", r.modes.valley}}}};
}

providers::ProviderSet load_providers(bool mock, const std::string& config_path, std::uint64_t seed) {
    if (mock) return providers::mock_providers(seed);
    auto pc = providers::config_from_env();
    if (!config_path.empty()) {
        json j;
        try {
            j = json::parse(io::read_file(config_path));
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, config_path + ": invalid JSON: " + e.what());
        }
        providers::apply_config_json(pc, j);
    }
    return providers::make_providers(pc);
}

service::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("vidret"));
    if (const char* lvl = std::getenv("VIDRET_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));

    CLI::App app{"Multimodal video retrieval engine"};
    app.require_subcommand(1);

    // threshold
    auto* th = app.add_subcommand("threshold", "Fit the boundary-score threshold of a score file");
    std::string scores_path;
    std::optional<double> bandwidth;
    bool th_json = false;
    th->add_option("--scores", scores_path, "Score file (score or frame,score per line)")->required();
    th->add_option("--bandwidth", bandwidth, "KDE bandwidth (default: Silverman)")->check(CLI::PositiveNumber);
    th->add_flag("--json", th_json, "Print JSON");

    // keyframes
    auto* kf = app.add_subcommand("keyframes", "Pick K-Means exemplar frames from a feature file");
    std::string features_path;
    int k = keyframes::kDefaultK;
    std::uint64_t kf_seed = 0;
    bool kf_json = false;
    kf->add_option("--features", features_path, "KFV1 feature file")->required();
    kf->add_option("--k", k, "Cluster count")->check(CLI::PositiveNumber);
    kf->add_option("--seed", kf_seed, "Initialization seed");
    kf->add_flag("--json", kf_json, "Print JSON");

    // index build
    auto* idx = app.add_subcommand("index", "Index maintenance");
    idx->require_subcommand(1);
    auto* build = idx->add_subcommand("build", "Validate a manifest and write its space files");
    std::string build_manifest, build_out;
    bool build_json = false;
    build->add_option("--manifest", build_manifest, "Corpus manifest")->required();
    build->add_option("--out", build_out, "Output directory (default: <manifest dir>/index)");
    build->add_flag("--json", build_json, "Print JSON");

    // query
    auto* q = app.add_subcommand("query", "Run one search or temporal search; prints one JSON line");
    std::string q_manifest, q_config;
    std::vector<std::string> stage_texts;
    std::uint32_t window = fusion::kDefaultWindow;
    std::size_t top_k = engine::kDefaultTopK;
    bool q_mock = false;
    std::uint64_t q_seed = 0;
    q->add_option("--manifest", q_manifest, "Corpus manifest")->required();
    q->add_option("--stage", stage_texts, "Stage query JSON (repeat for temporal search)")->required();
    q->add_option("--window", window, "Temporal window in keyframes")->check(CLI::PositiveNumber);
    q->add_option("--top-k", top_k, "Result count")->check(CLI::PositiveNumber);
    q->add_flag("--mock-providers", q_mock, "Use deterministic mock providers");
    q->add_option("--provider-seed", q_seed, "Seed for mock providers");
    q->add_option("--config", q_config, "Provider config JSON");
    q->add_flag("--json", "Accepted for symmetry; output is always JSON");

    // demo-corpus
    auto* dc = app.add_subcommand("demo-corpus", "Generate the synthetic demo corpus");
    demo::DemoOptions dopt;
    std::string dc_out;
    dc->add_option("--out", dc_out, "Output directory")->required();
    dc->add_option("--videos", dopt.videos, "Video count")->check(CLI::PositiveNumber);
    dc->add_option("--keyframes", dopt.keyframes, "Keyframes per video")->check(CLI::Range(5, 100000));
    dc->add_option("--seed", dopt.seed, "Seed");
    dc->add_flag("--json", "Accepted for symmetry; output is always JSON");

    // serve
    auto* sv = app.add_subcommand("serve", "Run the HTTP service");
    std::string sv_manifest, sv_config, ui_dir, host = "127.0.0.1";
    int port = 8080;
    bool sv_mock = false;
    std::uint64_t sv_seed = 0;
    sv->add_option("--manifest", sv_manifest, "Corpus manifest")->required();
    sv->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
    sv->add_option("--host", host, "Bind address");
    sv->add_flag("--mock-providers", sv_mock, "Use deterministic mock providers");
    sv->add_option("--provider-seed", sv_seed, "Seed for mock providers");
    sv->add_option("--config", sv_config, "Provider config JSON");
    sv->add_option("--ui-dir", ui_dir, "Static web UI directory to serve at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(ErrorCode::InvalidArgument, e.what(), kExitUsage);
    }

    try {
        if (*th) {
            const auto file = threshold::read_score_file(scores_path);
            threshold::KdeConfig cfg;
            cfg.bandwidth = bandwidth;
            const auto r = threshold::solve_threshold(file.series, cfg);
            if (th_json) {
                std::cout << engine::serialize(threshold_json(r, scores_path));
            } else {
                std::printf("threshold %.9g\n", r.threshold);
                for (const auto& c : r.mixture.components) {
                    std::printf("component weight %.9g mean %.9g sigma %.9g\n", c.weight, c.mean, c.sigma);
                }
                std::printf("iterations %d fallback %s\n", r.iterations, r.fallback_used ? "yes" : "no");
            }
            return 0;
        }
        if (*kf) {
            const auto feats = keyframes::read_feature_file(features_path);
            const auto ex = keyframes::select_exemplars(feats, k, kf_seed);
            if (kf_json) {
                std::cout << engine::serialize({{"source", features_path}, {"k", k}, {"seed", kf_seed}, {"exemplars", ex}});
            } else {
                for (std::size_t i = 0; i < ex.size(); ++i) std::cout << (i ? " " : "") << ex[i];
                std::cout << "\n";
            }
            return 0;
        }
        if (*build) {
            const auto corpus = load_corpus(build_manifest);
            const fs::path out = build_out.empty() ? fs::path(build_manifest).parent_path() / "index" : fs::path(build_out);
            fs::create_directories(out);
            json spaces = json::array();
            for (const auto& [name, space] : corpus.spaces()) {
                const auto file = (out / (name + ".ems")).string();
                save_space(space, file);
                spaces.push_back({{"name", name}, {"dim", space.dim()}, {"rows", space.size()}, {"file", file}});
            }
            const json summary{{"corpus_name", corpus.name()},
                               {"videos", corpus.videos().size()},
                               {"keyframes", corpus.keyframes().size()},
                               {"spaces", spaces}};
            if (build_json) {
                std::cout << engine::serialize(summary);
            } else {
                std::cout << "corpus " << corpus.name() << ": " << corpus.videos().size() << " videos, "
                          << corpus.keyframes().size() << " keyframes\n";
                for (const auto& s : spaces) {
                    std::cout << "  " << s["name"].get<std::string>() << " dim " << s["dim"] << " -> "
                              << s["file"].get<std::string>() << "\n";
                }
            }
            return 0;
        }
        if (*q) {
            std::vector<json> stages;
            for (const auto& s : stage_texts) {
                try {
                    stages.push_back(json::parse(s));
                } catch (const json::exception&) {
                    fail(ErrorCode::InvalidQuery, "--stage is not valid JSON: " + s);
                }
            }
            auto corpus = std::make_shared<const Corpus>(load_corpus(q_manifest));
            const engine::Engine eng(corpus, load_providers(q_mock, q_config, q_seed));
            std::cout << engine::serialize(eng.query(stages, window, top_k));
            return 0;
        }
        if (*dc) {
            dopt.out = dc_out;
            const auto truth = demo::write_demo_corpus(dopt);
            std::cout << engine::serialize({{"out", dc_out},
                                            {"manifest", (fs::path(dc_out) / "manifest.json").string()},
                                            {"videos", dopt.videos},
                                            {"keyframes", dopt.keyframes},
                                            {"seed", dopt.seed},
                                            {"bayes_threshold", truth.bayes_threshold}});
            return 0;
        }
        if (*sv) {
            auto corpus = std::make_shared<const Corpus>(load_corpus(sv_manifest));
            auto eng = std::make_shared<const engine::Engine>(corpus, load_providers(sv_mock, sv_config, sv_seed));
            service::ServiceOptions so;
            so.host = host;
            if (!ui_dir.empty()) so.ui_dir = ui_dir;
            service::Service svc(eng, so);
            const int bound = svc.bind(port);
            if (bound < 0) return report(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port), kExitError);
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("serving corpus '{}' on http://{}:{}", corpus->name(), host, bound);
            std::cout << engine::serialize({{"listening", host + ":" + std::to_string(bound)}}) << std::flush;
            svc.run();
            g_service = nullptr;
            return 0;
        }
    } catch (const Error& e) {
        const int code = e.code() == ErrorCode::DegenerateInput ? kExitDegenerate : kExitError;
        return report(e.code(), e.what(), code);
    } catch (const std::exception& e) {
        std::cerr << engine::serialize({{"error", {{"code", "internal"}, {"message", e.what()}}}});
        return kExitError;
    }
    return kExitUsage;
}
