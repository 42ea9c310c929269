#pragma once

// Seeded synthetic corpus: embeddings, detections, colors, OCR, placeholder
// JPEG keyframes, a bimodal boundary-score file with its analytic threshold,
// and a keyframe feature file. Output is a pure function of the options.
//
// Planted scenario: one keyframe whose embeddings sit next to the mock
// embedding of "cutting mushrooms" in every space, with an OCR frame reading
// "cu nang" three keyframes later in the same video.

#include <jpeglib.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "vidret/binary_io.hpp"
#include "vidret/embed_index.hpp"
#include "vidret/grid_meta.hpp"
#include "vidret/ingest.hpp"
#include "vidret/keyframe_select.hpp"
#include "vidret/providers.hpp"
#include "vidret/random.hpp"

namespace vidret::demo {

inline constexpr const char* kTargetText = "cutting mushrooms";
inline constexpr const char* kOcrPhrase = "cu nang";
inline constexpr std::uint32_t kOcrOffset = 3;
inline constexpr int kImageWidth = 112;
inline constexpr int kImageHeight = 63;

struct DemoOptions {
    fs::path out;
    int videos = 20;
    int keyframes = 30;
    std::uint64_t seed = 0;
};

struct DemoTruth {
    KeyframeId target;
    KeyframeId ocr_frame;
    double bayes_threshold = 0.0;
};

inline std::string video_name(int v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "V%03d", v);
    return buf;
}

/// Baseline JPEG of an RGB buffer (quality 80).
inline std::string encode_jpeg(const std::vector<unsigned char>& rgb, int width, int height) {
    jpeg_compress_struct cinfo{};
    jpeg_error_mgr jerr{};
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    unsigned char* buf = nullptr;
    unsigned long size = 0;
    jpeg_mem_dest(&cinfo, &buf, &size);
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 80, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<unsigned char*>(rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::string out(reinterpret_cast<const char*>(buf), size);
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    return out;
}

namespace detail {

inline std::vector<double> unit_gaussian(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

inline std::vector<float> mix(const std::vector<double>& base, const std::vector<double>& noise, double amount) {
    std::vector<float> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = static_cast<float>(base[i] + amount * noise[i]);
    return out;
}

inline std::string fmt_line(const nlohmann::json& j) { return j.dump() + "\n"; }

} // namespace detail

inline DemoTruth write_demo_corpus(const DemoOptions& opt) {
    if (opt.videos < 1) fail(ErrorCode::InvalidArgument, "demo corpus needs at least one video");
    if (opt.keyframes < static_cast<int>(kOcrOffset) + 2) {
        fail(ErrorCode::InvalidArgument, "demo corpus needs at least 5 keyframes per video");
    }
    using nlohmann::json;
    Rng rng(opt.seed ^ 0x5dee7c0de5eedull);
    fs::create_directories(opt.out / "spaces");
    fs::create_directories(opt.out / "media");
    fs::create_directories(opt.out / "scores");
    fs::create_directories(opt.out / "features");

    const double fps = 25.0;
    DemoTruth truth;
    const int target_video = static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.videos)));
    const auto target_idx = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(opt.keyframes) - kOcrOffset));

    // Keyframe ids with frame numbers and timestamps.
    std::vector<std::vector<KeyframeId>> ids(static_cast<std::size_t>(opt.videos));
    for (int v = 0; v < opt.videos; ++v) {
        for (int k = 0; k < opt.keyframes; ++k) {
            const auto frame = static_cast<std::uint32_t>(k * 50 + static_cast<int>(rng.below(25)));
            ids[v].push_back({video_name(v), static_cast<std::uint32_t>(k), frame,
                              static_cast<std::uint64_t>(std::llround(frame * 1000.0 / fps))});
        }
    }
    truth.target = ids[target_video][target_idx];
    truth.ocr_frame = ids[target_video][target_idx + kOcrOffset];

    // Embeddings: video topic -> scene (5 keyframes) -> keyframe noise.
    const std::vector<std::pair<std::string, std::uint32_t>> space_defs = {{"clip", 64}, {"beit3", 32}};
    CorpusManifest manifest;
    manifest.corpus_name = "demo-" + std::to_string(opt.seed);
    for (int v = 0; v < opt.videos; ++v) manifest.videos.push_back({video_name(v), fps, static_cast<std::uint32_t>(opt.keyframes)});
    for (const auto& [name, dim] : space_defs) {
        EmbeddingSpace space(name, dim);
        const auto anchor = providers::mock_embedding(kTargetText, name, dim);
        const std::vector<double> target(anchor.begin(), anchor.end());
        for (int v = 0; v < opt.videos; ++v) {
            const auto topic = detail::unit_gaussian(rng, dim);
            std::vector<double> scene;
            for (int k = 0; k < opt.keyframes; ++k) {
                if (k % 5 == 0) {
                    const auto shift = detail::unit_gaussian(rng, dim);
                    const auto s = detail::mix(topic, shift, 0.8);
                    scene.assign(s.begin(), s.end());
                }
                const auto noise = detail::unit_gaussian(rng, dim);
                const bool planted = v == target_video && static_cast<std::uint32_t>(k) == target_idx;
                space.add(ids[v][k], planted ? detail::mix(target, noise, 0.25) : detail::mix(scene, noise, 0.35));
            }
        }
        const std::string file = "spaces/" + name + ".ems";
        save_space(space, (opt.out / file).string());
        manifest.spaces.push_back({name, dim, file});
    }

    // Detections, colors, OCR and images.
    static const std::vector<std::string> classes = {"person", "car",   "bicycle", "dog",   "cup",        "bottle",
                                                     "chair",  "tv",    "bowl",    "knife", "motorcycle", "bus"};
    static const std::vector<std::string> ocr_words = {"tin", "tuc", "thoi", "su",  "bong", "da",   "gia",
                                                       "vang", "ha", "noi",  "sai", "gon",  "mua",  "he",
                                                       "xe",  "may", "dien", "ban", "tre",  "phim", "ngay"};
    std::string det_lines, color_lines, ocr_lines;
    for (int v = 0; v < opt.videos; ++v) {
        const auto base_color = static_cast<std::size_t>(rng.below(meta::kPalette.size()));
        fs::create_directories(opt.out / "media" / video_name(v));
        for (int k = 0; k < opt.keyframes; ++k) {
            const auto& id = ids[v][k];
            const bool planted = id == truth.target;

            std::vector<meta::Detection> dets;
            if (planted) {
                dets.push_back({"person", 0.95, {0.58, 0.30, 0.70, 0.42}});
                dets.push_back({"knife", 0.81, {0.40, 0.55, 0.52, 0.62}});
                dets.push_back({"bowl", 0.77, {0.20, 0.60, 0.38, 0.80}});
            } else {
                for (std::uint64_t n = rng.below(5); n > 0; --n) {
                    const double w = rng.uniform(0.08, 0.5), h = rng.uniform(0.08, 0.5);
                    const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
                    const double conf = std::round(rng.uniform(0.3, 1.0) * 1000.0) / 1000.0;
                    dets.push_back({classes[rng.below(classes.size())], conf, {x, y, x + w, y + h}});
                }
            }
            json dj = json::array();
            for (const auto& d : dets) {
                dj.push_back({{"class", d.class_name}, {"confidence", d.confidence},
                              {"bbox", {d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]}}});
            }
            det_lines += detail::fmt_line({{"video_id", id.video_id}, {"keyframe_index", id.keyframe_index}, {"detections", dj}});

            std::array<std::string, meta::kCellCount> cells;
            for (auto& c : cells) {
                const double u = rng.uniform();
                if (u < 0.6) c = std::string(meta::kPalette[base_color]);
                else if (u < 0.85) c = std::string(meta::kPalette[rng.below(meta::kPalette.size())]);
                else c = "";
            }
            color_lines += detail::fmt_line({{"video_id", id.video_id}, {"keyframe_index", id.keyframe_index}, {"cells", cells}});

            std::string text;
            if (id == truth.ocr_frame) {
                text = std::string(kOcrPhrase) + " tuoi ngon";
            } else if (rng.uniform() < 0.3) {
                for (std::uint64_t n = 1 + rng.below(3); n > 0; --n) {
                    if (!text.empty()) text += ' ';
                    text += ocr_words[rng.below(ocr_words.size())];
                }
            }
            if (!text.empty()) {
                ocr_lines += detail::fmt_line({{"video_id", id.video_id}, {"keyframe_index", id.keyframe_index}, {"text", text}});
            }

            std::vector<unsigned char> rgb(static_cast<std::size_t>(kImageWidth) * kImageHeight * 3);
            for (int py = 0; py < kImageHeight; ++py) {
                for (int px = 0; px < kImageWidth; ++px) {
                    const int cell = (py * 7 / kImageHeight) * 7 + px * 7 / kImageWidth;
                    const auto& label = cells[static_cast<std::size_t>(cell)];
                    const auto c = label.empty() ? std::array<int, 3>{200, 200, 200} : meta::palette_rgb(label);
                    for (int ch = 0; ch < 3; ++ch) rgb[(static_cast<std::size_t>(py) * kImageWidth + px) * 3 + ch] = static_cast<unsigned char>(c[ch]);
                }
            }
            for (const auto& d : dets) {
                const int x1 = static_cast<int>(d.bbox[0] * (kImageWidth - 1)), x2 = static_cast<int>(d.bbox[2] * (kImageWidth - 1));
                const int y1 = static_cast<int>(d.bbox[1] * (kImageHeight - 1)), y2 = static_cast<int>(d.bbox[3] * (kImageHeight - 1));
                auto put = [&](int x, int y) {
                    for (int ch = 0; ch < 3; ++ch) rgb[(static_cast<std::size_t>(y) * kImageWidth + x) * 3 + ch] = 20;
                };
                for (int x = x1; x <= x2; ++x) {
                    put(x, y1);
                    put(x, y2);
                }
                for (int y = y1; y <= y2; ++y) {
                    put(x1, y);
                    put(x2, y);
                }
            }
            io::write_file((opt.out / "media" / id.video_id / (std::to_string(k) + ".jpg")).string(),
                           encode_jpeg(rgb, kImageWidth, kImageHeight));
        }
    }
    io::write_file((opt.out / "detections.jsonl").string(), det_lines);
    io::write_file((opt.out / "colors.jsonl").string(), color_lines);
    io::write_file((opt.out / "ocr.jsonl").string(), ocr_lines);
    manifest.detections_file = "detections.jsonl";
    manifest.colors_file = "colors.jsonl";
    manifest.ocr_file = "ocr.jsonl";
    manifest.media_root = "media";
    io::write_file((opt.out / "manifest.json").string(), to_json(manifest).dump(2) + "\n");

    // Boundary scores: two equal-variance components, so the Bayes threshold
    // has the closed form (m1 + m2)/2 + s^2 ln(w1/w2) / (m2 - m1).
    {
        const double w1 = 0.8, m1 = 0.15, m2 = 0.75, s = 0.06;
        const int n = 5000;
        truth.bayes_threshold = 0.5 * (m1 + m2) + s * s * std::log(w1 / (1.0 - w1)) / (m2 - m1);
        std::string text = "# frame,score\n";
        char buf[64];
        for (int i = 0; i < n; ++i) {
            const double x = rng.uniform() < w1 ? rng.normal(m1, s) : rng.normal(m2, s);
            std::snprintf(buf, sizeof buf, "%d,%.9g\n", i, x);
            text += buf;
        }
        io::write_file((opt.out / "scores" / "boundary_scores.txt").string(), text);
        json side{{"samples", n},
                  {"components", {{{"weight", w1}, {"mean", m1}, {"sigma", s}}, {{"weight", 1.0 - w1}, {"mean", m2}, {"sigma", s}}}},
                  {"bayes_threshold", truth.bayes_threshold}};
        io::write_file((opt.out / "scores" / "boundary_scores.json").string(), side.dump(2) + "\n");
    }

    // Shot features: three blobs of 12-D frame features.
    {
        std::vector<keyframes::FeatureVector> feats;
        std::uint32_t frame = 0;
        for (int b = 0; b < 3; ++b) {
            std::vector<double> center(12);
            for (auto& c : center) c = rng.uniform(-4.0, 4.0);
            for (int i = 0; i < 30; ++i) {
                keyframes::FeatureVector f{frame++, {}};
                for (double c : center) f.values.push_back(static_cast<float>(c + 0.5 * rng.normal()));
                feats.push_back(std::move(f));
            }
        }
        keyframes::write_feature_file((opt.out / "features" / "shot_features.kfv").string(), feats, 12);
    }

    auto id_json = [](const KeyframeId& id) {
        return json{{"video_id", id.video_id}, {"keyframe_index", id.keyframe_index}};
    };
    json t{{"seed", opt.seed},
           {"target_text", kTargetText},
           {"target", id_json(truth.target)},
           {"ocr_phrase", kOcrPhrase},
           {"ocr_frame", id_json(truth.ocr_frame)},
           {"bayes_threshold", truth.bayes_threshold}};
    io::write_file((opt.out / "demo_truth.json").string(), t.dump(2) + "\n");
    return truth;
}

} // namespace vidret::demo
