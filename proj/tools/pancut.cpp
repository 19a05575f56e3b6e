// pancut: command-line front end for the segmentation library.
//
// Subcommands mirror the pipeline stages so grounding embeddings can be
// swapped without re-running discovery:
//
//   discover  features in, per-object masks out
//   ground    masks + grounding features + texts in, labels out
//   segment   all-in-one (discover + ground + render)
//   eval      prediction/ground-truth label maps in, mIoU JSON out
//   overlay   blend a label map over an image
//   rerun     replay a previous run from its manifest
//
// Exit codes: 0 success, 2 input could not be loaded (missing/corrupt file),
// 3 loaded inputs violate a contract.  Errors print one JSON object,
// {"error": kind, "message": text}, on stderr.  Data goes to stdout only.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pancut/pancut.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// An error tagged with the exit code of the phase it escaped from.
struct PhasedError {
    int code;
    std::string kind;
    std::string message;
};

// Run `f` in the load phase: any failure means an input could not be brought
// into memory and maps to exit code 2.
template <typename F>
auto load_phase(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const pancut::Error& e) {
        throw PhasedError{2, e.kind(), e.what()};
    } catch (const std::exception& e) {
        throw PhasedError{2, "IOError", e.what()};
    }
}

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
    if (const char* env = std::getenv("PANCUT_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw PhasedError{2, "FormatError",
                              std::string("PANCUT_SEED is not an integer: ") + env};
        }
    }
    return flag_seed;
}

int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

pancut::LabelMap mask_to_label_map(const std::vector<std::uint8_t>& mask, int h, int w) {
    pancut::LabelMap map;
    map.height = h;
    map.width = w;
    map.labels.assign(mask.begin(), mask.end());
    return map;
}

void write_manifest(pancut::RunManifest& manifest, const std::string& path,
                    std::chrono::steady_clock::time_point start) {
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.save(path);
}

// ---------------------------------------------------------------------------
// discover
// ---------------------------------------------------------------------------

json discover_defaults() {
    return json{{"features", ""},   {"image", ""},         {"patch_size", 8},
                {"max_iters", 16},  {"min_nodes", 5},      {"epsilon_w", 1e-5},
                {"affine_shift", false}, {"degenerate_lambda", 0.999},
                {"crf", "on"},      {"seed", 0x70616e63ull}, {"out", ""}};
}

int run_discover(const json& opt) {
    const auto start = std::chrono::steady_clock::now();
    const std::string out_dir = opt.at("out").get<std::string>();
    fs::create_directories(out_dir);

    pancut::FeatureMap features = load_phase([&] {
        return pancut::load_feature_map(opt.at("features").get<std::string>(),
                                        opt.at("patch_size").get<int>(), "discovery");
    });
    const std::string image_path = opt.at("image").get<std::string>();
    pancut::Image image;
    if (!image_path.empty())
        image = load_phase([&] { return pancut::load_image(image_path); });

    pancut::CutConfig cut_cfg;
    cut_cfg.max_iters = opt.at("max_iters").get<int>();
    cut_cfg.min_nodes = opt.at("min_nodes").get<int>();
    cut_cfg.epsilon_w = opt.at("epsilon_w").get<double>();
    cut_cfg.affine_shift = opt.at("affine_shift").get<bool>();
    cut_cfg.degenerate_lambda = opt.at("degenerate_lambda").get<double>();
    cut_cfg.solver.seed = resolve_seed(opt.at("seed").get<std::uint64_t>());

    const bool want_crf = opt.at("crf").get<std::string>() == "on";
    const bool use_crf = want_crf && !image_path.empty();
    if (want_crf && image_path.empty())
        std::cerr << "note: --crf on needs --image; refining without it\n";

    const int h = image_path.empty() ? features.height * features.patch_size : image.height;
    const int w = image_path.empty() ? features.width * features.patch_size : image.width;

    pancut::PanopticCutResult cut = pancut::panoptic_cut(features, cut_cfg);
    std::vector<pancut::ObjectMask> masks =
        pancut::refine_masks(cut.objects, h, w, features.patch_size,
                             use_crf ? &image : nullptr, use_crf, pancut::CrfConfig{});

    json mask_files = json::array();
    pancut::LabelMap combined;
    combined.height = h;
    combined.width = w;
    combined.labels.assign(static_cast<std::size_t>(h) * w, 0);
    for (std::size_t k = 0; k < masks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "object_%03zu.png", k);
        const std::string path = (fs::path(out_dir) / name).string();
        pancut::save_label_map(mask_to_label_map(masks[k].pixel_mask, h, w), path);
        mask_files.push_back(name);
        for (std::size_t p = 0; p < masks[k].pixel_mask.size(); ++p)
            if (masks[k].pixel_mask[p]) combined.labels[p] = masks[k].id;
    }
    pancut::save_label_map(combined, (fs::path(out_dir) / "objects.png").string());

    json summary;
    summary["objects"] = masks.size();
    summary["iterations"] = cut.iterations;
    summary["lambdas"] = cut.lambdas;
    summary["grid"] = {cut.grid_rows, cut.grid_cols};
    summary["mask_files"] = mask_files;
    {
        std::ofstream f(fs::path(out_dir) / "discover.json");
        f << summary.dump(2) << "\n";
    }
    std::cout << summary.dump(2) << "\n";

    pancut::RunManifest manifest;
    manifest.subcommand = "discover";
    manifest.seed = cut_cfg.solver.seed;
    manifest.options = opt;
    manifest.inputs = {{"features", opt.at("features")}, {"image", image_path}};
    manifest.outputs = {{"dir", out_dir}, {"masks", mask_files}};
    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string(), start);
    return 0;
}

// ---------------------------------------------------------------------------
// ground
// ---------------------------------------------------------------------------

json ground_defaults() {
    return json{{"masks", ""},  {"features", ""},    {"texts", ""},
                {"dataset", ""}, {"patch_size", 16}, {"mean_merge", false},
                {"out", ""}};
}

std::vector<pancut::ObjectMask> load_mask_dir(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("object_", 0) == 0 && entry.path().extension() == ".png")
            names.push_back(entry.path().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty())
        throw pancut::FormatError("no object_*.png masks under " + dir);
    std::vector<pancut::ObjectMask> masks;
    for (std::size_t k = 0; k < names.size(); ++k) {
        const pancut::LabelMap m = pancut::load_label_map(names[k]);
        pancut::ObjectMask mask;
        mask.id = static_cast<int>(k) + 1;
        mask.discovery_order = static_cast<int>(k);
        mask.pixel_h = m.height;
        mask.pixel_w = m.width;
        mask.pixel_mask.resize(m.labels.size());
        for (std::size_t p = 0; p < m.labels.size(); ++p)
            mask.pixel_mask[p] = m.labels[p] != 0 ? 1 : 0;
        masks.push_back(std::move(mask));
    }
    return masks;
}

json grounding_report(const std::vector<pancut::ObjectLogits>& logits,
                      const pancut::DatasetConfig& dataset,
                      const pancut::TextEmbeddingSet& texts) {
    json objects = json::array();
    for (const auto& ol : logits) {
        json o;
        o["id"] = ol.object_id;
        o["logits"] = ol.logits;
        o["assigned_text_index"] = ol.assigned_label;
        o["background_score"] = ol.background_score;
        const std::int32_t cls = pancut::detail::text_index_to_class(
            ol.assigned_label, texts, dataset.has_background() ? 0 : -1);
        o["class_id"] = cls;
        o["class_name"] = cls >= 0 && cls < dataset.num_classes()
                              ? json(dataset.class_names[cls])
                              : json(nullptr);
        objects.push_back(std::move(o));
    }
    return objects;
}

int run_ground(const json& opt) {
    const auto start = std::chrono::steady_clock::now();
    const std::string out_dir = opt.at("out").get<std::string>();
    fs::create_directories(out_dir);

    auto loaded = load_phase([&] {
        pancut::DatasetConfig dataset =
            pancut::load_dataset_config(opt.at("dataset").get<std::string>());
        pancut::TextEmbeddingSet texts = pancut::load_text_embeddings(
            opt.at("texts").get<std::string>(), dataset.text_labels(),
            dataset.background_indices());
        pancut::FeatureMap features =
            pancut::load_feature_map(opt.at("features").get<std::string>(),
                                     opt.at("patch_size").get<int>(), "grounding");
        std::vector<pancut::ObjectMask> masks =
            load_mask_dir(opt.at("masks").get<std::string>());
        return std::tuple{std::move(dataset), std::move(texts), std::move(features),
                          std::move(masks)};
    });
    auto& [dataset, texts, features, masks] = loaded;

    const std::vector<pancut::ObjectLogits> logits = pancut::ground_objects(
        masks, features, texts, opt.at("mean_merge").get<bool>());

    // class-space render; datasets without a background class fall back to
    // the per-pixel argmax of the full-frame logit field
    const int h = masks.front().pixel_h, w = masks.front().pixel_w;
    std::vector<pancut::ObjectLogits> class_logits = logits;
    for (auto& ol : class_logits)
        if (ol.assigned_label != pancut::ObjectLogits::kBackgroundLabel)
            ol.assigned_label = pancut::detail::text_index_to_class(
                ol.assigned_label, texts, dataset.has_background() ? 0 : -1);
    pancut::LabelMap labels;
    if (dataset.has_background()) {
        labels = pancut::render_segmentation(masks, class_logits, 0, h, w);
    } else {
        pancut::DenseGrid field = pancut::resize_grid_bilinear(
            pancut::patch_logit_map(features, texts), h, w);
        pancut::LabelMap fallback;
        fallback.height = h;
        fallback.width = w;
        fallback.labels.assign(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double* v = field.at(y, x);
                int best = 0;
                for (int c = 1; c < texts.count(); ++c)
                    if (v[c] > v[best]) best = c;
                fallback.labels[static_cast<std::size_t>(y) * w + x] = best;
            }
        labels = pancut::render_segmentation(masks, class_logits, -1, h, w, &fallback);
    }
    pancut::save_label_map(labels, (fs::path(out_dir) / "labels.png").string());

    json report;
    report["dataset"] = dataset.name;
    report["objects"] = grounding_report(logits, dataset, texts);
    {
        std::ofstream f(fs::path(out_dir) / "grounding.json");
        f << report.dump(2) << "\n";
    }
    std::cout << report.dump(2) << "\n";

    pancut::RunManifest manifest;
    manifest.subcommand = "ground";
    manifest.options = opt;
    manifest.inputs = {{"masks", opt.at("masks")},
                       {"features", opt.at("features")},
                       {"texts", opt.at("texts")},
                       {"dataset", opt.at("dataset")}};
    manifest.outputs = {{"dir", out_dir}, {"labels", "labels.png"}};
    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string(), start);
    return 0;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

json segment_defaults() {
    json opt = discover_defaults();
    opt.erase("features");
    opt["discovery"] = "";
    opt["grounding"] = "";
    opt["texts"] = "";
    opt["dataset"] = "";
    opt["grounding_patch_size"] = 16;
    opt["window"] = 224;
    opt["stride"] = 112;
    opt["mean_merge"] = false;
    return opt;
}

int run_segment(const json& opt) {
    const auto start = std::chrono::steady_clock::now();
    const std::string out_dir = opt.at("out").get<std::string>();
    fs::create_directories(out_dir);

    auto loaded = load_phase([&] {
        pancut::DatasetConfig dataset =
            pancut::load_dataset_config(opt.at("dataset").get<std::string>());
        pancut::TextEmbeddingSet texts = pancut::load_text_embeddings(
            opt.at("texts").get<std::string>(), dataset.text_labels(),
            dataset.background_indices());
        pancut::FeatureMap discovery =
            pancut::load_feature_map(opt.at("discovery").get<std::string>(),
                                     opt.at("patch_size").get<int>(), "discovery");
        pancut::FeatureMap grounding = pancut::load_feature_map(
            opt.at("grounding").get<std::string>(),
            opt.at("grounding_patch_size").get<int>(), "grounding");
        pancut::Image image = pancut::load_image(opt.at("image").get<std::string>());
        return std::tuple{std::move(dataset), std::move(texts), std::move(discovery),
                          std::move(grounding), std::move(image)};
    });
    auto& [dataset, texts, discovery, grounding, image] = loaded;

    pancut::PipelineConfig cfg;
    cfg.cut.max_iters = opt.at("max_iters").get<int>();
    cfg.cut.min_nodes = opt.at("min_nodes").get<int>();
    cfg.cut.epsilon_w = opt.at("epsilon_w").get<double>();
    cfg.cut.affine_shift = opt.at("affine_shift").get<bool>();
    cfg.cut.degenerate_lambda = opt.at("degenerate_lambda").get<double>();
    cfg.cut.solver.seed = resolve_seed(opt.at("seed").get<std::uint64_t>());
    cfg.use_crf = opt.at("crf").get<std::string>() == "on";
    cfg.window = opt.at("window").get<int>();
    cfg.stride = opt.at("stride").get<int>();
    cfg.mean_merge = opt.at("mean_merge").get<bool>();
    cfg.background_class = dataset.has_background() ? 0 : -1;

    pancut::SegmentationResult result =
        pancut::segment_image(discovery, grounding, texts, image, cfg);

    pancut::save_label_map(result.label_map, (fs::path(out_dir) / "labels.png").string());
    pancut::save_overlay(image, result.label_map,
                         (fs::path(out_dir) / "overlay.png").string());
    pancut::LabelMap combined;
    combined.height = image.height;
    combined.width = image.width;
    combined.labels.assign(result.label_map.labels.size(), 0);
    for (const auto& m : result.masks)
        for (std::size_t p = 0; p < m.pixel_mask.size(); ++p)
            if (m.pixel_mask[p]) combined.labels[p] = m.id;
    pancut::save_label_map(combined, (fs::path(out_dir) / "objects.png").string());

    json report;
    report["dataset"] = dataset.name;
    report["iterations"] = result.iterations;
    report["lambdas"] = result.lambdas;
    report["fallback_fraction"] = result.fallback_fraction;
    report["objects"] = grounding_report(result.object_logits, dataset, texts);
    {
        std::ofstream f(fs::path(out_dir) / "segment.json");
        f << report.dump(2) << "\n";
    }
    std::cout << report.dump(2) << "\n";

    pancut::RunManifest manifest;
    manifest.subcommand = "segment";
    manifest.seed = cfg.cut.solver.seed;
    manifest.options = opt;
    manifest.inputs = {{"discovery", opt.at("discovery")},
                       {"grounding", opt.at("grounding")},
                       {"texts", opt.at("texts")},
                       {"dataset", opt.at("dataset")},
                       {"image", opt.at("image")}};
    manifest.outputs = {{"dir", out_dir},
                        {"labels", "labels.png"},
                        {"overlay", "overlay.png"},
                        {"objects", "objects.png"}};
    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string(), start);
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

json eval_defaults() {
    return json{{"pred", ""}, {"gt", ""},     {"dataset", ""},
                {"out", ""},  {"jobs", 0},    {"manifest", ""}};
}

std::vector<std::pair<std::string, std::string>> pair_label_maps(const std::string& pred,
                                                                 const std::string& gt) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (fs::is_directory(pred)) {
        if (!fs::is_directory(gt))
            throw pancut::FormatError("--pred is a directory but --gt is not");
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(pred))
            if (entry.path().extension() == ".png")
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        if (names.empty()) throw pancut::FormatError("no .png files under " + pred);
        for (const auto& name : names) {
            const fs::path gt_path = fs::path(gt) / name;
            if (!fs::exists(gt_path))
                throw pancut::FormatError("missing ground truth for " + name);
            pairs.emplace_back((fs::path(pred) / name).string(), gt_path.string());
        }
    } else {
        pairs.emplace_back(pred, gt);
    }
    return pairs;
}

int run_eval(const json& opt) {
    const auto start = std::chrono::steady_clock::now();
    auto loaded = load_phase([&] {
        pancut::DatasetConfig dataset =
            pancut::load_dataset_config(opt.at("dataset").get<std::string>());
        auto pairs = pair_label_maps(opt.at("pred").get<std::string>(),
                                     opt.at("gt").get<std::string>());
        return std::pair{std::move(dataset), std::move(pairs)};
    });
    auto& [dataset, pairs] = loaded;

    const int jobs = std::min<int>(resolve_jobs(opt.at("jobs").get<int>()),
                                   static_cast<int>(pairs.size()));
    std::vector<pancut::ConfusionMatrix> shards(
        std::max(jobs, 1), pancut::ConfusionMatrix(dataset.num_classes()));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&](int shard) {
        try {
            for (std::size_t i = next.fetch_add(1); i < pairs.size();
                 i = next.fetch_add(1)) {
                const pancut::LabelMap pred = load_phase(
                    [&] { return pancut::load_label_map(pairs[i].first); });
                const pancut::LabelMap gt = load_phase(
                    [&] { return pancut::load_label_map(pairs[i].second); });
                pancut::accumulate(shards[shard], pred, gt, dataset.ignore_value);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    if (jobs <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker, t);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    pancut::ConfusionMatrix total(dataset.num_classes());
    for (const auto& shard : shards) total += shard;
    const pancut::IouReport report = pancut::miou(total);
    const json doc = pancut::report_to_json(report, dataset);
    std::cout << doc.dump(2) << "\n";

    const std::string out = opt.at("out").get<std::string>();
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw pancut::FormatError("cannot write metrics: " + out);
        f << doc.dump(2) << "\n";
    }

    pancut::RunManifest manifest;
    manifest.subcommand = "eval";
    manifest.options = opt;
    manifest.inputs = {{"pred", opt.at("pred")},
                       {"gt", opt.at("gt")},
                       {"dataset", opt.at("dataset")}};
    manifest.outputs = {{"metrics", out}};
    std::string mpath = opt.at("manifest").get<std::string>();
    if (mpath.empty()) mpath = out.empty() ? "pancut_eval.manifest.json" : out + ".manifest.json";
    write_manifest(manifest, mpath, start);
    return 0;
}

// ---------------------------------------------------------------------------
// overlay
// ---------------------------------------------------------------------------

json overlay_defaults() {
    return json{{"image", ""}, {"pred", ""}, {"out", ""}, {"manifest", ""}};
}

int run_overlay(const json& opt) {
    const auto start = std::chrono::steady_clock::now();
    auto loaded = load_phase([&] {
        pancut::Image image = pancut::load_image(opt.at("image").get<std::string>());
        pancut::LabelMap pred =
            pancut::load_label_map(opt.at("pred").get<std::string>());
        return std::pair{std::move(image), std::move(pred)};
    });
    const std::string out = opt.at("out").get<std::string>();
    pancut::save_overlay(loaded.first, loaded.second, out);

    pancut::RunManifest manifest;
    manifest.subcommand = "overlay";
    manifest.options = opt;
    manifest.inputs = {{"image", opt.at("image")}, {"pred", opt.at("pred")}};
    manifest.outputs = {{"overlay", out}};
    std::string mpath = opt.at("manifest").get<std::string>();
    if (mpath.empty()) mpath = out + ".manifest.json";
    write_manifest(manifest, mpath, start);
    return 0;
}

int dispatch(const std::string& subcommand, const json& opt) {
    if (subcommand == "discover") return run_discover(opt);
    if (subcommand == "ground") return run_ground(opt);
    if (subcommand == "segment") return run_segment(opt);
    if (subcommand == "eval") return run_eval(opt);
    if (subcommand == "overlay") return run_overlay(opt);
    throw PhasedError{2, "FormatError", "unknown subcommand in manifest: " + subcommand};
}

int run_rerun(const std::string& path) {
    const pancut::RunManifest manifest =
        load_phase([&] { return pancut::RunManifest::load(path); });
    return dispatch(manifest.subcommand, manifest.options);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pancut: training-free open-vocabulary segmentation"};
    app.require_subcommand(1);

    json d_opt = discover_defaults(), g_opt = ground_defaults(),
         s_opt = segment_defaults(), e_opt = eval_defaults(), o_opt = overlay_defaults();
    std::string rerun_path;

    auto bind_str = [](CLI::App* cmd, json& opt, const char* flag, const char* key,
                       const char* help, bool required = false) {
        auto* o = cmd->add_option_function<std::string>(
            flag, [&opt, key](const std::string& v) { opt[key] = v; }, help);
        if (required) o->required();
        return o;
    };
    auto bind_int = [](CLI::App* cmd, json& opt, const char* flag, const char* key,
                       const char* help) {
        return cmd->add_option_function<int>(
            flag, [&opt, key](int v) { opt[key] = v; }, help);
    };
    auto bind_dbl = [](CLI::App* cmd, json& opt, const char* flag, const char* key,
                       const char* help) {
        return cmd->add_option_function<double>(
            flag, [&opt, key](double v) { opt[key] = v; }, help);
    };
    auto bind_flag = [](CLI::App* cmd, json& opt, const char* flag, const char* key,
                        const char* help) {
        return cmd->add_flag_function(
            flag, [&opt, key](std::int64_t n) { opt[key] = n > 0; }, help);
    };
    auto bind_cut = [&](CLI::App* cmd, json& opt) {
        bind_int(cmd, opt, "--max-iters", "max_iters", "discovery iteration cap");
        bind_int(cmd, opt, "--min-nodes", "min_nodes", "halt below this many nodes");
        bind_dbl(cmd, opt, "--epsilon-w", "epsilon_w", "affinity clamp floor");
        bind_flag(cmd, opt, "--affine-shift", "affine_shift",
                  "map cosine to (1+cos)/2 instead of clamping");
        bind_dbl(cmd, opt, "--degenerate-lambda", "degenerate_lambda",
                 "halt when the cut eigenvalue reaches this");
        cmd->add_option_function<std::string>(
               "--crf", [&opt](const std::string& v) { opt["crf"] = v; },
               "dense CRF refinement")
            ->check(CLI::IsMember({"on", "off"}));
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&opt](std::uint64_t v) { opt["seed"] = v; },
            "solver seed (PANCUT_SEED overrides)");
    };

    CLI::App* discover = app.add_subcommand("discover", "find objects, no text involved");
    bind_str(discover, d_opt, "--features", "features", "discovery feature NPY", true);
    bind_str(discover, d_opt, "--image", "image", "image for CRF refinement");
    bind_int(discover, d_opt, "--patch-size", "patch_size", "pixels per feature patch");
    bind_cut(discover, d_opt);
    bind_str(discover, d_opt, "--out", "out", "output directory", true);

    CLI::App* ground = app.add_subcommand("ground", "label existing masks with text");
    bind_str(ground, g_opt, "--masks", "masks", "directory of object_*.png masks", true);
    bind_str(ground, g_opt, "--features", "features", "grounding feature NPY", true);
    bind_str(ground, g_opt, "--texts", "texts", "text embedding NPY", true);
    bind_str(ground, g_opt, "--dataset", "dataset", "dataset config JSON", true);
    bind_int(ground, g_opt, "--patch-size", "patch_size", "pixels per feature patch");
    bind_flag(ground, g_opt, "--mean-merge", "mean_merge",
              "merge background queries by mean instead of max");
    bind_str(ground, g_opt, "--out", "out", "output directory", true);

    CLI::App* segment = app.add_subcommand("segment", "discover + ground + render");
    bind_str(segment, s_opt, "--discovery", "discovery", "discovery feature NPY", true);
    bind_str(segment, s_opt, "--grounding", "grounding", "grounding feature NPY", true);
    bind_str(segment, s_opt, "--texts", "texts", "text embedding NPY", true);
    bind_str(segment, s_opt, "--dataset", "dataset", "dataset config JSON", true);
    bind_str(segment, s_opt, "--image", "image", "input image (PNG or PPM)", true);
    bind_int(segment, s_opt, "--patch-size", "patch_size", "discovery patch size");
    bind_int(segment, s_opt, "--grounding-patch-size", "grounding_patch_size",
             "grounding patch size");
    bind_int(segment, s_opt, "--window", "window", "sliding window size");
    bind_int(segment, s_opt, "--stride", "stride", "sliding window stride");
    bind_flag(segment, s_opt, "--mean-merge", "mean_merge",
              "merge background queries by mean instead of max");
    bind_cut(segment, s_opt);
    bind_str(segment, s_opt, "--out", "out", "output directory", true);

    CLI::App* eval = app.add_subcommand("eval", "mIoU of predictions vs ground truth");
    bind_str(eval, e_opt, "--pred", "pred", "prediction PNG or directory", true);
    bind_str(eval, e_opt, "--gt", "gt", "ground-truth PNG or directory", true);
    bind_str(eval, e_opt, "--dataset", "dataset", "dataset config JSON", true);
    bind_str(eval, e_opt, "--out", "out", "also write metrics JSON here");
    bind_int(eval, e_opt, "--jobs", "jobs", "worker threads (0 = logical cores)");
    bind_str(eval, e_opt, "--manifest", "manifest", "manifest path override");

    CLI::App* overlay = app.add_subcommand("overlay", "blend labels over the image");
    bind_str(overlay, o_opt, "--image", "image", "input image", true);
    bind_str(overlay, o_opt, "--pred", "pred", "label map PNG", true);
    bind_str(overlay, o_opt, "--out", "out", "overlay PNG path", true);
    bind_str(overlay, o_opt, "--manifest", "manifest", "manifest path override");

    CLI::App* rerun = app.add_subcommand("rerun", "replay a run from its manifest");
    rerun->add_option("manifest", rerun_path, "manifest JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (discover->parsed()) return run_discover(d_opt);
        if (ground->parsed()) return run_ground(g_opt);
        if (segment->parsed()) return run_segment(s_opt);
        if (eval->parsed()) return run_eval(e_opt);
        if (overlay->parsed()) return run_overlay(o_opt);
        if (rerun->parsed()) return run_rerun(rerun_path);
    } catch (const PhasedError& e) {
        std::cerr << json{{"error", e.kind}, {"message", e.message}}.dump() << "\n";
        return e.code;
    } catch (const pancut::Error& e) {
        std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "InternalError"}, {"message", e.what()}}.dump() << "\n";
        return 3;
    }
    return 0;
}
