#include <pmiris/pmiris.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pmiris;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json load_json(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(path + " line " +
                         std::to_string(pmiris::detail::line_of_offset(bytes, e.byte)) + ": " +
                         e.what());
    }
}

void write_json(const std::string& path, const ordered_json& j) {
    atomic_write_text(path, j.dump(2) + "\n");
}

std::string require_out(const std::string& out) {
    if (out.empty())
        throw InvalidConfig("no output directory: pass --out or set PMIRIS_OUT");
    fs::create_directories(out);
    return out;
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig cfg;
    cfg.n_subjects = j.value("n_subjects", cfg.n_subjects);
    if (j.contains("captures_per_eye"))
        cfg.captures_per_eye = j.at("captures_per_eye").get<std::vector<double>>();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.rotation_jitter = j.value("rotation_jitter", cfg.rotation_jitter);
    if (j.contains("decay")) {
        const auto& d = j.at("decay");
        cfg.decay.blur_per_hour = d.value("blur_per_hour", cfg.decay.blur_per_hour);
        cfg.decay.contrast_loss_per_hour =
            d.value("contrast_loss_per_hour", cfg.decay.contrast_loss_per_hour);
        cfg.decay.occlusion_growth_per_hour =
            d.value("occlusion_growth_per_hour", cfg.decay.occlusion_growth_per_hour);
        cfg.decay.wrinkle_amplitude_per_hour =
            d.value("wrinkle_amplitude_per_hour", cfg.decay.wrinkle_amplitude_per_hour);
    }
    cfg.validate();
    return cfg;
}

HoughConfig hough_config_from_json(const json& j) {
    HoughConfig cfg;
    cfg.r_min = j.value("r_min", cfg.r_min);
    cfg.r_max = j.value("r_max", cfg.r_max);
    cfg.edge_threshold = j.value("edge_threshold", cfg.edge_threshold);
    cfg.accumulator_step = j.value("accumulator_step", cfg.accumulator_step);
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.batch_pairs = j.value("batch_pairs", cfg.batch_pairs);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

struct ModelShape {
    int kernels = 6;
    int rows = 9;
    int cols = 15;
    Activation activation = Activation::relu;
    double max_occlusion = 0.2;
};

ModelShape model_shape_from_json(const json& j) {
    ModelShape s;
    s.kernels = j.value("kernels", s.kernels);
    s.rows = j.value("kernel_rows", s.rows);
    s.cols = j.value("kernel_cols", s.cols);
    if (j.contains("activation")) s.activation = activation_from_string(j.at("activation"));
    s.max_occlusion = j.value("max_occlusion", s.max_occlusion);
    return s;
}

FilterBank bank_from_arg(const std::string& arg) {
    if (arg == "default") return default_bank();
    return load_bank(arg);
}

// Polar entries load directly; Cartesian ones go through segmentation and
// unwrap first. Corner annotations rotate either kind to the reference.
PolarIris polar_from_entry(const ManifestEntry& e, double reference_angle,
                           const HoughConfig& hcfg) {
    if (e.kind == "polar") return load_polar_entry(e, reference_angle);
    const GrayImage img = load_gray(e.image_path);
    const SegmentationResult seg = find_boundaries(img, hcfg);
    PolarIris p;
    if (!e.mask_path.empty()) {
        const MaskGrid cmask = load_mask(e.mask_path, img.width(), img.height());
        p = unwrap(img, seg, e.meta(), &cmask);
    } else {
        p = unwrap(img, seg, e.meta());
    }
    if (e.has_corners) p = align(p, e.x1, e.y1, e.x2, e.y2, reference_angle);
    return p;
}

struct CodeSet {
    std::vector<IrisCode> codes;
    std::vector<std::string> ids;
};

CodeSet load_code_set(const std::string& dir) {
    const fs::path index = fs::path(dir) / "codes.json";
    if (!fs::exists(index)) throw FileNotFound("codes index: " + index.string());
    const json j = load_json(index.string());
    CodeSet set;
    try {
        for (const auto& je : j.at("entries")) {
            IrisCode code = load_code((fs::path(dir) / je.at("code_path").get<std::string>()).string());
            code.meta.capture_id = je.at("capture_id").get<std::string>();
            code.meta.subject_id = je.at("subject_id").get<std::string>();
            code.meta.eye = eye_from_string(je.at("eye").get<std::string>());
            code.meta.pmi_hours = je.at("pmi_hours").get<double>();
            set.ids.push_back(code.meta.capture_id);
            set.codes.push_back(std::move(code));
        }
    } catch (const json::exception& e) {
        throw ParseError("codes index " + index.string() + ": " + e.what());
    }
    if (set.codes.empty()) throw InsufficientData("codes index " + index.string() + ": no entries");
    return set;
}

std::vector<double> default_horizons(const std::vector<IrisCode>& codes) {
    std::set<double> hs;
    for (const auto& c : codes) hs.insert(c.meta.pmi_hours);
    return {hs.begin(), hs.end()};
}

std::string horizon_tag(double h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", h);
    return buf;
}

int cmd_synth(const std::string& config_path, const std::string& out,
              std::uint64_t seed, bool seed_set) {
    const std::string dir = require_out(out);
    json j = json::object();
    if (!config_path.empty()) j = load_json(config_path);
    SynthConfig cfg = synth_config_from_json(j);
    if (seed_set) cfg.seed = seed;
    const double ref = j.value("reference_angle", 0.0);
    const Manifest m = write_dataset(cfg, dir, ref);
    std::printf("synth: %zu captures (%d subjects) -> %s\n", m.entries.size(), cfg.n_subjects,
                dir.c_str());
    return 0;
}

int cmd_segment(const std::string& manifest_path, const std::string& config_path,
                const std::string& out, int jobs) {
    const std::string dir = require_out(out);
    const Manifest m = load_manifest(manifest_path, false);
    if (m.entries.empty())
        throw InsufficientData("manifest " + manifest_path + ": no entries");
    HoughConfig hcfg;
    if (!config_path.empty()) hcfg = hough_config_from_json(load_json(config_path));

    const long n = long(m.entries.size());
    std::vector<ordered_json> slots(static_cast<std::size_t>(n));
    std::vector<int> failed(std::size_t(n), 0);
    std::vector<int> skipped(std::size_t(n), 0);
    parallel_for(n, jobs, [&](long i) {
        const auto& e = m.entries[std::size_t(i)];
        ordered_json r;
        r["capture_id"] = e.capture_id;
        if (e.kind == "polar") {
            r["status"] = "skipped";
            r["note"] = "polar entry";
            skipped[std::size_t(i)] = 1;
        } else {
            try {
                const GrayImage img = load_gray(e.image_path);
                const SegmentationResult seg = find_boundaries(img, hcfg);
                r["status"] = "ok";
                r["pupil"] = {{"cx", seg.pupil.cx}, {"cy", seg.pupil.cy}, {"r", seg.pupil.r}};
                r["iris"] = {{"cx", seg.iris.cx}, {"cy", seg.iris.cy}, {"r", seg.iris.r}};
            } catch (const Error& ex) {
                r["status"] = "error";
                r["error"] = ex.what();
                failed[std::size_t(i)] = 1;
            }
        }
        slots[std::size_t(i)] = std::move(r);
    });

    ordered_json outj;
    outj["results"] = ordered_json::array();
    for (auto& s : slots) outj["results"].push_back(std::move(s));
    write_json((fs::path(dir) / "segmentation.json").string(), outj);

    long nfail = 0, nskip = 0;
    for (int f : failed) nfail += f;
    for (int s : skipped) nskip += s;
    if (nskip == n && n > 0) std::fprintf(stderr, "note: all entries are polar; nothing to segment\n");
    std::printf("segment: %ld ok, %ld skipped, %ld failed -> %s\n", n - nfail - nskip, nskip,
                nfail, dir.c_str());
    return nfail > 0 ? 2 : 0;
}

int cmd_encode(const std::string& manifest_path, const std::string& bank_arg,
               const std::string& out, int jobs) {
    const std::string dir = require_out(out);
    const Manifest m = load_manifest(manifest_path, false);
    if (m.entries.empty())
        throw InsufficientData("manifest " + manifest_path + ": no entries");
    const FilterBank bank = bank_from_arg(bank_arg);

    const long n = long(m.entries.size());
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    std::vector<int> failed(std::size_t(n), 0);
    HoughConfig hcfg;
    parallel_for(n, jobs, [&](long i) {
        const auto& e = m.entries[std::size_t(i)];
        try {
            const PolarIris p = polar_from_entry(e, m.reference_angle, hcfg);
            save_code((fs::path(dir) / (e.capture_id + ".pmic")).string(), encode(p, bank));
        } catch (const Error& ex) {
            errors[std::size_t(i)] = ex.what();
            failed[std::size_t(i)] = 1;
        }
    });

    ordered_json index;
    index["entries"] = ordered_json::array();
    ordered_json errj = ordered_json::array();
    for (long i = 0; i < n; ++i) {
        const auto& e = m.entries[std::size_t(i)];
        if (failed[std::size_t(i)]) {
            errj.push_back({{"capture_id", e.capture_id}, {"error", errors[std::size_t(i)]}});
            continue;
        }
        ordered_json je;
        je["capture_id"] = e.capture_id;
        je["subject_id"] = e.subject_id;
        je["eye"] = to_string(e.eye);
        je["pmi_hours"] = e.pmi_hours;
        je["code_path"] = e.capture_id + ".pmic";
        index["entries"].push_back(std::move(je));
    }
    write_json((fs::path(dir) / "codes.json").string(), index);
    if (!errj.empty()) write_json((fs::path(dir) / "errors.json").string(), {{"errors", errj}});

    std::printf("encode: %ld ok, %zu failed, %d filters -> %s\n", n - long(errj.size()),
                errj.size(), int(bank.kernels.size()), dir.c_str());
    return errj.empty() ? 0 : 2;
}

int cmd_match(const std::string& codes_dir, const std::string& pairs_path, const std::string& out,
              const MatchConfig& mcfg) {
    const std::string dir = require_out(out);
    const CodeSet set = load_code_set(codes_dir);

    std::vector<std::pair<int, int>> pairs;
    if (pairs_path.empty()) {
        for (int i = 0; i < int(set.codes.size()); ++i)
            for (int j = i + 1; j < int(set.codes.size()); ++j) pairs.push_back({i, j});
    } else {
        std::map<std::string, int> by_id;
        for (int i = 0; i < int(set.ids.size()); ++i) by_id[set.ids[std::size_t(i)]] = i;
        const auto bytes = read_file_bytes(pairs_path);
        const std::string text(bytes.begin(), bytes.end());
        std::size_t pos = 0;
        int line = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const std::string row = text.substr(pos, end - pos);
            pos = end + 1;
            ++line;
            if (row.empty() || (line == 1 && row == "capture_id_a,capture_id_b")) continue;
            const std::size_t comma = row.find(',');
            if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos)
                throw ParseError("pairs CSV line " + std::to_string(line) +
                                 ": expected capture_id_a,capture_id_b");
            const std::string a = row.substr(0, comma), b = row.substr(comma + 1);
            const auto ia = by_id.find(a), ib = by_id.find(b);
            if (ia == by_id.end())
                throw IndexOutOfRange("pairs CSV line " + std::to_string(line) +
                                      ": unknown capture \"" + a + "\"");
            if (ib == by_id.end())
                throw IndexOutOfRange("pairs CSV line " + std::to_string(line) +
                                      ": unknown capture \"" + b + "\"");
            pairs.push_back({ia->second, ib->second});
        }
        if (pairs.empty()) throw InsufficientData("pairs CSV " + pairs_path + ": no pairs");
    }

    std::vector<PairRow> rows;
    rows.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        PairRow r;
        r.a = i;
        r.b = j;
        r.genuine = same_eye_identity(set.codes[std::size_t(i)].meta,
                                      set.codes[std::size_t(j)].meta);
        try {
            const MatchScore s = match(set.codes[std::size_t(i)], set.codes[std::size_t(j)], mcfg);
            r.distance = s.distance;
            r.best_shift = s.best_shift;
            r.effective_bits = s.effective_bits;
            r.comparable = true;
        } catch (const InsufficientOverlap&) {
            r.comparable = false;
        }
        rows.push_back(r);
    }
    atomic_write_text((fs::path(dir) / "scores.csv").string(), scores_csv(rows, set.codes));
    std::printf("match: %zu pairs -> %s\n", rows.size(), dir.c_str());
    return 0;
}

int cmd_evaluate(const std::string& scores_path, const std::string& codes_dir,
                 std::vector<double> horizons, std::vector<double> caps, const std::string& out,
                 const MatchConfig& mcfg) {
    const std::string dir = require_out(out);
    if (scores_path.empty() == codes_dir.empty())
        throw InvalidConfig("evaluate: pass exactly one of --scores and --codes");
    if (caps.empty()) caps = default_fmr_caps;

    std::vector<ScoredPair> pairs;
    CodeSet set;
    if (!scores_path.empty()) {
        const auto bytes = read_file_bytes(scores_path);
        pairs = pairs_from_csv(std::string(bytes.begin(), bytes.end()));
        if (horizons.empty()) {
            std::set<double> hs;
            for (const auto& p : pairs) {
                hs.insert(p.pmi_a);
                hs.insert(p.pmi_b);
            }
            horizons.assign(hs.begin(), hs.end());
        }
    } else {
        set = load_code_set(codes_dir);
        if (horizons.empty()) horizons = default_horizons(set.codes);
    }

    ordered_json report;
    report["fmr_caps"] = caps;
    report["horizons"] = ordered_json::array();
    std::size_t failed = 0;
    std::string first_error;
    for (double h : horizons) {
        try {
            const ScoreSet s = scores_path.empty() ? build_scores(set.codes, h, mcfg)
                                                   : scores_from_pairs(pairs, h);
            report["horizons"].push_back(horizon_report(s, caps));
            atomic_write_text((fs::path(dir) / ("roc_" + horizon_tag(h) + ".csv")).string(),
                              roc_csv(roc_points(s)));
        } catch (const Error& e) {
            ordered_json entry;
            entry["horizon"] = h;
            entry["error"] = e.what();
            report["horizons"].push_back(entry);
            if (failed == 0) first_error = e.what();
            ++failed;
        }
    }
    if (failed == horizons.size() && failed > 0) throw InsufficientData(first_error);
    write_json((fs::path(dir) / "report.json").string(), report);
    std::printf("evaluate: %zu of %zu horizons -> %s\n", horizons.size() - failed,
                horizons.size(), dir.c_str());
    return failed > 0 ? 2 : 0;
}

int cmd_train_filters(const std::string& manifest_path, const std::string& config_path,
                      const std::string& out, std::uint64_t seed, bool seed_set, int jobs) {
    const std::string dir = require_out(out);
    const Manifest m = load_manifest(manifest_path);
    if (m.entries.empty())
        throw InsufficientData("manifest " + manifest_path + ": no entries");
    json j = json::object();
    if (!config_path.empty()) j = load_json(config_path);
    TrainConfig tcfg = train_config_from_json(j);
    if (seed_set) tcfg.seed = seed;
    const ModelShape shape = model_shape_from_json(j);

    const long n = long(m.entries.size());
    std::vector<PolarIris> polars(static_cast<std::size_t>(n));
    HoughConfig hcfg;
    parallel_for(n, jobs, [&](long i) {
        polars[std::size_t(i)] = polar_from_entry(m.entries[std::size_t(i)], m.reference_angle,
                                                  hcfg);
    });

    std::vector<IrisPatch> patches;
    for (const auto& p : polars)
        for (auto& patch : curate_patches(p, shape.max_occlusion))
            patches.push_back(std::move(patch));
    const TrainSet setp = build_pair_pool(patches);

    SiameseModel model = make_siamese_model(shape.kernels, shape.rows, shape.cols, patch_width,
                                            polar_height, shape.activation);
    Rng init_rng(Rng::derive(tcfg.seed, 0x1717));
    init_weights(model, init_rng);
    const TrainResult res = train(model, setp.patches, setp.pairs, tcfg);

    save_checkpoint((fs::path(dir) / "checkpoint.json").string(), res.model, tcfg,
                    tcfg.iterations);
    FilterBank learned;
    learned.kernels = extract_kernels(res.model);
    save_bank((fs::path(dir) / "learned_bank.json").string(), learned);
    std::string loss = "iteration,loss\n";
    for (std::size_t i = 0; i < res.loss_history.size(); ++i)
        loss += std::to_string(i + 1) + "," + format_real(res.loss_history[i]) + "\n";
    atomic_write_text((fs::path(dir) / "loss.csv").string(), loss);

    std::printf("train-filters: %zu patches, %zu pairs, %ld iterations -> %s\n", patches.size(),
                setp.pairs.size(), tcfg.iterations, dir.c_str());
    return 0;
}

int cmd_select_filters(const std::string& bank_arg, const std::string& candidates_path,
                       const std::string& manifest_path, double horizon, int min_bank,
                       double prune_low, double prune_high, const std::string& out, int jobs,
                       const MatchConfig& mcfg) {
    const std::string dir = require_out(out);
    const Manifest m = load_manifest(manifest_path);
    if (m.entries.empty())
        throw InsufficientData("manifest " + manifest_path + ": no entries");
    const FilterBank initial = bank_from_arg(bank_arg);
    const FilterBank candidates = load_bank(candidates_path);

    const long n = long(m.entries.size());
    std::vector<PolarIris> polars(static_cast<std::size_t>(n));
    HoughConfig hcfg;
    parallel_for(n, jobs, [&](long i) {
        polars[std::size_t(i)] = polar_from_entry(m.entries[std::size_t(i)], m.reference_angle,
                                                  hcfg);
    });

    const auto pruned = prune_degenerate(candidates.kernels, polars, prune_low, prune_high);
    std::set<std::string> kept;
    for (const auto& k : pruned) kept.insert(k.label);
    ordered_json pruned_out = ordered_json::array();
    for (const auto& k : candidates.kernels)
        if (!kept.count(k.label)) pruned_out.push_back(k.label);

    CachedObjective objective(polars, horizon, mcfg);
    const auto [bank, trace] = sfs_sbs(initial, pruned, std::ref(objective), min_bank);

    save_bank((fs::path(dir) / "selected_bank.json").string(), bank);
    ordered_json tj;
    tj["horizon"] = horizon;
    tj["pruned_out"] = std::move(pruned_out);
    tj["steps"] = selection_trace_json(trace);
    write_json((fs::path(dir) / "selection_trace.json").string(), tj);

    std::printf("select-filters: %zu of %zu candidates kept, final bank %zu filters -> %s\n",
                pruned.size(), candidates.kernels.size(), bank.kernels.size(), dir.c_str());
    return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out, std::uint64_t seed,
                   bool seed_set, int jobs) {
    const std::string dir = require_out(out);
    const json j = load_json(config_path);
    std::uint64_t master = j.value("seed", std::uint64_t(1));
    if (seed_set) master = seed;

    const json js = j.value("synth", json::object());
    SynthConfig proto = synth_config_from_json(js);
    auto split_config = [&](const char* key, int fallback, std::uint64_t stream) {
        SynthConfig cfg = proto;
        cfg.n_subjects = js.value(key, fallback);
        cfg.seed = Rng::derive(master, stream);
        cfg.validate();
        return cfg;
    };
    const SynthConfig train_cfg = split_config("train_subjects", 12, 11);
    const SynthConfig tune_cfg = split_config("tune_subjects", 4, 12);
    const SynthConfig test_cfg = split_config("test_subjects", 8, 13);

    const json jt = j.value("train", json::object());
    TrainConfig tcfg = train_config_from_json(jt);
    tcfg.seed = Rng::derive(master, 21);
    const ModelShape shape = model_shape_from_json(jt);

    const json jsel = j.value("select", json::object());
    const double select_horizon = jsel.value("horizon", 60.0);
    const int min_bank = jsel.value("min_bank", 2);
    const double prune_low = jsel.value("prune_low", 0.05);
    const double prune_high = jsel.value("prune_high", 0.95);

    const json je = j.value("evaluate", json::object());
    std::vector<double> horizons =
        je.value("horizons", std::vector<double>{60.0, 369.0});
    std::vector<double> caps = je.value("fmr", default_fmr_caps);
    const MatchConfig mcfg;

    // Train filters on the training identities.
    std::vector<IrisPatch> patches;
    for (const auto& cap : generate_dataset(train_cfg))
        for (auto& patch : curate_patches(cap.polar, shape.max_occlusion))
            patches.push_back(std::move(patch));
    const TrainSet pool = build_pair_pool(patches);
    SiameseModel model = make_siamese_model(shape.kernels, shape.rows, shape.cols, patch_width,
                                            polar_height, shape.activation);
    Rng init_rng(Rng::derive(master, 22));
    init_weights(model, init_rng);
    const TrainResult res = train(model, pool.patches, pool.pairs, tcfg);

    // Prune and select on the tuning identities.
    std::vector<PolarIris> tune;
    for (const auto& cap : generate_dataset(tune_cfg)) tune.push_back(cap.polar);
    const auto pruned = prune_degenerate(extract_kernels(res.model), tune, prune_low, prune_high);
    CachedObjective objective(tune, select_horizon, mcfg);
    const auto [hybrid, trace] = sfs_sbs(default_bank(), pruned, std::ref(objective), min_bank);

    // Evaluate both banks on the held-out identities.
    std::vector<PolarIris> test;
    for (const auto& cap : generate_dataset(test_cfg)) test.push_back(cap.polar);
    auto evaluate_bank = [&](const FilterBank& bank) {
        std::vector<IrisCode> codes(test.size());
        parallel_for(long(test.size()), jobs,
                     [&](long i) { codes[std::size_t(i)] = encode(test[std::size_t(i)], bank); });
        ordered_json reports = ordered_json::array();
        for (double h : horizons) reports.push_back(horizon_report(build_scores(codes, h, mcfg), caps));
        return reports;
    };
    const ordered_json default_reports = evaluate_bank(default_bank());
    const ordered_json hybrid_reports = evaluate_bank(hybrid);

    ordered_json report;
    report["seed"] = master;
    report["select_horizon"] = select_horizon;
    report["fmr_caps"] = caps;
    report["horizons"] = horizons;
    ordered_json labels = ordered_json::array();
    for (const auto& k : hybrid.kernels) labels.push_back(k.label);
    report["selected_labels"] = std::move(labels);
    report["default"] = default_reports;
    report["hybrid"] = hybrid_reports;
    write_json((fs::path(dir) / "report.json").string(), report);

    save_bank((fs::path(dir) / "hybrid_bank.json").string(), hybrid);
    save_checkpoint((fs::path(dir) / "checkpoint.json").string(), res.model, tcfg,
                    tcfg.iterations);
    ordered_json tj;
    tj["horizon"] = select_horizon;
    tj["steps"] = selection_trace_json(trace);
    write_json((fs::path(dir) / "selection_trace.json").string(), tj);
    std::string loss = "iteration,loss\n";
    for (std::size_t i = 0; i < res.loss_history.size(); ++i)
        loss += std::to_string(i + 1) + "," + format_real(res.loss_history[i]) + "\n";
    atomic_write_text((fs::path(dir) / "loss.csv").string(), loss);

    for (std::size_t i = 0; i < horizons.size(); ++i) {
        const double de = default_reports[i].at("eer").get<double>();
        const double he = hybrid_reports[i].at("eer").get<double>();
        std::printf("experiment: horizon %gh eer default %.4f hybrid %.4f\n", horizons[i], de,
                    he);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-mortem iris verification toolkit"};
    app.set_version_flag("--version", std::string("pmiris ") + version_string);
    app.require_subcommand(1);

    std::string manifest_path, config_path, out_dir, bank_arg = "default";
    std::string candidates_path, codes_dir, scores_path, pairs_path;
    std::vector<double> horizons, caps;
    double horizon = 60.0;
    int jobs = 1, min_bank = 2;
    double prune_low = 0.05, prune_high = 0.95;
    std::uint64_t seed = 0;
    MatchConfig mcfg;

    auto add_out = [&](CLI::App* c) {
        c->add_option("--out", out_dir, "output directory")->envname("PMIRIS_OUT");
    };
    auto add_jobs = [&](CLI::App* c) { c->add_option("--jobs", jobs, "worker thread cap"); };
    auto add_match_opts = [&](CLI::App* c) {
        c->add_option("--max-shift", mcfg.max_shift, "rotation search half-range in columns");
        c->add_option("--shift-step", mcfg.shift_step, "rotation search step");
        c->add_option("--min-bits", mcfg.min_bits, "minimum comparable bits per pair");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic decayed-iris dataset");
    synth->add_option("--config", config_path, "synth config JSON")->check(CLI::ExistingFile);
    CLI::Option* synth_seed = synth->add_option("--seed", seed, "generator seed override");
    add_out(synth);

    CLI::App* segment = app.add_subcommand("segment", "find pupil and iris circles");
    segment->add_option("--manifest", manifest_path, "dataset manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    segment->add_option("--config", config_path, "segmentation config JSON")
        ->check(CLI::ExistingFile);
    add_out(segment);
    add_jobs(segment);

    CLI::App* encode_cmd = app.add_subcommand("encode", "encode captures to iris code files");
    encode_cmd->add_option("--manifest", manifest_path, "dataset manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    encode_cmd->add_option("--bank", bank_arg, "filter bank JSON, or \"default\"");
    add_out(encode_cmd);
    add_jobs(encode_cmd);

    CLI::App* match_cmd = app.add_subcommand("match", "score code pairs");
    match_cmd->add_option("--codes", codes_dir, "directory with codes.json")
        ->required()
        ->check(CLI::ExistingDirectory);
    match_cmd->add_option("--pairs", pairs_path, "pairs CSV (capture_id_a,capture_id_b)")
        ->check(CLI::ExistingFile);
    add_out(match_cmd);
    add_match_opts(match_cmd);

    CLI::App* evaluate = app.add_subcommand("evaluate", "horizon reports and ROC curves");
    evaluate->add_option("--scores", scores_path, "scores CSV")->check(CLI::ExistingFile);
    evaluate->add_option("--codes", codes_dir, "directory with codes.json")
        ->check(CLI::ExistingDirectory);
    evaluate->add_option("--horizon", horizons, "evaluation horizon in hours (repeatable)");
    evaluate->add_option("--fmr", caps, "FMR cap for FNMR reporting (repeatable)");
    add_out(evaluate);
    add_match_opts(evaluate);

    CLI::App* train_cmd = app.add_subcommand("train-filters", "train the kernel-learning network");
    train_cmd->add_option("--manifest", manifest_path, "training manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--config", config_path, "train config JSON")->check(CLI::ExistingFile);
    CLI::Option* train_seed = train_cmd->add_option("--seed", seed, "training seed override");
    add_out(train_cmd);
    add_jobs(train_cmd);

    CLI::App* select = app.add_subcommand("select-filters", "prune and tune a candidate bank");
    select->add_option("--bank", bank_arg, "initial bank JSON, or \"default\"");
    select->add_option("--candidates", candidates_path, "candidate bank JSON")
        ->required()
        ->check(CLI::ExistingFile);
    select->add_option("--manifest", manifest_path, "tuning manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    select->add_option("--horizon", horizon, "tuning horizon in hours");
    select->add_option("--min-bank", min_bank, "minimum filters kept in the bank");
    select->add_option("--prune-low", prune_low, "mean code value lower bound");
    select->add_option("--prune-high", prune_high, "mean code value upper bound");
    add_out(select);
    add_jobs(select);
    add_match_opts(select);

    CLI::App* experiment = app.add_subcommand("experiment", "synth, train, select, evaluate");
    experiment->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::Option* exp_seed = experiment->add_option("--seed", seed, "master seed override");
    add_out(experiment);
    add_jobs(experiment);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir, seed, synth_seed->count() > 0);
        if (segment->parsed()) return cmd_segment(manifest_path, config_path, out_dir, jobs);
        if (encode_cmd->parsed()) return cmd_encode(manifest_path, bank_arg, out_dir, jobs);
        if (match_cmd->parsed()) return cmd_match(codes_dir, pairs_path, out_dir, mcfg);
        if (evaluate->parsed())
            return cmd_evaluate(scores_path, codes_dir, horizons, caps, out_dir, mcfg);
        if (train_cmd->parsed())
            return cmd_train_filters(manifest_path, config_path, out_dir, seed,
                                     train_seed->count() > 0, jobs);
        if (select->parsed())
            return cmd_select_filters(bank_arg, candidates_path, manifest_path, horizon, min_bank,
                                      prune_low, prune_high, out_dir, jobs, mcfg);
        if (experiment->parsed())
            return cmd_experiment(config_path, out_dir, seed, exp_seed->count() > 0, jobs);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
