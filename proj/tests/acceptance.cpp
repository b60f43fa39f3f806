// Acceptance suite: one binary, one PASS/FAIL line per criterion, nonzero
// exit when anything fails. Heavy flows write their CSV artifacts twice so
// the determinism criterion can compare bytes of genuinely re-run pipelines.

#include <chrono>
#include <cstdarg>
#include <map>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mocap/association.hpp"
#include "mocap/dmae.hpp"
#include "mocap/fusion.hpp"
#include "mocap/geometry.hpp"
#include "mocap/hungarian.hpp"
#include "mocap/metrics.hpp"
#include "mocap/pipeline.hpp"
#include "mocap/synth.hpp"
#include "oracles.hpp"

using namespace mocap;
using geom::Vec2;
using geom::Vec3;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) g_failures++;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

// --- scene/bench configuration, seed-pinned -----------------------------------

constexpr uint64_t kSeed = 2026;

// criterion 5/6 completion benchmark
struct BenchmarkSetup {
    synth::SceneConfig train_scene;
    synth::SceneConfig test_scene;
    dmae::ModelConfig model;
    dmae::TrainConfig train;
    int train_windows = 2000;
    int test_windows = 200;

    BenchmarkSetup() {
        train_scene.actors = 3;
        train_scene.cameras = 5;
        train_scene.frames = 750;
        train_scene.fps = 12.0;
        train_scene.seed = kSeed;
        train_scene.motions = {{.family = "walk_cycle", .amplitude = 1.0, .period = 0.9,
                                .speed = 1.1}};

        test_scene = train_scene;
        test_scene.actors = 2;
        test_scene.frames = 200;
        test_scene.seed = kSeed + 1;
        test_scene.motions[0].phase = 2.1;

        model.window = 15;
        model.joints = 15;
        model.encoder_depth = 2;   // smoke depths pinned by the criterion
        model.encoder_width = 64;
        model.encoder_heads = 4;
        model.decoder_depth = 1;
        model.decoder_width = 32;
        model.decoder_heads = 2;
        model.dropout = 0.1;
        model.seed = kSeed;

        train.epochs = 30;
        train.batch = 16;
        train.base_lr = 1e-3;
        train.weight_decay = 0.01;
        train.seed = kSeed;
        train.mask.ratio = 0.5;  // uniform r = 0.5
        train.augment = true;
    }
};

std::vector<dmae::MotionWindow> scene_windows(const synth::SceneConfig& sc, int T, int count,
                                              uint64_t seed) {
    auto gt = synth::generate_motion(sc);
    return dmae::build_training_windows(extract_tracks(gt.motion), T, count, seed);
}

// random камеras about the origin, shared by criteria 1 and 3
geom::CameraView random_camera(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    geom::CameraView cam;
    cam.K << 1000, 0, 500, 0, 1000, 500, 0, 0, 1;
    cam.width = 1000;
    cam.height = 1000;
    Vec3 pos;
    do {
        pos = Vec3(u(rng), u(rng), u(rng));
    } while (pos.norm() < 0.3);
    pos = pos.normalized() * (3.0 + u(rng));
    const Vec3 target(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
    const Vec3 z = (target - pos).normalized();
    Vec3 up = std::abs(z.z()) > 0.95 ? Vec3::UnitY() : Vec3::UnitZ();
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    cam.R.row(0) = x;
    cam.R.row(1) = y;
    cam.R.row(2) = z;
    cam.t = -cam.R * pos;
    return cam;
}

}  // namespace

// --- criterion 1: geometry oracle suite -----------------------------------------

static void criterion1() {
    auto t0 = Clock::now();
    auto rng = make_rng(kSeed, 1);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    double worst_dlt = 0, worst_line = 0, worst_rt = 0;
    for (int trial = 0; trial < 1000; trial++) {
        std::vector<geom::CameraView> cams;
        for (int v = 0; v < 3 + trial % 3; v++) cams.push_back(random_camera(rng));
        const Vec3 p(u(rng), u(rng), u(rng));

        std::vector<geom::Observation> obs;
        for (const auto& c : cams) obs.push_back({&c, geom::project(c, p), 1.0});
        const double rel = (geom::triangulate_dlt(obs) - p).norm() / std::max(p.norm(), 1.0);
        worst_dlt = std::max(worst_dlt, rel);

        const geom::Ray ra = geom::pixel_ray(cams[0], obs[0].pixel);
        const Vec3 d = p - ra.origin;
        worst_rt = std::max(worst_rt, (d - d.dot(ra.direction) * ra.direction).norm());

        geom::Ray a{{u(rng), u(rng), u(rng)}, Vec3(u(rng), u(rng), u(rng) + 1.2).normalized()};
        geom::Ray b{{u(rng), u(rng), u(rng)}, Vec3(u(rng) + 1.2, u(rng), u(rng)).normalized()};
        const double expect = oracles::line_distance_grid(
            {a.origin.x(), a.origin.y(), a.origin.z()},
            {a.direction.x(), a.direction.y(), a.direction.z()},
            {b.origin.x(), b.origin.y(), b.origin.z()},
            {b.direction.x(), b.direction.y(), b.direction.z()});
        worst_line = std::max(worst_line, std::abs(geom::line_distance(a, b) - expect));
    }
    const double secs = seconds_since(t0);
    const bool pass = worst_dlt < 1e-6 && worst_line < 1e-8 && worst_rt < 1e-9 && secs < 10.0;
    report(1, "geometry oracle suite", pass,
           fmt("dlt %.2e, line %.2e, roundtrip %.2e, %.1fs", worst_dlt, worst_line, worst_rt,
               secs));
}

// --- criterion 2: assignment oracle ----------------------------------------------

static void criterion2() {
    auto t0 = Clock::now();
    auto rng = make_rng(kSeed, 2);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::uniform_int_distribution<int> size_dist(1, 6);
    bool all_equal = true;
    for (int trial = 0; trial < 500; trial++) {
        const int rows = size_dist(rng), cols = size_dist(rng);
        std::vector<std::vector<double>> score(rows, std::vector<double>(cols));
        for (auto& r : score)
            for (auto& x : r) x = u(rng);
        const auto assignment = assoc::hungarian_max(score);
        double total = 0;
        for (int r = 0; r < rows; r++)
            if (assignment[r] >= 0) total += score[r][assignment[r]];
        const auto brute = oracles::brute_force_assignment(score);
        all_equal = all_equal && total == brute.best_score;
    }
    const double secs = seconds_since(t0);
    report(2, "assignment oracle", all_equal && secs < 10.0,
           fmt("500 instances, exact equality %s, %.1fs", all_equal ? "yes" : "NO", secs));
}

// --- criterion 3: gradient suite -------------------------------------------------

static void criterion3() {
    auto t0 = Clock::now();
    dmae::ModelConfig mc;
    mc.window = 5;
    mc.joints = 5;
    mc.encoder_depth = 2;
    mc.encoder_width = 16;
    mc.encoder_heads = 2;
    mc.decoder_depth = 1;
    mc.decoder_width = 8;
    mc.decoder_heads = 2;
    mc.dropout = 0.0;
    mc.seed = kSeed;
    auto model = dmae::DmaeModel::create(mc);

    auto rng = make_rng(kSeed, 3);
    std::normal_distribution<double> n(0.0, 0.4);
    dmae::MotionWindow w;
    w.T = 5;
    w.J = 5;
    w.pos.resize(25);
    for (auto& p : w.pos) p = Vec3(n(rng), n(rng), n(rng));
    w.mask = dmae::sample_mask({dmae::MaskSpec::Mode::uniform, 0.4, 0.5, 0.5, kSeed}, 5, 5);

    auto loss_fn = [&] {
        auto tokens = dmae::build_tokens(w, model);
        auto latents = dmae::encoder_forward(model, tokens, nullptr);
        auto pred = dmae::decoder_forward(model, latents, w.mask, w.T, nullptr);
        return dmae::masked_mse_loss(pred, w, w.mask);
    };

    auto params = model.parameters();
    for (auto& [name, p] : params) p.zero_grad();
    num::backward(loss_fn());

    // 10 random probes over the flattened parameter space
    std::vector<std::pair<size_t, int64_t>> probes;
    std::uniform_int_distribution<size_t> param_pick(0, params.size() - 1);
    for (int i = 0; i < 10; i++) {
        const size_t pi = param_pick(rng);
        std::uniform_int_distribution<int64_t> elem_pick(0, params[pi].second.size() - 1);
        probes.emplace_back(pi, elem_pick(rng));
    }
    const double h = 1e-5;
    double worst = 0;
    for (const auto& [pi, k] : probes) {
        auto vals = params[pi].second.data();
        const double keep = vals[k];
        vals[k] = keep + h;
        const double up = loss_fn().item();
        vals[k] = keep - h;
        const double dn = loss_fn().item();
        vals[k] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, oracles::rel_err(params[pi].second.grad()[k], fd));
    }
    const double secs = seconds_since(t0);
    report(3, "gradient suite", worst < 1e-4 && secs < 60.0,
           fmt("max rel err %.2e over 10 probes, %.1fs", worst, secs));
}

// --- criterion 4: clean round trip ------------------------------------------------

static MotionSequence reconstruct_scene(const synth::SceneConfig& sc,
                                        const assoc::AssociationConfig& acfg) {
    auto gt = synth::generate_motion(sc);
    auto cams = synth::scene_cameras(sc);
    auto frames = synth::render_detections(gt, cams, sc);
    assoc::FrameReconstructor rec(cams, acfg, 15);
    MotionSequence seq;
    seq.skeleton = sc.skeleton;
    seq.fps = sc.fps;
    for (const auto& fd : frames) {
        MotionFrame mf;
        mf.t = fd.frame;
        for (const auto& s : rec.reconstruct(fd)) {
            ActorPose ap;
            ap.id = s.identity;
            ap.joints = s.joints;
            ap.missing = s.missing;
            mf.actors.push_back(std::move(ap));
        }
        seq.frames.push_back(std::move(mf));
    }
    return seq;
}

static void criterion4(const std::string& out_dir, bool quiet) {
    synth::SceneConfig sc;
    sc.actors = 3;
    sc.cameras = 5;
    sc.frames = 300;
    sc.fps = 15.0;
    sc.seed = kSeed + 4;
    sc.motions = {{.family = "walk_cycle", .period = 1.0, .speed = 1.0}};
    auto gt = synth::generate_motion(sc);
    const MotionSequence rec = reconstruct_scene(sc, assoc::AssociationConfig{});

    long long missing = 0, present = 0;
    bool track_count_ok = true;
    for (const auto& mf : rec.frames) {
        track_count_ok = track_count_ok && mf.actors.size() == 3;
        for (const auto& ap : mf.actors)
            for (uint8_t m : ap.missing) (m ? missing : present)++;
    }

    // per-frame nearest-gt pairing must stay constant: identities never swap
    std::map<int, int> id_map;
    bool identities_consistent = true;
    double err_sum = 0;
    long long err_n = 0;
    for (size_t f = 0; f < rec.frames.size(); f++) {
        for (const auto& ap : rec.frames[f].actors) {
            int best = -1;
            double bd = 1e18;
            for (const auto& truth : gt.motion.frames[f].actors) {
                const double d = (ap.joints[0] - truth.joints[0]).norm();
                if (d < bd) {
                    bd = d;
                    best = truth.id;
                }
            }
            auto [it, fresh] = id_map.emplace(ap.id, best);
            identities_consistent = identities_consistent && (fresh || it->second == best);
            for (int j = 0; j < 15; j++) {
                err_sum += (ap.joints[j] - gt.motion.frames[f].actors[best].joints[j]).norm();
                err_n++;
            }
        }
    }
    const double mpjpe_mm = err_n ? err_sum / err_n * 1000.0 : 1e9;

    auto report_file = metrics::evaluate(rec, gt.motion, skeleton_basic15(), {});
    metrics::write_eval_csv(out_dir + "/c4_metrics.csv", report_file, 4, kSeed);

    if (quiet) return;
    const bool pass = missing == 0 && track_count_ok && identities_consistent &&
                      mpjpe_mm < 0.01 && err_n == 3 * 15 * 300;
    report(4, "clean round trip", pass,
           fmt("missing %lld, identities %s, MPJPE %.5f mm", missing,
               identities_consistent ? "stable" : "SWAPPED", mpjpe_mm));
}

// --- criterion 5/6: completion benchmark and ablation direction -------------------

struct BenchResult {
    double model_mm = 0;
    double interp_mm = 0;
    double train_seconds = 0;
    dmae::DmaeModel model;
};

static BenchResult run_benchmark(const BenchmarkSetup& setup, dmae::EncodingMode mode) {
    auto train_windows =
        scene_windows(setup.train_scene, setup.model.window, setup.train_windows, kSeed + 10);
    auto test_windows =
        scene_windows(setup.test_scene, setup.model.window, setup.test_windows, kSeed + 11);
    dmae::ModelConfig mc = setup.model;
    mc.encoding = mode;
    BenchResult out{.model = dmae::DmaeModel::create(mc)};
    auto t0 = Clock::now();
    dmae::train(out.model, train_windows, setup.train);
    out.train_seconds = seconds_since(t0);
    dmae::MaskSpec ms;
    ms.ratio = 0.5;
    auto bench = pipeline::benchmark_completion(out.model, test_windows, ms, kSeed + 12);
    out.model_mm = bench.model_mpjpe_mm;
    out.interp_mm = bench.interp_mpjpe_mm;
    return out;
}

static void write_benchmark_csv(const std::string& path,
                                const std::vector<std::pair<std::string, BenchResult>>& rows) {
    std::ofstream os(path);
    os << "# config=benchmark seed=" << kSeed << "\n";
    os << "variant,masked_mpjpe_mm,interp_mpjpe_mm\n";
    for (const auto& [name, r] : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", name.c_str(), r.model_mm, r.interp_mm);
        os << buf;
    }
}

// --- criterion 7: camera-count degradation ----------------------------------------

struct SweepRow {
    int cameras = 0;
    double pcp_tri = 0;
    double pcp_comp = 0;
};

static std::vector<SweepRow> run_camera_sweep(dmae::DmaeModel& model, const std::string& csv) {
    synth::SceneConfig sc;
    sc.actors = 3;
    sc.cameras = 5;
    sc.frames = 240;
    sc.fps = 12.0;
    sc.seed = kSeed + 7;
    sc.motions = {{.family = "walk_cycle", .period = 0.9, .speed = 1.1}};
    sc.noise.pixel_sigma = 1.0;
    sc.noise.occlusion_rate = 0.18;
    auto gt = synth::generate_motion(sc);
    auto cams = synth::scene_cameras(sc);
    auto frames = synth::render_detections(gt, cams, sc);

    std::vector<std::vector<int>> subsets{{0, 1, 2, 3, 4}, {0, 1, 2, 3}, {0, 1, 2}};
    std::vector<SweepRow> rows;
    std::ofstream os(csv);
    os << "# config=sweep seed=" << kSeed << "\n";
    os << "cameras,pcp_triangulated_pct,pcp_completed_pct,mpjpe_completed_mm\n";
    for (const auto& views : subsets) {
        std::vector<geom::CameraView> sub_cams;
        for (int v : views) sub_cams.push_back(cams[v]);
        std::vector<assoc::FrameDetections> sub_frames;
        for (const auto& fd : frames) {
            assoc::FrameDetections copy;
            copy.frame = fd.frame;
            for (size_t k = 0; k < views.size(); k++)
                for (const auto& vd : fd.views)
                    if (vd.view == views[k]) {
                        auto v2 = vd;
                        v2.view = static_cast<int>(k);
                        copy.views.push_back(std::move(v2));
                    }
            sub_frames.push_back(std::move(copy));
        }
        assoc::FrameReconstructor rec(sub_cams, assoc::AssociationConfig{}, 15);
        std::vector<Track> tri_tracks;
        {
            MotionSequence tri;
            tri.skeleton = "basic15";
            tri.fps = sc.fps;
            for (const auto& fd : sub_frames) {
                MotionFrame mf;
                mf.t = fd.frame;
                for (const auto& s : rec.reconstruct(fd)) {
                    ActorPose ap;
                    ap.id = s.identity;
                    ap.joints = s.joints;
                    ap.missing = s.missing;
                    mf.actors.push_back(std::move(ap));
                }
                tri.frames.push_back(std::move(mf));
            }
            auto tri_report = metrics::evaluate(tri, gt.motion, skeleton_basic15(), {});
            std::vector<Track> done;
            for (const auto& tr : extract_tracks(tri))
                done.push_back(dmae::complete_sequence(model, tr).track);
            MotionSequence comp = tracks_to_motion(done, tri.skeleton, tri.fps);
            auto comp_report = metrics::evaluate(comp, gt.motion, skeleton_basic15(), {});
            SweepRow row{static_cast<int>(views.size()), tri_report.aggregate.pcp,
                         comp_report.aggregate.pcp};
            rows.push_back(row);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", row.cameras, row.pcp_tri,
                          row.pcp_comp, comp_report.aggregate.mpjpe_mm);
            os << buf;
        }
    }
    return rows;
}

// --- criterion 8: pose-fusion benchmark --------------------------------------------

struct FusionResult {
    double coverage_model = 0;
    double coverage_interp = 0;
    double masked_mpjpe_mm = 0;
    double bone_scale_mm = 0;
    double seconds = 0;
};

static FusionResult run_fusion_benchmark(const dmae::DmaeModel& pretrained,
                                         const BenchmarkSetup& setup, const std::string& csv) {
    auto t0 = Clock::now();
    const auto& mapping = fusion::mapping_basic15_to_compact10();

    auto src_windows =
        scene_windows(setup.train_scene, setup.model.window, 600, kSeed + 20);
    std::vector<std::pair<dmae::MotionWindow, dmae::MotionWindow>> pairs;
    for (const auto& src : src_windows) {
        dmae::MotionWindow tar;
        tar.T = src.T;
        tar.J = mapping.target_joints();
        tar.pos.resize(static_cast<size_t>(tar.T) * tar.J);
        tar.mask.assign(tar.pos.size(), 0);
        std::vector<Vec3> row;
        std::vector<uint8_t> row_missing;
        const std::vector<uint8_t> none(src.J, 0);
        for (int t = 0; t < src.T; t++) {
            std::vector<Vec3> srow(src.pos.begin() + t * src.J,
                                   src.pos.begin() + (t + 1) * src.J);
            fusion::interpolate_skeleton(srow, none, mapping, row, row_missing);
            for (int j = 0; j < tar.J; j++) tar.pos[tar.index(t, j)] = row[j];
        }
        pairs.emplace_back(src, std::move(tar));
    }

    dmae::DmaeModel model = pretrained;  // start from the pretrained checkpoint
    fusion::FinetuneConfig fc;
    fc.schedule = setup.train;
    fc.schedule.epochs = 25;
    fc.source_mask_ratio = 0.3;
    fusion::finetune(model, pairs, fc);

    // evaluation: 30% of source cells missing
    auto test_windows = scene_windows(setup.test_scene, setup.model.window, 150, kSeed + 21);
    auto rng = make_rng(kSeed, 22);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    long long covered_model = 0, covered_interp = 0, total_target = 0;
    double err_sum = 0;
    long long err_n = 0;
    double bone_sum = 0;
    long long bone_n = 0;
    const auto& def = skeleton_basic15();
    for (auto& src : test_windows) {
        std::vector<std::vector<Vec3>> raw(src.T, std::vector<Vec3>(src.J));
        std::vector<std::vector<uint8_t>> missing(src.T, std::vector<uint8_t>(src.J, 0));
        for (int t = 0; t < src.T; t++)
            for (int j = 0; j < src.J; j++) {
                raw[t][j] = src.pos[src.index(t, j)];
                missing[t][j] = u(rng) < 0.3;
            }
        // ground-truth target from the complete source
        std::vector<std::vector<Vec3>> tar_truth(src.T);
        std::vector<uint8_t> scratch;
        const std::vector<uint8_t> none(src.J, 0);
        for (int t = 0; t < src.T; t++)
            fusion::interpolate_skeleton(raw[t], none, mapping, tar_truth[t], scratch);
        for (int t = 0; t < src.T; t++)
            for (const auto& [a, b] : def.limbs) {
                bone_sum += (raw[t][a] - raw[t][b]).norm();
                bone_n++;
            }

        const auto pred =
            fusion::predict_target_window(model, raw, missing, src.J, mapping.target_joints());
        for (int t = 0; t < src.T; t++) {
            std::vector<Vec3> tar_interp;
            std::vector<uint8_t> tar_invalid;
            fusion::interpolate_skeleton(raw[t], missing[t], mapping, tar_interp, tar_invalid);
            for (int j = 0; j < mapping.target_joints(); j++) {
                total_target++;
                covered_model++;  // the model always predicts
                if (!tar_invalid[j]) covered_interp++;
                err_sum += (pred[t * mapping.target_joints() + j] - tar_truth[t][j]).norm();
                err_n++;
            }
        }
    }

    FusionResult out;
    out.coverage_model = 100.0 * covered_model / total_target;
    out.coverage_interp = 100.0 * covered_interp / total_target;
    out.masked_mpjpe_mm = err_sum / err_n * 1000.0;
    out.bone_scale_mm = bone_sum / bone_n * 1000.0;
    out.seconds = seconds_since(t0);

    std::ofstream os(csv);
    os << "# config=fusion seed=" << kSeed << "\n";
    os << "coverage_model_pct,coverage_interp_pct,masked_target_mpjpe_mm,bone_scale_mm\n";
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f\n", out.coverage_model,
                  out.coverage_interp, out.masked_mpjpe_mm, out.bone_scale_mm);
    os << buf;
    return out;
}

// --- criterion 10: metric unit anchors ----------------------------------------------

static void criterion10() {
    bool ok = true;
    std::ostringstream why;

    Track gt;
    gt.identity = 0;
    gt.pos.assign(2, std::vector<Vec3>(4));
    gt.missing.assign(2, std::vector<uint8_t>(4, 0));
    for (int t = 0; t < 2; t++)
        for (int j = 0; j < 4; j++) gt.pos[t][j] = Vec3(0.0, j, t + 1.0);

    // mpjpe anchors
    ok = ok && metrics::mpjpe_mm(gt, gt) == 0.0;
    {
        auto pred = gt;
        pred.pos[0][0] += Vec3(0.03, 0, 0);
        const double got = metrics::mpjpe_mm(pred, gt);
        if (std::abs(got - 30.0 / 8.0) > 1e-9) {
            ok = false;
            why << "mpjpe unit conversion; ";
        }
    }
    {
        Track single;
        single.identity = 0;
        single.pos.assign(1, {Vec3(0, 0, 1)});
        single.missing.assign(1, {0});
        auto pred = single;
        pred.pos[0][0] += Vec3(0.03, 0, 0);
        if (std::abs(metrics::mpjpe_mm(pred, single) - 30.0) > 1e-9) {
            ok = false;
            why << "mpjpe 30mm; ";
        }
    }

    // pck anchors, including the inclusive 0.2 m boundary
    {
        auto run_with_error = [&](double err) {
            auto pred = gt;
            for (auto& row : pred.pos)
                for (auto& p : row) p.x() = err;
            return metrics::pck_precision_recall(pred, gt, 0.2);
        };
        auto [p1, r1] = run_with_error(0.1);
        auto [p2, r2] = run_with_error(0.3);
        auto [p3, r3] = run_with_error(0.2);
        if (!(p1 == 100 && r1 == 100)) { ok = false; why << "pck 0.1; "; }
        if (!(p2 == 0 && r2 == 0)) { ok = false; why << "pck 0.3; "; }
        if (!(p3 == 100 && r3 == 100)) { ok = false; why << "pck boundary; "; }
        auto pred = gt;
        for (int t = 0; t < 2; t++)
            for (int j = 0; j < 4; j++)
                if ((t * 4 + j) % 2 == 0) pred.missing[t][j] = 1;
        auto [p4, r4] = metrics::pck_precision_recall(pred, gt, 0.2);
        if (!(p4 == 100 && r4 == 50)) { ok = false; why << "pck partial; "; }
    }

    // pcp anchors on a unit-length limb
    {
        SkeletonDefinition def;
        def.name = "pair";
        def.joints = {"a", "b"};
        def.limbs = {{0, 1}};
        def.midhip = 0;
        Track t2;
        t2.identity = 0;
        t2.pos.assign(1, {Vec3(0, 0, 1), Vec3(1, 0, 1)});
        t2.missing.assign(1, {0, 0});
        if (metrics::pcp_percent(t2, t2, def, 0.5) != 100.0) { ok = false; why << "pcp exact; "; }
        auto pred = t2;
        pred.pos[0][0] += Vec3(0.5, 0, 0);
        if (metrics::pcp_percent(pred, t2, def, 0.5) != 100.0) {
            ok = false;
            why << "pcp boundary inclusive; ";
        }
        pred = t2;
        pred.pos[0][0] += Vec3(0.6, 0, 0);
        if (metrics::pcp_percent(pred, t2, def, 0.5) != 0.0) { ok = false; why << "pcp 0.6; "; }
        pred = t2;
        pred.missing[0][1] = 1;
        if (metrics::pcp_percent(pred, t2, def, 0.5) != 0.0) {
            ok = false;
            why << "pcp missing endpoint; ";
        }
    }
    report(10, "metric unit anchors", ok, ok ? "all exact" : why.str());
}

// --- main ------------------------------------------------------------------------

int main() {
    const std::string out_a = "acceptance_out_a";
    const std::string out_b = "acceptance_out_b";
    fs::create_directories(out_a);
    fs::create_directories(out_b);

    criterion1();
    criterion2();
    criterion3();
    criterion4(out_a, false);

    BenchmarkSetup setup;

    // criterion 5 + baseline for 6
    auto t5 = Clock::now();
    BenchResult base = run_benchmark(setup, dmae::EncodingMode::full);
    const double bench5_secs = seconds_since(t5);
    report(5, "completion benchmark", base.model_mm <= 0.8 * base.interp_mm &&
                                           bench5_secs < 900.0,
           fmt("model %.1f mm vs interp %.1f mm (ratio %.3f, need <= 0.8), %.0fs",
               base.model_mm, base.interp_mm, base.model_mm / base.interp_mm, bench5_secs));

    BenchResult no_time = run_benchmark(setup, dmae::EncodingMode::no_time);
    BenchResult none = run_benchmark(setup, dmae::EncodingMode::none);
    write_benchmark_csv(out_a + "/c56_benchmark.csv",
                        {{"full", base}, {"no_time", no_time}, {"none", none}});
    report(6, "ablation direction", base.model_mm < no_time.model_mm &&
                                        no_time.model_mm < none.model_mm,
           fmt("full %.1f < no_time %.1f < none %.1f (mm)", base.model_mm, no_time.model_mm,
               none.model_mm));

    auto sweep = run_camera_sweep(base.model, out_a + "/c7_sweep.csv");
    {
        const bool monotone = sweep[0].pcp_tri >= sweep[1].pcp_tri &&
                              sweep[1].pcp_tri >= sweep[2].pcp_tri &&
                              sweep[0].pcp_comp >= sweep[1].pcp_comp &&
                              sweep[1].pcp_comp >= sweep[2].pcp_comp;
        const double drop_tri = sweep[0].pcp_tri - sweep[2].pcp_tri;
        const double drop_comp = sweep[0].pcp_comp - sweep[2].pcp_comp;
        report(7, "camera-count degradation", monotone && drop_comp < drop_tri,
               fmt("tri %.2f/%.2f/%.2f, completed %.2f/%.2f/%.2f, drops %.2f vs %.2f",
                   sweep[0].pcp_tri, sweep[1].pcp_tri, sweep[2].pcp_tri, sweep[0].pcp_comp,
                   sweep[1].pcp_comp, sweep[2].pcp_comp, drop_comp, drop_tri));
    }

    FusionResult fusion_res = run_fusion_benchmark(base.model, setup, out_a + "/c8_fusion.csv");
    report(8, "pose-fusion benchmark",
           fusion_res.coverage_model == 100.0 && fusion_res.coverage_interp < 100.0 &&
               fusion_res.masked_mpjpe_mm < 0.1 * fusion_res.bone_scale_mm &&
               fusion_res.seconds < 600.0,
           fmt("coverage %.1f%% vs interp %.1f%%, masked MPJPE %.1f mm (bound %.1f), %.0fs",
               fusion_res.coverage_model, fusion_res.coverage_interp,
               fusion_res.masked_mpjpe_mm, 0.1 * fusion_res.bone_scale_mm,
               fusion_res.seconds));

    // criterion 9: full re-run of criteria 4-8 flows, byte-compared CSVs
    {
        criterion4(out_b, true);
        BenchResult base2 = run_benchmark(setup, dmae::EncodingMode::full);
        BenchResult no_time2 = run_benchmark(setup, dmae::EncodingMode::no_time);
        BenchResult none2 = run_benchmark(setup, dmae::EncodingMode::none);
        write_benchmark_csv(out_b + "/c56_benchmark.csv",
                            {{"full", base2}, {"no_time", no_time2}, {"none", none2}});
        run_camera_sweep(base2.model, out_b + "/c7_sweep.csv");
        run_fusion_benchmark(base2.model, setup, out_b + "/c8_fusion.csv");

        bool identical = true;
        std::string which;
        for (const char* f :
             {"c4_metrics.csv", "c56_benchmark.csv", "c7_sweep.csv", "c8_fusion.csv"}) {
            if (slurp(out_a + "/" + f) != slurp(out_b + "/" + f)) {
                identical = false;
                which += std::string(f) + " ";
            }
        }
        report(9, "determinism", identical,
               identical ? "criteria 4-8 reruns byte-identical" : "differs: " + which);
    }

    criterion10();

    std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
