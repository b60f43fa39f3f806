#include "mocap/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mocap/geometry.hpp"
#include "mocap/motion_io.hpp"
#include "mocap/skeleton.hpp"

namespace mocap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config -------------------------------------------------------------------

namespace {

template <class T>
T field(const json& j, const std::string& scope, const std::string& name, T fallback) {
    if (!j.contains(name)) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config." + scope + "." + name + ": wrong type");
    }
}

std::string header_line(uint64_t config_hash, uint64_t seed) {
    char line[80];
    std::snprintf(line, sizeof(line), "# config=%016llx seed=%llu",
                  static_cast<unsigned long long>(config_hash),
                  static_cast<unsigned long long>(seed));
    return line;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
    }

    PipelineConfig cfg;
    cfg.seed = field<uint64_t>(j, "", "seed", 42);
    cfg.out_dir = field<std::string>(j, "", "out_dir", "out");

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        cfg.calibration = field<std::string>(p, "paths", "calibration", "");
        cfg.detections = field<std::string>(p, "paths", "detections", "");
        cfg.appearance = field<std::string>(p, "paths", "appearance", "");
        cfg.ground_truth = field<std::string>(p, "paths", "ground_truth", "");
        cfg.motion = field<std::string>(p, "paths", "motion", "");
        cfg.completed = field<std::string>(p, "paths", "completed", "");
        cfg.checkpoint = field<std::string>(p, "paths", "checkpoint", "");
        cfg.checkpoint_out = field<std::string>(p, "paths", "checkpoint_out", "");
        cfg.mapping = field<std::string>(p, "paths", "mapping", "");
        cfg.skeleton = field<std::string>(p, "paths", "skeleton", "basic15");
    }

    if (j.contains("synth")) {
        const auto& s = j["synth"];
        cfg.scene.actors = field<int>(s, "synth", "actors", 3);
        cfg.scene.skeleton = field<std::string>(s, "synth", "skeleton", "basic15");
        cfg.scene.cameras = field<int>(s, "synth", "cameras", 5);
        cfg.scene.camera_radius = field<double>(s, "synth", "camera_radius", 4.5);
        cfg.scene.camera_height = field<double>(s, "synth", "camera_height", 2.2);
        cfg.scene.frames = field<int>(s, "synth", "frames", 300);
        cfg.scene.fps = field<double>(s, "synth", "fps", 30.0);
        cfg.scene.patch_radius = field<int>(s, "synth", "patch_radius", 5);
        cfg.scene.crossing_frame = field<int>(s, "synth", "crossing_frame", -1);
        if (s.contains("noise")) {
            const auto& n = s["noise"];
            cfg.scene.noise.pixel_sigma = field<double>(n, "synth.noise", "pixel_sigma", 0.0);
            cfg.scene.noise.confidence_decay =
                field<double>(n, "synth.noise", "confidence_decay", 5.0);
            cfg.scene.noise.occlusion_rate =
                field<double>(n, "synth.noise", "occlusion_rate", 0.0);
            cfg.scene.noise.swap_rate = field<double>(n, "synth.noise", "swap_rate", 0.0);
            cfg.scene.noise.occlusion_radius =
                field<double>(n, "synth.noise", "occlusion_radius", 0.22);
        }
        if (s.contains("motions")) {
            for (const auto& m : s["motions"]) {
                synth::ActorMotionConfig mc;
                mc.family = field<std::string>(m, "synth.motions", "family", "walk_cycle");
                mc.amplitude = field<double>(m, "synth.motions", "amplitude", 1.0);
                mc.period = field<double>(m, "synth.motions", "period", 1.0);
                mc.speed = field<double>(m, "synth.motions", "speed", 1.1);
                mc.phase = field<double>(m, "synth.motions", "phase", 0.0);
                mc.path_radius = field<double>(m, "synth.motions", "path_radius", 1.4);
                mc.lateral_offset = field<double>(m, "synth.motions", "lateral_offset", 0.0);
                mc.heading = field<double>(m, "synth.motions", "heading", 0.0);
                cfg.scene.motions.push_back(mc);
            }
        }
    }

    if (j.contains("association")) {
        const auto& a = j["association"];
        cfg.association.th_p = field<double>(a, "association", "th_p", 0.2);
        cfg.association.th_v = field<int>(a, "association", "th_v", 3);
        cfg.association.th_d = field<double>(a, "association", "th_d", 0.02);
        cfg.association.psi = field<double>(a, "association", "psi", 0.2);
        cfg.association.phi = field<double>(a, "association", "phi", 0.25);
        cfg.association.patch_radius = field<int>(a, "association", "patch_radius", 5);
        cfg.association.match_floor = field<double>(a, "association", "match_floor", 0.5);
        cfg.association.midhip = field<int>(a, "association", "midhip", 0);
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.window = field<int>(m, "model", "window", 15);
        cfg.model.joints = field<int>(m, "model", "joints", 15);
        cfg.model.encoder_depth = field<int>(m, "model", "encoder_depth", 4);
        cfg.model.encoder_width = field<int>(m, "model", "encoder_width", 256);
        cfg.model.encoder_heads = field<int>(m, "model", "encoder_heads", 8);
        cfg.model.decoder_depth = field<int>(m, "model", "decoder_depth", 2);
        cfg.model.decoder_width = field<int>(m, "model", "decoder_width", 128);
        cfg.model.decoder_heads = field<int>(m, "model", "decoder_heads", 4);
        cfg.model.sigma_s = field<double>(m, "model", "sigma_s", 1.0);
        cfg.model.sigma_c = field<double>(m, "model", "sigma_c", 10.0);
        cfg.model.dropout = field<double>(m, "model", "dropout", 0.1);
        cfg.model.encoding =
            dmae::encoding_mode_from_string(field<std::string>(m, "model", "encoding", "full"));
        cfg.model.skeleton = field<std::string>(m, "model", "skeleton", cfg.skeleton);
        cfg.model.midhip = field<int>(m, "model", "midhip", 0);
    }

    if (j.contains("mask")) {
        const auto& m = j["mask"];
        const std::string mode = field<std::string>(m, "mask", "mode", "uniform");
        if (mode == "uniform") cfg.mask.mode = dmae::MaskSpec::Mode::uniform;
        else if (mode == "structured") cfg.mask.mode = dmae::MaskSpec::Mode::structured;
        else throw ConfigError("config.mask.mode: unknown mode '" + mode + "'");
        cfg.mask.ratio = field<double>(m, "mask", "ratio", 0.5);
        cfg.mask.joint_ratio = field<double>(m, "mask", "joint_ratio", 0.5);
        cfg.mask.frame_ratio = field<double>(m, "mask", "frame_ratio", 0.5);
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.epochs = field<int>(t, "train", "epochs", 1000);
        cfg.train.batch = field<int>(t, "train", "batch", 32);
        cfg.train.base_lr = field<double>(t, "train", "base_lr", 1e-5);
        cfg.train.weight_decay = field<double>(t, "train", "weight_decay", 0.01);
        cfg.train.augment = field<bool>(t, "train", "augment", true);
        cfg.max_windows = field<int>(t, "train", "max_windows", 2000);
        cfg.finetune_epochs = field<int>(t, "train", "finetune_epochs", 500);
        cfg.finetune_source_ratio = field<double>(t, "train", "finetune_source_ratio", 0.3);
    }

    if (j.contains("eval")) {
        const auto& e = j["eval"];
        cfg.eval.pck_threshold = field<double>(e, "eval", "pck_threshold", 0.2);
        cfg.eval.pcp_alpha = field<double>(e, "eval", "pcp_alpha", 0.5);
        cfg.write_svg = field<bool>(e, "eval", "svg", true);
        if (e.contains("camera_sweep"))
            cfg.camera_sweep = e["camera_sweep"].get<std::vector<std::vector<int>>>();
        cfg.sweep_checkpoint = field<std::string>(e, "eval", "sweep_checkpoint", "");
    }

    if (j.contains("ablate")) {
        const auto& a = j["ablate"];
        cfg.ablate_test_ground_truth =
            field<std::string>(a, "ablate", "test_ground_truth", "");
        cfg.ablate_test_windows = field<int>(a, "ablate", "test_windows", 200);
        if (a.contains("variants"))
            cfg.ablate_variants = a["variants"].get<std::vector<std::string>>();
    }

    cfg.config_hash = fnv1a64(j.dump());
    return cfg;
}

namespace {

// the one global seed fans out to every module
void propagate_seed(PipelineConfig& cfg) {
    cfg.scene.seed = cfg.seed;
    cfg.model.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.train.mask = cfg.mask;
    cfg.mask.seed = cfg.seed;
    cfg.config_hash = mix_seed(cfg.config_hash, cfg.seed);
}

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

const SkeletonDefinition& resolve_skeleton(const std::string& name) {
    const auto* def = find_builtin_skeleton(name);
    if (!def) throw ConfigError("skeleton: unknown definition '" + name + "'");
    return *def;
}

void require_path(const std::string& value, const std::string& name) {
    if (value.empty()) throw ConfigError("config.paths." + name + ": required by this subcommand");
    if (!fs::exists(value)) throw DataError("paths." + name + ": file not found: " + value);
}

void write_loss_csv(const std::string& path, const dmae::LossCurve& curve, uint64_t hash,
                    uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw DataError("loss csv: cannot open " + path);
    os << header_line(hash, seed) << "\n";
    os << "step,lr,loss\n";
    for (size_t i = 0; i < curve.loss.size(); i++) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g\n", i, curve.lr[i], curve.loss[i]);
        os << buf;
    }
}

MotionSequence triangulate_stream(const std::vector<assoc::FrameDetections>& frames,
                                  const std::vector<geom::CameraView>& cameras,
                                  const assoc::AssociationConfig& acfg, int joints,
                                  const std::string& skeleton, double fps) {
    assoc::FrameReconstructor rec(cameras, acfg, joints);
    MotionSequence seq;
    seq.skeleton = skeleton;
    seq.fps = fps;
    for (const auto& fd : frames) {
        MotionFrame mf;
        mf.t = fd.frame;
        for (const auto& skel : rec.reconstruct(fd)) {
            ActorPose ap;
            ap.id = skel.identity;
            ap.joints = skel.joints;
            ap.missing = skel.missing;
            mf.actors.push_back(std::move(ap));
        }
        seq.frames.push_back(std::move(mf));
    }
    return seq;
}

void write_missing_map(const std::string& path, const MotionSequence& seq, uint64_t hash,
                       uint64_t seed) {
    json j;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    j["meta"] = {{"config", hex}, {"seed", seed}};
    j["frames"] = json::array();
    for (const auto& mf : seq.frames) {
        json jf;
        jf["t"] = mf.t;
        jf["actors"] = json::array();
        for (const auto& ap : mf.actors) {
            json ja;
            ja["id"] = ap.id;
            ja["missing"] = json::array();
            for (uint8_t m : ap.missing) ja["missing"].push_back(static_cast<int>(m));
            jf["actors"].push_back(std::move(ja));
        }
        j["frames"].push_back(std::move(jf));
    }
    std::ofstream os(path);
    if (!os) throw DataError("missing map: cannot open " + path);
    os << j.dump() << "\n";
}

// small-multiples trajectory plot: one row per joint, one column per axis
void write_trajectory_svg(const std::string& path, const Track* observed, const Track& completed,
                          const Track& gt, const SkeletonDefinition& def, uint64_t hash,
                          uint64_t seed) {
    const int J = def.joint_count();
    const int cell_w = 340, cell_h = 64, pad = 8, left = 90, top = 40;
    const int width = left + 3 * (cell_w + pad) + pad;
    const int height = top + J * (cell_h + pad) + pad;
    std::ofstream os(path);
    if (!os) throw DataError("svg: cannot open " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    os << "<!-- " << header_line(hash, seed).substr(2) << " -->\n";
    {
        char stamp[64];
        std::time_t now = std::time(nullptr);
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        os << "<!-- generated " << stamp << " -->\n";
    }
    os << "<style>text{font:11px sans-serif}</style>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const char* axis_names[3] = {"x", "y", "z"};
    for (int c = 0; c < 3; c++)
        os << "<text x=\"" << left + c * (cell_w + pad) + cell_w / 2 << "\" y=\"" << top - 12
           << "\">" << axis_names[c] << " (m) vs frame</text>\n";

    const int len = gt.length();
    for (int j = 0; j < J; j++) {
        const int y0 = top + j * (cell_h + pad);
        os << "<text x=\"4\" y=\"" << y0 + cell_h / 2 << "\">" << def.joints[j] << "</text>\n";
        for (int c = 0; c < 3; c++) {
            const int x0 = left + c * (cell_w + pad);
            double lo = 1e18, hi = -1e18;
            auto scan = [&](const Track& t) {
                for (int f = 0; f < t.length(); f++)
                    if (!t.missing[f][j]) {
                        lo = std::min(lo, t.pos[f][j][c]);
                        hi = std::max(hi, t.pos[f][j][c]);
                    }
            };
            scan(gt);
            scan(completed);
            if (observed) scan(*observed);
            if (hi <= lo) hi = lo + 1e-6;
            auto px = [&](int f, double v) {
                const double sx = x0 + cell_w * (len > 1 ? f / double(len - 1) : 0.5);
                const double sy = y0 + cell_h - cell_h * (v - lo) / (hi - lo);
                char buf[48];
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx, sy);
                return std::string(buf);
            };
            os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << cell_w
               << "\" height=\"" << cell_h << "\" fill=\"none\" stroke=\"#ddd\"/>\n";
            auto poly = [&](const Track& t, const char* color, const char* dash) {
                os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" "
                   << dash << " points=\"";
                for (int f = 0; f < std::min(len, t.length()); f++)
                    if (!t.missing[f][j]) os << px(f, t.pos[f][j][c]);
                os << "\"/>\n";
            };
            poly(gt, "#999999", "");
            poly(completed, "#1f6fd0", "");
            if (observed) poly(*observed, "#e07b00", "stroke-dasharray=\"3,2\"");
        }
    }
    os << "<text x=\"" << left << "\" y=\"" << height - 6
       << "\">gray: ground truth, blue: completed, orange dashed: observed</text>\n";
    os << "</svg>\n";
}

}  // namespace

// --- subcommands ----------------------------------------------------------------

void run_synth(const PipelineConfig& cfg) {
    auto gt = synth::generate_motion(cfg.scene);
    gt.motion.config_hash = cfg.config_hash;
    gt.motion.seed = cfg.seed;
    auto cameras = synth::scene_cameras(cfg.scene);
    auto frames = synth::render_detections(gt, cameras, cfg.scene);

    geom::save_calibration(out_path(cfg, "calibration.json"), cameras);
    assoc::save_detections(out_path(cfg, "detections.jsonl"), frames);
    assoc::save_appearance(out_path(cfg, "appearance.jsonl"), frames);
    save_motion(out_path(cfg, "gt_motion.json"), gt.motion);
    std::cout << "synth: " << cfg.scene.actors << " actors, " << cameras.size() << " cameras, "
              << frames.size() << " frames -> " << cfg.out_dir << "\n";
}

void run_triangulate(const PipelineConfig& cfg) {
    require_path(cfg.calibration, "calibration");
    require_path(cfg.detections, "detections");
    auto cameras = geom::load_calibration(cfg.calibration);
    auto frames = assoc::load_detections(cfg.detections);
    if (!cfg.appearance.empty()) {
        if (!fs::exists(cfg.appearance))
            throw DataError("paths.appearance: file not found: " + cfg.appearance);
        assoc::attach_appearance(frames, cfg.appearance);
    }
    if (cfg.association.th_v > static_cast<int>(cameras.size()))
        std::cerr << "warning: th_v (" << cfg.association.th_v << ") exceeds the camera count ("
                  << cameras.size() << "); every joint will be filtered out\n";

    const auto& def = resolve_skeleton(cfg.skeleton);
    MotionSequence seq = triangulate_stream(frames, cameras, cfg.association, def.joint_count(),
                                            def.name, cfg.scene.fps);
    seq.config_hash = cfg.config_hash;
    seq.seed = cfg.seed;
    save_motion(out_path(cfg, "motion.json"), seq);
    write_missing_map(out_path(cfg, "missing_map.json"), seq, cfg.config_hash, cfg.seed);
    long long present = 0, missing = 0;
    for (const auto& mf : seq.frames)
        for (const auto& ap : mf.actors)
            for (uint8_t m : ap.missing) (m ? missing : present)++;
    std::cout << "triangulate: " << seq.frames.size() << " frames, " << present
              << " joints reconstructed, " << missing << " missing\n";
}

void run_train(const PipelineConfig& cfg) {
    require_path(cfg.ground_truth, "ground_truth");
    auto gt = load_motion(cfg.ground_truth);
    auto tracks = extract_tracks(gt);
    auto windows =
        dmae::build_training_windows(tracks, cfg.model.window, cfg.max_windows, cfg.seed);
    if (windows.empty()) throw DataError("train: no complete training windows available");

    dmae::ModelConfig mc = cfg.model;
    mc.joints = gt.joint_count();
    auto model = dmae::DmaeModel::create(mc);
    auto curve = dmae::train(model, windows, cfg.train);

    const std::string ck =
        cfg.checkpoint_out.empty() ? out_path(cfg, "model.ckpt") : cfg.checkpoint_out;
    dmae::save_model(ck, model);
    write_loss_csv(out_path(cfg, "train_loss.csv"), curve, cfg.config_hash, cfg.seed);
    std::cout << "train: " << windows.size() << " windows, " << curve.loss.size()
              << " steps, final loss " << (curve.loss.empty() ? 0.0 : curve.loss.back()) << " -> "
              << ck << "\n";
}

void run_complete(const PipelineConfig& cfg) {
    require_path(cfg.motion, "motion");
    require_path(cfg.checkpoint, "checkpoint");
    auto seq = load_motion(cfg.motion);
    auto model = dmae::load_model(cfg.checkpoint);
    if (model.cfg.joints != seq.joint_count())
        throw DataError("complete: checkpoint joint axis " + std::to_string(model.cfg.joints) +
                        " does not match the motion file (" +
                        std::to_string(seq.joint_count()) + ")");

    auto tracks = extract_tracks(seq);
    int unfilled = 0;
    std::vector<Track> done;
    for (const auto& tr : tracks) {
        auto res = dmae::complete_sequence(model, tr);
        unfilled += res.unfilled_cells;
        done.push_back(std::move(res.track));
    }
    MotionSequence out = tracks_to_motion(done, seq.skeleton, seq.fps);
    out.config_hash = cfg.config_hash;
    out.seed = cfg.seed;
    save_motion(out_path(cfg, "completed_motion.json"), out);
    if (unfilled > 0)
        std::cerr << "warning: " << unfilled << " cells had no observation in any window and "
                  << "remain missing\n";
    std::cout << "complete: " << tracks.size() << " identities -> completed_motion.json\n";
}

void run_finetune(const PipelineConfig& cfg) {
    require_path(cfg.motion, "motion");
    require_path(cfg.checkpoint, "checkpoint");
    const fusion::SkeletonMapping mapping =
        cfg.mapping.empty() ? fusion::mapping_basic15_to_compact10()
                            : fusion::load_mapping(cfg.mapping);

    auto src_seq = load_motion(cfg.motion);
    auto tracks = extract_tracks(src_seq);
    auto src_windows =
        dmae::build_training_windows(tracks, cfg.model.window, cfg.max_windows, cfg.seed);
    if (src_windows.empty()) throw DataError("finetune: no complete source windows available");

    std::vector<std::pair<dmae::MotionWindow, dmae::MotionWindow>> pairs;
    pairs.reserve(src_windows.size());
    for (const auto& src : src_windows) {
        dmae::MotionWindow tar;
        tar.T = src.T;
        tar.J = mapping.target_joints();
        tar.identity = src.identity;
        tar.start_frame = src.start_frame;
        tar.pos.resize(static_cast<size_t>(tar.T) * tar.J);
        tar.mask.assign(tar.pos.size(), 0);
        std::vector<geom::Vec3> row;
        std::vector<uint8_t> row_missing;
        std::vector<uint8_t> none(src.J, 0);
        for (int t = 0; t < src.T; t++) {
            std::vector<geom::Vec3> srow(src.pos.begin() + t * src.J,
                                         src.pos.begin() + (t + 1) * src.J);
            fusion::interpolate_skeleton(srow, none, mapping, row, row_missing);
            for (int j = 0; j < tar.J; j++) tar.pos[tar.index(t, j)] = row[j];
        }
        pairs.emplace_back(src, std::move(tar));
    }

    auto model = dmae::load_model(cfg.checkpoint);
    fusion::FinetuneConfig fc;
    fc.schedule = cfg.train;
    fc.schedule.epochs = cfg.finetune_epochs;
    fc.source_mask_ratio = cfg.finetune_source_ratio;
    auto curve = fusion::finetune(model, pairs, fc);

    const std::string ck =
        cfg.checkpoint_out.empty() ? out_path(cfg, "finetuned.ckpt") : cfg.checkpoint_out;
    dmae::save_model(ck, model);
    write_loss_csv(out_path(cfg, "finetune_loss.csv"), curve, cfg.config_hash, cfg.seed);
    std::cout << "finetune: " << pairs.size() << " pairs, " << curve.loss.size()
              << " steps -> " << ck << "\n";
}

namespace {

std::vector<assoc::FrameDetections> subset_views(const std::vector<assoc::FrameDetections>& in,
                                                 const std::vector<int>& views) {
    std::vector<assoc::FrameDetections> out;
    out.reserve(in.size());
    for (const auto& fd : in) {
        assoc::FrameDetections copy;
        copy.frame = fd.frame;
        for (size_t k = 0; k < views.size(); k++) {
            for (const auto& vd : fd.views) {
                if (vd.view != views[k]) continue;
                auto v = vd;
                v.view = static_cast<int>(k);  // reindex against the subset calibration
                copy.views.push_back(std::move(v));
            }
        }
        out.push_back(std::move(copy));
    }
    return out;
}

}  // namespace

void run_eval(const PipelineConfig& cfg) {
    require_path(cfg.ground_truth, "ground_truth");
    auto gt = load_motion(cfg.ground_truth);
    const auto& def = resolve_skeleton(gt.skeleton.empty() ? cfg.skeleton : gt.skeleton);

    const std::string pred_path = cfg.completed.empty() ? cfg.motion : cfg.completed;
    if (pred_path.empty())
        throw ConfigError("config.paths: eval needs 'completed' or 'motion'");
    if (!fs::exists(pred_path)) throw DataError("eval: file not found: " + pred_path);
    auto pred = load_motion(pred_path);

    auto report = metrics::evaluate(pred, gt, def, cfg.eval);
    metrics::write_eval_csv(out_path(cfg, "eval.csv"), report, cfg.config_hash, cfg.seed);
    metrics::write_limb_csv(out_path(cfg, "eval_limbs.csv"), report, cfg.config_hash, cfg.seed);

    if (cfg.write_svg) {
        auto gt_tracks = extract_tracks(gt);
        auto pred_tracks = extract_tracks(pred);
        std::vector<Track> obs_tracks;
        if (!cfg.completed.empty() && !cfg.motion.empty() && fs::exists(cfg.motion))
            obs_tracks = extract_tracks(load_motion(cfg.motion));
        for (const auto& ev : report.per_identity) {
            const Track* pt = nullptr;
            const Track* gtt = nullptr;
            const Track* ot = nullptr;
            for (const auto& t : pred_tracks)
                if (t.identity == ev.pred_id) pt = &t;
            for (const auto& t : gt_tracks)
                if (t.identity == ev.gt_id) gtt = &t;
            for (const auto& t : obs_tracks)
                if (t.identity == ev.pred_id) ot = &t;
            if (!pt || !gtt) continue;
            write_trajectory_svg(out_path(cfg, "trajectory_id" + std::to_string(ev.gt_id) +
                                                   ".svg"),
                                 ot, *pt, *gtt, def, cfg.config_hash, cfg.seed);
        }
    }

    const auto& agg = report.aggregate;
    std::cout << "eval: PCP " << fmt(agg.pcp) << "%, precision " << fmt(agg.precision)
              << "%, recall " << fmt(agg.recall) << "%, MPJPE " << fmt(agg.mpjpe_mm) << " mm\n";

    if (!cfg.camera_sweep.empty()) {
        require_path(cfg.calibration, "calibration");
        require_path(cfg.detections, "detections");
        auto cameras = geom::load_calibration(cfg.calibration);
        auto frames = assoc::load_detections(cfg.detections);
        if (!cfg.appearance.empty() && fs::exists(cfg.appearance))
            assoc::attach_appearance(frames, cfg.appearance);

        std::ofstream os(out_path(cfg, "camera_sweep.csv"));
        os << header_line(cfg.config_hash, cfg.seed) << "\n";
        os << "cameras,views,pcp_triangulated_pct,recall_triangulated_pct,"
              "mpjpe_triangulated_mm,pcp_completed_pct,recall_completed_pct,"
              "mpjpe_completed_mm\n";
        for (const auto& views : cfg.camera_sweep) {
            std::vector<geom::CameraView> cams;
            for (int v : views) {
                if (v < 0 || v >= static_cast<int>(cameras.size()))
                    throw ConfigError("config.eval.camera_sweep: view index out of range");
                cams.push_back(cameras[v]);
            }
            auto sub = subset_views(frames, views);
            MotionSequence tri = triangulate_stream(sub, cams, cfg.association,
                                                    def.joint_count(), def.name, gt.fps);
            auto tri_report = metrics::evaluate(tri, gt, def, cfg.eval);

            std::string completed_cols = ",,";
            if (!cfg.sweep_checkpoint.empty()) {
                auto model = dmae::load_model(cfg.sweep_checkpoint);
                std::vector<Track> done;
                for (const auto& tr : extract_tracks(tri))
                    done.push_back(dmae::complete_sequence(model, tr).track);
                MotionSequence comp = tracks_to_motion(done, tri.skeleton, tri.fps);
                auto comp_report = metrics::evaluate(comp, gt, def, cfg.eval);
                completed_cols = fmt(comp_report.aggregate.pcp) + "," +
                                 fmt(comp_report.aggregate.recall) + "," +
                                 fmt(comp_report.aggregate.mpjpe_mm);
            }
            std::string view_list;
            for (int v : views) view_list += (view_list.empty() ? "" : " ") + std::to_string(v);
            os << views.size() << "," << view_list << "," << fmt(tri_report.aggregate.pcp)
               << "," << fmt(tri_report.aggregate.recall) << ","
               << fmt(tri_report.aggregate.mpjpe_mm) << "," << completed_cols << "\n";
        }
        std::cout << "eval: camera sweep over " << cfg.camera_sweep.size()
                  << " subsets -> camera_sweep.csv\n";
    }
}

CompletionBenchmark benchmark_completion(dmae::DmaeModel& model,
                                         const std::vector<dmae::MotionWindow>& test_windows,
                                         const dmae::MaskSpec& mask, uint64_t seed) {
    CompletionBenchmark bench;
    double model_sum = 0, interp_sum = 0;
    for (size_t w = 0; w < test_windows.size(); w++) {
        const auto& raw = test_windows[w];
        dmae::MaskSpec ms = mask;
        ms.seed = mix_seed(seed, 0xBE7C + w);
        const auto cell_mask = dmae::sample_mask(ms, raw.T, raw.J);

        Track holes;
        holes.identity = 0;
        holes.pos.assign(raw.T, std::vector<geom::Vec3>(raw.J));
        holes.missing.assign(raw.T, std::vector<uint8_t>(raw.J, 0));
        for (int t = 0; t < raw.T; t++)
            for (int j = 0; j < raw.J; j++) {
                holes.pos[t][j] = raw.pos[raw.index(t, j)];
                holes.missing[t][j] = cell_mask[raw.index(t, j)];
            }
        const auto completed = dmae::complete_sequence(model, holes);
        const auto interp = dmae::linear_interpolate_sequence(holes);
        for (int t = 0; t < raw.T; t++)
            for (int j = 0; j < raw.J; j++) {
                if (!cell_mask[raw.index(t, j)]) continue;
                if (interp.missing[t][j] || completed.track.missing[t][j]) {
                    bench.skipped_cells++;  // a never-observed joint: no oracle value
                    continue;
                }
                model_sum += (completed.track.pos[t][j] - raw.pos[raw.index(t, j)]).norm();
                interp_sum += (interp.pos[t][j] - raw.pos[raw.index(t, j)]).norm();
                bench.cells++;
            }
    }
    if (bench.cells > 0) {
        bench.model_mpjpe_mm = model_sum / bench.cells * 1000.0;
        bench.interp_mpjpe_mm = interp_sum / bench.cells * 1000.0;
    }
    return bench;
}

void run_ablate(const PipelineConfig& cfg) {
    require_path(cfg.ground_truth, "ground_truth");
    auto gt = load_motion(cfg.ground_truth);
    auto windows = dmae::build_training_windows(extract_tracks(gt), cfg.model.window,
                                                cfg.max_windows, cfg.seed);
    if (windows.empty()) throw DataError("ablate: no training windows");

    const std::string test_path = cfg.ablate_test_ground_truth.empty()
                                      ? cfg.ground_truth
                                      : cfg.ablate_test_ground_truth;
    if (!fs::exists(test_path)) throw DataError("ablate: test ground truth not found: " + test_path);
    auto test_gt = load_motion(test_path);
    auto test_windows = dmae::build_training_windows(
        extract_tracks(test_gt), cfg.model.window, cfg.ablate_test_windows, cfg.seed + 1);
    if (test_windows.empty()) throw DataError("ablate: no test windows");

    std::ofstream os(out_path(cfg, "ablation.csv"));
    os << header_line(cfg.config_hash, cfg.seed) << "\n";
    os << "variant,masked_mpjpe_mm,interp_mpjpe_mm,final_loss,cells\n";
    for (const auto& variant : cfg.ablate_variants) {
        dmae::ModelConfig mc = cfg.model;
        mc.joints = gt.joint_count();
        mc.encoding = dmae::encoding_mode_from_string(variant);
        auto model = dmae::DmaeModel::create(mc);
        auto curve = dmae::train(model, windows, cfg.train);
        auto bench = benchmark_completion(model, test_windows, cfg.mask, cfg.seed);
        os << variant << "," << fmt(bench.model_mpjpe_mm) << "," << fmt(bench.interp_mpjpe_mm)
           << "," << fmt(curve.loss.empty() ? 0.0 : curve.loss.back()) << "," << bench.cells
           << "\n";
        std::cout << "ablate: " << variant << " masked MPJPE " << fmt(bench.model_mpjpe_mm)
                  << " mm (interp " << fmt(bench.interp_mpjpe_mm) << " mm)\n";
    }
}

int run(const std::string& subcommand, const std::string& config_path,
        const std::string& seed_override, const std::string& out_override) {
    try {
        PipelineConfig cfg = load_config(config_path);
        if (!seed_override.empty()) {
            try {
                cfg.seed = std::stoull(seed_override);
            } catch (const std::exception&) {
                throw ConfigError("--seed: not an integer: " + seed_override);
            }
        }
        if (!out_override.empty()) cfg.out_dir = out_override;
        propagate_seed(cfg);

        if (subcommand == "synth") run_synth(cfg);
        else if (subcommand == "triangulate") run_triangulate(cfg);
        else if (subcommand == "train") run_train(cfg);
        else if (subcommand == "complete") run_complete(cfg);
        else if (subcommand == "finetune") run_finetune(cfg);
        else if (subcommand == "eval") run_eval(cfg);
        else if (subcommand == "ablate") run_ablate(cfg);
        else throw ConfigError("unknown subcommand '" + subcommand + "'");
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace mocap::pipeline
