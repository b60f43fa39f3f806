#include "mocap/motion_io.hpp"

#include <json.hpp>

#include <fstream>
#include <map>

namespace mocap {

int MotionSequence::joint_count() const {
    for (const auto& f : frames)
        for (const auto& a : f.actors) return static_cast<int>(a.joints.size());
    return 0;
}

MotionSequence load_motion(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("motion: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
        MotionSequence seq;
        seq.skeleton = j.at("skeleton").get<std::string>();
        seq.fps = j.at("fps").get<double>();
        if (j.contains("meta")) {
            seq.config_hash = std::stoull(j["meta"].value("config", "0"), nullptr, 16);
            seq.seed = j["meta"].value("seed", 0ull);
        }
        for (const auto& jf : j.at("frames")) {
            MotionFrame mf;
            mf.t = jf.at("t").get<int>();
            for (const auto& ja : jf.at("actors")) {
                ActorPose ap;
                ap.id = ja.at("id").get<int>();
                for (const auto& jj : ja.at("joints")) {
                    if (jj.is_null()) {
                        ap.joints.emplace_back(geom::Vec3::Zero());
                        ap.missing.push_back(1);
                    } else {
                        ap.joints.emplace_back(jj.at(0).get<double>(), jj.at(1).get<double>(),
                                               jj.at(2).get<double>());
                        ap.missing.push_back(0);
                    }
                }
                mf.actors.push_back(std::move(ap));
            }
            seq.frames.push_back(std::move(mf));
        }
        return seq;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("motion: malformed " + path + ": " + e.what());
    }
}

void save_motion(const std::string& path, const MotionSequence& seq) {
    nlohmann::json j;
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(seq.config_hash));
    j["meta"] = {{"config", hash_hex}, {"seed", seq.seed}};
    j["skeleton"] = seq.skeleton;
    j["fps"] = seq.fps;
    j["frames"] = nlohmann::json::array();
    for (const auto& mf : seq.frames) {
        nlohmann::json jf;
        jf["t"] = mf.t;
        jf["actors"] = nlohmann::json::array();
        for (const auto& ap : mf.actors) {
            nlohmann::json ja;
            ja["id"] = ap.id;
            ja["joints"] = nlohmann::json::array();
            for (size_t k = 0; k < ap.joints.size(); k++) {
                if (ap.missing[k]) {
                    ja["joints"].push_back(nullptr);
                } else {
                    ja["joints"].push_back(
                        {ap.joints[k].x(), ap.joints[k].y(), ap.joints[k].z()});
                }
            }
            jf["actors"].push_back(std::move(ja));
        }
        j["frames"].push_back(std::move(jf));
    }
    std::ofstream os(path);
    if (!os) throw DataError("motion: cannot open " + path + " for writing");
    os << j.dump() << "\n";
}

std::vector<Track> extract_tracks(const MotionSequence& seq) {
    const int J = seq.joint_count();
    std::map<int, std::pair<int, int>> range;  // identity -> [first, last] frame index
    for (size_t f = 0; f < seq.frames.size(); f++) {
        for (const auto& ap : seq.frames[f].actors) {
            auto it = range.find(ap.id);
            if (it == range.end()) range[ap.id] = {static_cast<int>(f), static_cast<int>(f)};
            else it->second.second = static_cast<int>(f);
        }
    }
    std::vector<Track> tracks;
    for (const auto& [id, fr] : range) {
        Track tr;
        tr.identity = id;
        tr.start_frame = seq.frames[fr.first].t;
        const int len = fr.second - fr.first + 1;
        tr.pos.assign(len, std::vector<geom::Vec3>(J, geom::Vec3::Zero()));
        tr.missing.assign(len, std::vector<uint8_t>(J, 1));
        for (int f = fr.first; f <= fr.second; f++) {
            for (const auto& ap : seq.frames[f].actors) {
                if (ap.id != id) continue;
                for (int k = 0; k < J && k < static_cast<int>(ap.joints.size()); k++) {
                    tr.pos[f - fr.first][k] = ap.joints[k];
                    tr.missing[f - fr.first][k] = ap.missing[k];
                }
            }
        }
        tracks.push_back(std::move(tr));
    }
    return tracks;
}

MotionSequence tracks_to_motion(const std::vector<Track>& tracks, const std::string& skeleton,
                                double fps) {
    MotionSequence seq;
    seq.skeleton = skeleton;
    seq.fps = fps;
    int lo = INT_MAX, hi = INT_MIN;
    for (const auto& tr : tracks) {
        lo = std::min(lo, tr.start_frame);
        hi = std::max(hi, tr.start_frame + tr.length() - 1);
    }
    if (tracks.empty()) return seq;
    for (int t = lo; t <= hi; t++) {
        MotionFrame mf;
        mf.t = t;
        for (const auto& tr : tracks) {
            const int f = t - tr.start_frame;
            if (f < 0 || f >= tr.length()) continue;
            ActorPose ap;
            ap.id = tr.identity;
            ap.joints = tr.pos[f];
            ap.missing = tr.missing[f];
            mf.actors.push_back(std::move(ap));
        }
        seq.frames.push_back(std::move(mf));
    }
    return seq;
}

}  // namespace mocap
