#include "mocap/detections.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>

namespace mocap::assoc {

Eigen::Vector3d AppearancePatch::channel_median() const {
    const size_t n = rgb.size() / 3;
    if (n == 0) throw DataError("appearance patch: empty");
    Eigen::Vector3d med;
    std::vector<double> ch(n);
    for (int c = 0; c < 3; c++) {
        for (size_t i = 0; i < n; i++) ch[i] = rgb[3 * i + c];
        auto mid = ch.begin() + n / 2;
        std::nth_element(ch.begin(), mid, ch.end());
        if (n % 2 == 1) {
            med[c] = *mid;
        } else {
            const double hi = *mid;
            med[c] = (hi + *std::max_element(ch.begin(), mid)) / 2.0;
        }
    }
    return med;
}

std::vector<FrameDetections> load_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("detections: cannot open " + path);
    std::vector<FrameDetections> frames;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            FrameDetections fd;
            fd.frame = j.at("t").get<int>();
            for (const auto& jv : j.at("views")) {
                ViewDetections vd;
                vd.view = jv.at("v").get<int>();
                for (const auto& jc : jv.at("candidates")) {
                    Candidate2D cand;
                    for (const auto& jj : jc.at("joints")) {
                        Joint2D joint;
                        joint.px = geom::Vec2(jj.at(0).get<double>(), jj.at(1).get<double>());
                        joint.confidence = jj.at(2).get<double>();
                        joint.valid = joint.confidence > 0.0;
                        cand.joints.push_back(joint);
                    }
                    vd.candidates.push_back(std::move(cand));
                }
                fd.views.push_back(std::move(vd));
            }
            frames.push_back(std::move(fd));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("detections: " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return frames;
}

void save_detections(const std::string& path, const std::vector<FrameDetections>& frames) {
    std::ofstream os(path);
    if (!os) throw DataError("detections: cannot open " + path + " for writing");
    for (const auto& fd : frames) {
        nlohmann::json j;
        j["t"] = fd.frame;
        j["views"] = nlohmann::json::array();
        for (const auto& vd : fd.views) {
            nlohmann::json jv;
            jv["v"] = vd.view;
            jv["candidates"] = nlohmann::json::array();
            for (const auto& cand : vd.candidates) {
                nlohmann::json jc;
                jc["joints"] = nlohmann::json::array();
                for (const auto& joint : cand.joints) {
                    if (joint.valid)
                        jc["joints"].push_back({joint.px.x(), joint.px.y(), joint.confidence});
                    else
                        jc["joints"].push_back({0.0, 0.0, 0.0});
                }
                jv["candidates"].push_back(std::move(jc));
            }
            j["views"].push_back(std::move(jv));
        }
        os << j.dump() << "\n";
    }
}

void attach_appearance(std::vector<FrameDetections>& frames, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("appearance: cannot open " + path);
    std::map<std::tuple<int, int, int>, AppearancePatch> patches;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            AppearancePatch p;
            p.radius = j.at("radius").get<int>();
            p.rgb = j.at("rgb").get<std::vector<double>>();
            patches[{j.at("t").get<int>(), j.at("v").get<int>(), j.at("c").get<int>()}] =
                std::move(p);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("appearance: " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    for (auto& fd : frames)
        for (auto& vd : fd.views)
            for (size_t c = 0; c < vd.candidates.size(); c++) {
                auto it = patches.find({fd.frame, vd.view, static_cast<int>(c)});
                if (it != patches.end()) vd.candidates[c].patch = it->second;
            }
}

void save_appearance(const std::string& path, const std::vector<FrameDetections>& frames) {
    std::ofstream os(path);
    if (!os) throw DataError("appearance: cannot open " + path + " for writing");
    for (const auto& fd : frames)
        for (const auto& vd : fd.views)
            for (size_t c = 0; c < vd.candidates.size(); c++) {
                if (!vd.candidates[c].patch) continue;
                nlohmann::json j;
                j["t"] = fd.frame;
                j["v"] = vd.view;
                j["c"] = static_cast<int>(c);
                j["radius"] = vd.candidates[c].patch->radius;
                j["rgb"] = vd.candidates[c].patch->rgb;
                os << j.dump() << "\n";
            }
}

}  // namespace mocap::assoc
