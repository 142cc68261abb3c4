#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpost/error.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

// Per-frame reasoning-scene labels (event boundaries). The detector is
// pluggable: precomputed annotation files are first-class input, and the
// built-in detector is a windowed cosine-dissimilarity change-point scorer.
struct SceneLabels {
    std::vector<int> scene_label;
    std::string detector_id;
    std::vector<double> scores;  // in [0,1]
};

struct FrameFeatures {
    std::vector<std::vector<double>> rows;  // one fixed-length vector per frame
};

// Default feature source when no image decoding is wanted: pose + gripper.
inline FrameFeatures pose_gripper_features(const Trajectory& traj) {
    FrameFeatures feats;
    feats.rows.reserve(traj.frames.size());
    for (const Frame& f : traj.frames) {
        std::vector<double> row(f.pose.begin(), f.pose.end());
        row.push_back(static_cast<double>(f.gripper));
        feats.rows.push_back(std::move(row));
    }
    return feats;
}

// Precomputed label file: line-delimited {"trajectory_id": ..., "labels": [...]}.
inline SceneLabels load_scene_labels(const Trajectory& traj, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scene label file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("line " + std::to_string(lineno) +
                              ": invalid scene label record: " + e.what());
        }
        if (!j.contains("trajectory_id") || !j.contains("labels")) {
            throw SchemaError("line " + std::to_string(lineno) +
                              ": scene label record missing trajectory_id/labels");
        }
        if (j["trajectory_id"].get<std::string>() != traj.id) continue;
        SceneLabels out;
        out.detector_id = "precomputed";
        for (const auto& v : j["labels"]) {
            const int label = v.get<int>();
            if (label != 0 && label != 1) {
                throw SchemaError("line " + std::to_string(lineno) +
                                  ": scene labels must be 0 or 1");
            }
            out.scene_label.push_back(label);
            out.scores.push_back(static_cast<double>(label));
        }
        if (out.scene_label.size() != traj.frames.size()) {
            throw SchemaError("scene labels for \"" + traj.id + "\" have length " +
                              std::to_string(out.scene_label.size()) + ", expected " +
                              std::to_string(traj.frames.size()));
        }
        return out;
    }
    throw SchemaError("no scene labels found for trajectory \"" + traj.id + "\"");
}

namespace detail {

inline double cosine_distance_half(const std::vector<double>& a,
                                   const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp((1.0 - sim) / 2.0, 0.0, 1.0);
}

}  // namespace detail

// score[t] = cosine distance / 2 between the mean feature over frames
// [t-window, t-1] and over [t, t+window-1] (windows truncated at the edges,
// 0 where the preceding side is empty). A frame is labeled iff its score is a
// strict local maximum and exceeds the threshold.
inline SceneLabels detect_boundaries(const FrameFeatures& features, int window,
                                     double threshold) {
    if (window < 1) throw InvalidArgument("detect_boundaries: window must be >= 1");
    if (features.rows.empty()) {
        throw InvalidArgument("detect_boundaries: no frames");
    }
    const std::size_t n = features.rows.size();
    const std::size_t dim = features.rows.front().size();
    for (const auto& row : features.rows) {
        if (row.size() != dim) {
            throw InvalidArgument("detect_boundaries: ragged feature rows");
        }
    }
    SceneLabels out;
    out.detector_id = "cosine-window";
    out.scores.assign(n, 0.0);
    out.scene_label.assign(n, 0);

    auto window_mean = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
        std::vector<double> mean(dim, 0.0);
        for (std::size_t t = lo; t < hi; ++t) {
            for (std::size_t i = 0; i < dim; ++i) mean[i] += features.rows[t][i];
        }
        for (std::size_t i = 0; i < dim; ++i) mean[i] /= static_cast<double>(hi - lo);
        return mean;
    };

    const std::size_t w = static_cast<std::size_t>(window);
    for (std::size_t t = 1; t < n; ++t) {
        const std::size_t lo = t >= w ? t - w : 0;
        const std::size_t hi = std::min(n, t + w);
        out.scores[t] = detail::cosine_distance_half(window_mean(lo, t),
                                                     window_mean(t, hi));
    }
    for (std::size_t t = 0; t < n; ++t) {
        const bool above = out.scores[t] > threshold;
        const bool left_ok = t == 0 || out.scores[t] > out.scores[t - 1];
        const bool right_ok = t + 1 == n || out.scores[t] > out.scores[t + 1];
        out.scene_label[t] = (above && left_ok && right_ok) ? 1 : 0;
    }
    return out;
}

}  // namespace dualpost
