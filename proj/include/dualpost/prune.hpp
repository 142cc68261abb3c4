#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpost/error.hpp"
#include "dualpost/kinematic.hpp"
#include "dualpost/scene.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

// Dual-layer pruning: a frame keeps its reasoning only when its scene label
// and its kinematic action label are both 1. Everything else about the frame
// is untouched.
struct PruneResult {
    Trajectory pruned;
    std::vector<int> keyframe_mask;
    std::size_t retained_tokens = 0;
    std::size_t original_tokens = 0;
};

inline PruneResult prune_trajectory(const Trajectory& traj, const SceneLabels& scene,
                                    const KinematicLabels& kin) {
    if (traj.domain_tag != DomainTag::Robot) {
        throw InvalidArgument("prune_trajectory: pruning applies to Robot data only");
    }
    const std::size_t n = traj.frames.size();
    if (scene.scene_label.size() != n || kin.action_label.size() != n) {
        throw InvalidArgument("prune_trajectory: label length mismatch for \"" +
                              traj.id + "\"");
    }
    PruneResult result;
    result.pruned = traj;
    result.keyframe_mask.assign(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        Frame& f = result.pruned.frames[t];
        const std::size_t tokens = count_tokens(f.reasoning);
        result.original_tokens += tokens;
        const int keep = scene.scene_label[t] & kin.action_label[t];
        result.keyframe_mask[t] = keep;
        if (keep) {
            result.retained_tokens += tokens;
        } else if (!f.reasoning.empty()) {
            f.reasoning.clear();
            f.reasoning_masked = true;
        }
    }
    return result;
}

enum class SceneSource { Precomputed, Detector };

struct PruneOptions {
    SceneSource source = SceneSource::Detector;
    std::string scene_label_path;  // used when source == Precomputed
    int window = 3;
    double threshold = 0.5;
};

struct PruneReport {
    std::size_t n_trajectories = 0;
    std::size_t n_frames = 0;
    double retention_ratio = 1.0;       // retained / original reasoning tokens
    double token_reduction_pct = 0.0;   // 100 * (1 - retention)
    double entropy_before_bits = 0.0;
    double entropy_after_bits = 0.0;
};

inline json report_to_json(const PruneReport& r) {
    json j = json::object();
    j["n_trajectories"] = r.n_trajectories;
    j["n_frames"] = r.n_frames;
    j["retention_ratio"] = r.retention_ratio;
    j["token_reduction_pct"] = r.token_reduction_pct;
    j["entropy_before_bits"] = r.entropy_before_bits;
    j["entropy_after_bits"] = r.entropy_after_bits;
    return j;
}

// Prunes every Robot trajectory; Multimodal ones pass through unchanged.
// Writes the retention report to report_path when non-empty.
inline Dataset prune_dataset(const Dataset& ds, const PruneOptions& opts,
                             const std::string& report_path = {}) {
    Dataset out;
    out.schema_version = ds.schema_version;
    PruneReport report;
    std::size_t retained = 0, original = 0;
    for (const Trajectory& traj : ds.trajectories) {
        report.n_trajectories += 1;
        report.n_frames += traj.frames.size();
        if (traj.domain_tag != DomainTag::Robot) {
            out.trajectories.push_back(traj);
            continue;
        }
        SceneLabels scene = opts.source == SceneSource::Precomputed
                                ? load_scene_labels(traj, opts.scene_label_path)
                                : detect_boundaries(pose_gripper_features(traj),
                                                    opts.window, opts.threshold);
        PruneResult pr = prune_trajectory(traj, scene, label_kinematic(traj));
        retained += pr.retained_tokens;
        original += pr.original_tokens;
        out.trajectories.push_back(std::move(pr.pruned));
    }
    report.retention_ratio =
        original == 0 ? 1.0
                      : static_cast<double>(retained) / static_cast<double>(original);
    report.token_reduction_pct = 100.0 * (1.0 - report.retention_ratio);
    report.entropy_before_bits = dataset_stats(ds).entropy_bits;
    report.entropy_after_bits = dataset_stats(out).entropy_bits;
    if (!report_path.empty()) {
        std::ofstream rep(report_path, std::ios::trunc);
        if (!rep) throw IoError("cannot open report file: " + report_path);
        rep << report_to_json(report).dump() << '\n';
    }
    return out;
}

}  // namespace dualpost
