#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "dualpost/error.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

// Per-frame kinematic keyframe labels: a frame is labeled when its pose
// second-difference norm strictly exceeds the trajectory mean, or the gripper
// state flips relative to the predecessor.
struct KinematicLabels {
    std::vector<double> accel_norm;
    double mean_accel = 0.0;
    std::vector<char> gripper_change;
    std::vector<int> action_label;
};

// Shift each angle channel by multiples of 2*pi so consecutive differences
// have magnitude <= pi; position channels pass through. A +-pi wrap would
// otherwise show up as a spurious acceleration spike.
inline std::vector<std::array<double, 6>> unwrap_angles(const Trajectory& traj) {
    if (traj.frames.empty()) throw InvalidArgument("unwrap_angles: empty trajectory");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<std::array<double, 6>> out;
    out.reserve(traj.frames.size());
    out.push_back(traj.frames.front().pose);
    for (std::size_t t = 1; t < traj.frames.size(); ++t) {
        std::array<double, 6> p = traj.frames[t].pose;
        for (int c = 3; c < 6; ++c) {
            const double prev = out.back()[c];
            double d = p[c] - prev;
            d -= two_pi * std::round(d / two_pi);
            p[c] = prev + d;
        }
        out.push_back(p);
    }
    return out;
}

// Unit-timestep central second difference; boundary frames get 0.
inline std::vector<double> accelerations(
    const std::vector<std::array<double, 6>>& poses) {
    if (poses.empty()) throw InvalidArgument("accelerations: empty pose sequence");
    const std::size_t n = poses.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t t = 1; t + 1 < n; ++t) {
        double sq = 0.0;
        for (int c = 0; c < 6; ++c) {
            const double d = poses[t + 1][c] - 2.0 * poses[t][c] + poses[t - 1][c];
            sq += d * d;
        }
        out[t] = std::sqrt(sq);
    }
    return out;
}

inline KinematicLabels label_kinematic(const Trajectory& traj) {
    if (traj.frames.empty()) throw InvalidArgument("label_kinematic: empty trajectory");
    const std::size_t n = traj.frames.size();
    KinematicLabels labels;
    labels.accel_norm = accelerations(unwrap_angles(traj));

    // Mean over interior frames only; the boundary zeros are a discretization
    // artifact, not motion.
    if (n >= 3) {
        double sum = 0.0;
        for (std::size_t t = 1; t + 1 < n; ++t) sum += labels.accel_norm[t];
        labels.mean_accel = sum / static_cast<double>(n - 2);
    }

    labels.gripper_change.assign(n, 0);
    labels.action_label.assign(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0 && traj.frames[t].gripper != traj.frames[t - 1].gripper) {
            labels.gripper_change[t] = 1;
        }
        const bool abrupt = labels.accel_norm[t] > labels.mean_accel;
        labels.action_label[t] = (abrupt || labels.gripper_change[t]) ? 1 : 0;
    }
    return labels;
}

}  // namespace dualpost
