#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dualpost/kinematic.hpp"

using namespace dualpost;

namespace {

Trajectory make_traj(const std::vector<std::array<double, 6>>& poses,
                     const std::vector<int>& grips) {
    Trajectory t;
    t.id = "k";
    t.instruction = "go";
    t.domain_tag = DomainTag::Robot;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        Frame f;
        f.index = static_cast<int>(i);
        f.pose = poses[i];
        f.gripper = grips.empty() ? 0 : grips[i];
        f.action = {1.0};
        t.frames.push_back(f);
    }
    return t;
}

Trajectory line_x(const std::vector<double>& xs) {
    std::vector<std::array<double, 6>> poses;
    for (double x : xs) poses.push_back({x, 0, 0, 0, 0, 0});
    return make_traj(poses, {});
}

}  // namespace

TEST_CASE("worked example: x = [0,0,1,1,1]") {
    const auto labels = label_kinematic(line_x({0, 0, 1, 1, 1}));
    // Central second differences: [0, 1, 1, 0, 0] with zero boundaries and an
    // interior mean of 2/3, so only the two unit-acceleration frames fire.
    REQUIRE(labels.accel_norm.size() == 5);
    CHECK_THAT(labels.accel_norm[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(labels.accel_norm[1], Catch::Matchers::WithinAbs(1.0, 1e-15));
    CHECK_THAT(labels.accel_norm[2], Catch::Matchers::WithinAbs(1.0, 1e-15));
    CHECK_THAT(labels.accel_norm[3], Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(labels.mean_accel, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(labels.action_label == std::vector<int>{0, 1, 1, 0, 0});
}

TEST_CASE("labels are invariant to rigid translation of the path") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> pos(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::array<double, 6>> poses(12);
        for (auto& p : poses)
            for (double& c : p) c = pos(rng);
        const auto base = label_kinematic(make_traj(poses, {}));
        std::array<double, 6> shift{};
        for (int c = 0; c < 3; ++c) shift[c] = pos(rng) * 10;
        auto shifted = poses;
        for (auto& p : shifted)
            for (int c = 0; c < 3; ++c) p[c] += shift[c];
        const auto moved = label_kinematic(make_traj(shifted, {}));
        CHECK(moved.action_label == base.action_label);
        for (std::size_t i = 0; i < base.accel_norm.size(); ++i) {
            CHECK_THAT(moved.accel_norm[i],
                       Catch::Matchers::WithinAbs(base.accel_norm[i], 1e-9));
        }
    }
}

TEST_CASE("angles are unwrapped before differencing") {
    // Steady rotation crossing the +/- pi seam: unwrapped it is linear, so
    // every interior acceleration is ~0 and nothing fires.
    const double pi = 3.14159265358979323846;
    std::vector<std::array<double, 6>> poses;
    for (int i = 0; i < 8; ++i) {
        double angle = 2.9 + 0.2 * i;  // walks past pi
        if (angle > pi) angle -= 2 * pi;
        poses.push_back({0, 0, 0, angle, 0, 0});
    }
    const auto labels = label_kinematic(make_traj(poses, {}));
    // Without unwrapping, the seam frame would see a ~2*pi acceleration spike;
    // unwrapped, the walk is linear up to rounding noise.
    for (std::size_t i = 1; i + 1 < labels.accel_norm.size(); ++i) {
        CHECK_THAT(labels.accel_norm[i], Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    CHECK(labels.mean_accel < 1e-12);
}

TEST_CASE("a gripper flip labels the frame regardless of acceleration") {
    std::vector<std::array<double, 6>> poses(6, {0, 0, 0, 0, 0, 0});
    const auto labels = label_kinematic(make_traj(poses, {0, 0, 1, 1, 0, 0}));
    CHECK(labels.action_label == std::vector<int>{0, 0, 1, 0, 1, 0});
    CHECK(labels.gripper_change == std::vector<char>{0, 0, 1, 0, 1, 0});
}

TEST_CASE("short trajectories have no interior mean") {
    const auto two = label_kinematic(line_x({0, 5}));
    CHECK(two.mean_accel == 0.0);
    CHECK(two.action_label == std::vector<int>{0, 0});
}

TEST_CASE("condition is strict: accel equal to the mean does not fire") {
    // Symmetric triangle wave gives equal interior accelerations; with every
    // interior value equal to the mean, the strict comparison keeps all off.
    const auto labels = label_kinematic(line_x({0, 1, 0, 1, 0}));
    for (std::size_t i = 1; i + 1 < labels.accel_norm.size(); ++i) {
        CHECK_THAT(labels.accel_norm[i],
                   Catch::Matchers::WithinAbs(labels.mean_accel, 1e-15));
    }
    CHECK(labels.action_label == std::vector<int>(5, 0));
}
