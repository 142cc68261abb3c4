#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dualpost/error.hpp"
#include "dualpost/policy.hpp"
#include "dualpost/scene.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {
namespace gridworld {

// Desk-scale pick-and-place corpus on a small grid. Robot trajectories carry
// per-frame phase reasoning and optimal planner actions; multimodal samples
// are attribute questions with a one-token answer and no action.

inline constexpr int kGridSize = 4;

// Shared vocabulary for robot and multimodal token sequences.
enum Token : int {
    TOK_PAD = 0,
    TOK_COORD0 = 1,  // .. TOK_COORD0 + kGridSize - 1
    TOK_GRIP_OPEN = TOK_COORD0 + kGridSize,
    TOK_GRIP_CLOSED,
    TOK_LEFT,
    TOK_RIGHT,
    TOK_UP,
    TOK_DOWN,
    TOK_GRASP,
    TOK_RELEASE,
    TOK_PH_APPROACH,
    TOK_PH_GRASP,
    TOK_PH_TRANSPORT,
    TOK_PH_RELEASE,
    TOK_MM_MARK,
    TOK_COLOR0,             // 4 colors
    TOK_SHAPE0 = TOK_COLOR0 + 4,  // 4 shapes
    TOK_Q_COLOR = TOK_COLOR0 + 8,
    TOK_Q_SHAPE,
    TOK_ANS_COLOR0,                    // 4 answers
    TOK_ANS_SHAPE0 = TOK_ANS_COLOR0 + 4,
    TOK_VOCAB_SIZE = TOK_ANS_SHAPE0 + 4,
};

inline constexpr int kActionCount = 6;  // LEFT..RELEASE
inline constexpr int kPromptLen = 7;    // [ax ay ox oy gx gy grip]
inline constexpr int kContextLen = kPromptLen;

inline const std::vector<std::string>& color_names() {
    static const std::vector<std::string> names = {"red", "green", "blue", "yellow"};
    return names;
}
inline const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> names = {"cube", "ball", "cup", "plate"};
    return names;
}

inline const std::string& phase_reasoning(int phase_token) {
    static const std::string texts[4] = {
        "approach the object", "grasp the object", "transport the object",
        "release at the goal"};
    return texts[phase_token - TOK_PH_APPROACH];
}

inline int phase_token_of(const std::string& reasoning) {
    for (int t = TOK_PH_APPROACH; t <= TOK_PH_RELEASE; ++t) {
        if (phase_reasoning(t) == reasoning) return t;
    }
    throw InvalidArgument("unknown reasoning phase: \"" + reasoning + "\"");
}

struct GridState {
    int ax = 0, ay = 0;  // agent
    int ox = 0, oy = 0;  // object (tracks the agent while held)
    int gx = 0, gy = 0;  // goal
    bool holding = false;
};

// Shortest-path planner: x axis first, then y; grasp when on the object,
// release when on the goal while holding.
inline int planner_action(const GridState& s) {
    const int tx = s.holding ? s.gx : s.ox;
    const int ty = s.holding ? s.gy : s.oy;
    if (s.ax < tx) return TOK_RIGHT;
    if (s.ax > tx) return TOK_LEFT;
    if (s.ay < ty) return TOK_UP;
    if (s.ay > ty) return TOK_DOWN;
    return s.holding ? TOK_RELEASE : TOK_GRASP;
}

inline int phase_of(const GridState& s) {
    if (!s.holding) {
        return (s.ax == s.ox && s.ay == s.oy) ? TOK_PH_GRASP : TOK_PH_APPROACH;
    }
    return (s.ax == s.gx && s.ay == s.gy) ? TOK_PH_RELEASE : TOK_PH_TRANSPORT;
}

inline void apply_action(GridState& s, int action) {
    switch (action) {
        case TOK_LEFT: s.ax -= 1; break;
        case TOK_RIGHT: s.ax += 1; break;
        case TOK_UP: s.ay += 1; break;
        case TOK_DOWN: s.ay -= 1; break;
        case TOK_GRASP: s.holding = true; break;
        case TOK_RELEASE: s.holding = false; break;
        default: throw InvalidArgument("apply_action: not an action token");
    }
    if (s.holding || action == TOK_RELEASE) {
        s.ox = s.ax;
        s.oy = s.ay;
    }
}

// One frame per planner step. Frame pose carries the agent position, the
// gripper field carries the commanded (post-action) gripper state so that
// kinematic gripper transitions land on the grasp/release frames themselves.
inline Trajectory make_robot_trajectory(const std::string& id, GridState start) {
    Trajectory traj;
    traj.id = id;
    traj.instruction = "move the object to the goal";
    traj.domain_tag = DomainTag::Robot;
    traj.meta["object_x"] = std::to_string(start.ox);
    traj.meta["object_y"] = std::to_string(start.oy);
    traj.meta["goal_x"] = std::to_string(start.gx);
    traj.meta["goal_y"] = std::to_string(start.gy);

    GridState s = start;
    int t = 0;
    while (true) {
        const int action = planner_action(s);
        Frame f;
        f.index = t;
        f.pose = {static_cast<double>(s.ax), static_cast<double>(s.ay), 0, 0, 0, 0};
        f.action = {static_cast<double>(action)};
        f.reasoning = phase_reasoning(phase_of(s));
        f.observation_ref = "synthetic://grid/" + id + "/" + std::to_string(t);
        apply_action(s, action);
        f.gripper = s.holding ? 1 : 0;
        traj.frames.push_back(std::move(f));
        ++t;
        if (action == TOK_RELEASE) break;
    }
    return traj;
}

inline Trajectory make_multimodal_sample(const std::string& id, int color, int shape,
                                         bool ask_color) {
    Trajectory traj;
    traj.id = id;
    traj.instruction = std::string("what ") + (ask_color ? "color" : "shape") +
                       " is the object?";
    traj.domain_tag = DomainTag::Multimodal;
    traj.meta["color"] = color_names()[color];
    traj.meta["shape"] = shape_names()[shape];
    traj.meta["question"] = ask_color ? "color" : "shape";
    Frame f;
    f.index = 0;
    f.reasoning = ask_color ? color_names()[color] : shape_names()[shape];
    f.observation_ref = "synthetic://scene/" + id;
    traj.frames.push_back(std::move(f));
    return traj;
}

// n Robot plus n Multimodal trajectories, deterministic in the seed.
inline Dataset make_synthetic_task(std::uint64_t seed, int n) {
    if (n < 1) throw InvalidArgument("make_synthetic_task: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coord(0, kGridSize - 1);
    std::uniform_int_distribution<int> attr(0, 3);
    std::uniform_int_distribution<int> coin(0, 1);
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        GridState s;
        s.ax = coord(rng); s.ay = coord(rng);
        s.ox = coord(rng); s.oy = coord(rng);
        s.gx = coord(rng); s.gy = coord(rng);
        ds.trajectories.push_back(
            make_robot_trajectory("robot-" + std::to_string(i), s));
    }
    for (int i = 0; i < n; ++i) {
        ds.trajectories.push_back(make_multimodal_sample(
            "mm-" + std::to_string(i), attr(rng), attr(rng), coin(rng) == 0));
    }
    return ds;
}

// Replays a robot trajectory's stored actions through the dynamics; true iff
// the object ends on the goal, released.
inline bool replay_reaches_goal(const Trajectory& traj) {
    if (traj.domain_tag != DomainTag::Robot || traj.frames.empty()) return false;
    GridState s;
    s.ax = static_cast<int>(traj.frames.front().pose[0]);
    s.ay = static_cast<int>(traj.frames.front().pose[1]);
    s.ox = std::stoi(traj.meta.at("object_x"));
    s.oy = std::stoi(traj.meta.at("object_y"));
    s.gx = std::stoi(traj.meta.at("goal_x"));
    s.gy = std::stoi(traj.meta.at("goal_y"));
    for (const Frame& f : traj.frames) {
        if (f.action.size() != 1) return false;
        apply_action(s, static_cast<int>(f.action[0]));
    }
    return !s.holding && s.ox == s.gx && s.oy == s.gy;
}

// Generator-side scene annotation: an event boundary wherever the reasoning
// phase changes (episode start included). Plays the role of the manually
// annotated labels standing in for a learned boundary detector.
inline SceneLabels synthetic_scene_labels(const Trajectory& traj) {
    SceneLabels out;
    out.detector_id = "synthetic-phase";
    for (std::size_t t = 0; t < traj.frames.size(); ++t) {
        const bool boundary =
            t == 0 || traj.frames[t].reasoning != traj.frames[t - 1].reasoning;
        out.scene_label.push_back(boundary ? 1 : 0);
        out.scores.push_back(boundary ? 1.0 : 0.0);
    }
    return out;
}

// --- tokenization ---------------------------------------------------------

inline int coord_token(int c) { return TOK_COORD0 + c; }

// One sequence per robot frame: 7 prompt tokens (agent, object, goal, gripper
// state before the action), an optional phase token when the frame retains
// reasoning, then the action token. With context length kPromptLen the phase
// token displaces the agent x-coordinate from the action position's context.
inline std::vector<TokenSequence> robot_frame_sequences(const Trajectory& traj,
                                                        bool include_reasoning) {
    std::vector<TokenSequence> seqs;
    int ox = std::stoi(traj.meta.at("object_x"));
    int oy = std::stoi(traj.meta.at("object_y"));
    const int gx = std::stoi(traj.meta.at("goal_x"));
    const int gy = std::stoi(traj.meta.at("goal_y"));
    int grip_before = 0;
    for (const Frame& f : traj.frames) {
        const int ax = static_cast<int>(f.pose[0]);
        const int ay = static_cast<int>(f.pose[1]);
        if (grip_before == 1) { ox = ax; oy = ay; }  // carried by the agent
        TokenSequence seq;
        seq.tokens = {coord_token(ax), coord_token(ay), coord_token(ox),
                      coord_token(oy), coord_token(gx), coord_token(gy),
                      grip_before ? TOK_GRIP_CLOSED : TOK_GRIP_OPEN};
        seq.kinds.assign(seq.tokens.size(), TokenKind::Prompt);
        if (include_reasoning && !f.reasoning.empty()) {
            seq.tokens.push_back(phase_token_of(f.reasoning));
            seq.kinds.push_back(TokenKind::Reasoning);
        }
        seq.tokens.push_back(static_cast<int>(f.action.at(0)));
        seq.kinds.push_back(TokenKind::Action);
        seqs.push_back(std::move(seq));
        grip_before = f.gripper;
    }
    return seqs;
}

inline TokenSequence multimodal_sequence(const Trajectory& traj) {
    int color = 0, shape = 0;
    for (int i = 0; i < 4; ++i) {
        if (color_names()[i] == traj.meta.at("color")) color = i;
        if (shape_names()[i] == traj.meta.at("shape")) shape = i;
    }
    const bool ask_color = traj.meta.at("question") == "color";
    TokenSequence seq;
    seq.tokens = {TOK_MM_MARK, TOK_COLOR0 + color, TOK_SHAPE0 + shape,
                  ask_color ? TOK_Q_COLOR : TOK_Q_SHAPE};
    seq.kinds.assign(seq.tokens.size(), TokenKind::Prompt);
    seq.tokens.push_back(ask_color ? TOK_ANS_COLOR0 + color : TOK_ANS_SHAPE0 + shape);
    seq.kinds.push_back(TokenKind::Reasoning);
    return seq;
}

}  // namespace gridworld
}  // namespace dualpost
