#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dualpost/error.hpp"

namespace dualpost {

using json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "dualpost/1";

enum class DomainTag { Robot, Multimodal };

inline std::string to_string(DomainTag tag) {
    return tag == DomainTag::Robot ? "Robot" : "Multimodal";
}

// One step of a demonstration. Observations are stored by reference only;
// nothing in this module ever decodes an image.
struct Frame {
    int index = 0;
    std::array<double, 6> pose{};  // [x, y, z, thx, thy, thz]
    int gripper = 0;               // {0, 1}
    std::vector<double> action;    // empty for Multimodal samples
    std::string reasoning;
    std::string observation_ref;
    bool reasoning_masked = false;  // set by the pruner, round-trips
    json extra = json::object();    // unknown fields, preserved verbatim

    bool operator==(const Frame&) const = default;
};

struct Trajectory {
    std::string id;
    std::string instruction;
    DomainTag domain_tag = DomainTag::Robot;
    std::vector<Frame> frames;
    std::map<std::string, std::string> meta;
    json extra = json::object();

    bool operator==(const Trajectory&) const = default;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::string schema_version = kSchemaVersion;

    bool operator==(const Dataset&) const = default;
};

namespace detail {

inline void require(bool ok, std::size_t line, const std::string& field,
                    const std::string& why) {
    if (!ok) {
        throw SchemaError("line " + std::to_string(line) + ": field \"" + field +
                          "\": " + why);
    }
}

}  // namespace detail

// Whitespace tokenization; the only token notion used for statistics.
inline std::size_t count_tokens(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    std::size_t n = 0;
    while (in >> tok) ++n;
    return n;
}

inline void validate_trajectory(const Trajectory& traj, std::size_t line = 0) {
    using detail::require;
    require(!traj.id.empty(), line, "id", "must be non-empty");
    require(!traj.frames.empty(), line, "frames", "must be non-empty");
    if (traj.domain_tag == DomainTag::Robot) {
        require(!traj.instruction.empty(), line, "instruction",
                "must be non-empty for Robot trajectories");
    }
    for (std::size_t t = 0; t < traj.frames.size(); ++t) {
        const Frame& f = traj.frames[t];
        require(f.index == static_cast<int>(t), line, "index",
                "frame indices must increase strictly from 0");
        for (double v : f.pose) {
            require(std::isfinite(v), line, "pose", "entries must be finite");
        }
        require(f.gripper == 0 || f.gripper == 1, line, "gripper",
                "must be 0 or 1");
        for (double v : f.action) {
            require(std::isfinite(v), line, "action", "entries must be finite");
        }
        if (traj.domain_tag == DomainTag::Multimodal) {
            require(f.action.empty(), line, "action",
                    "must be empty for Multimodal trajectories");
        }
    }
}

inline json frame_to_json(const Frame& f) {
    json j = json::object();
    j["index"] = f.index;
    j["pose"] = f.pose;
    j["gripper"] = f.gripper;
    j["action"] = f.action;
    j["reasoning"] = f.reasoning;
    j["observation_ref"] = f.observation_ref;
    if (f.reasoning_masked) j["reasoning_masked"] = true;
    for (const auto& [k, v] : f.extra.items()) j[k] = v;
    return j;
}

inline json trajectory_to_json(const Trajectory& traj) {
    json j = json::object();
    j["schema_version"] = kSchemaVersion;
    j["id"] = traj.id;
    j["instruction"] = traj.instruction;
    j["domain_tag"] = to_string(traj.domain_tag);
    json frames = json::array();
    for (const Frame& f : traj.frames) frames.push_back(frame_to_json(f));
    j["frames"] = std::move(frames);
    j["meta"] = traj.meta;  // std::map: keys already byte-stable sorted
    for (const auto& [k, v] : traj.extra.items()) j[k] = v;
    return j;
}

namespace detail {

inline Frame frame_from_json(const json& j, std::size_t line) {
    require(j.is_object(), line, "frames", "each frame must be an object");
    Frame f;
    for (const auto& [key, value] : j.items()) {
        if (key == "index") {
            require(value.is_number_integer(), line, "index", "must be an integer");
            f.index = value.get<int>();
        } else if (key == "pose") {
            require(value.is_array() && value.size() == 6, line, "pose",
                    "must have exactly 6 entries");
            for (std::size_t i = 0; i < 6; ++i) {
                require(value[i].is_number(), line, "pose", "entries must be numbers");
                f.pose[i] = value[i].get<double>();
            }
        } else if (key == "gripper") {
            require(value.is_number_integer(), line, "gripper", "must be 0 or 1");
            f.gripper = value.get<int>();
        } else if (key == "action") {
            require(value.is_array(), line, "action", "must be an array");
            for (const auto& a : value) {
                require(a.is_number(), line, "action", "entries must be numbers");
                f.action.push_back(a.get<double>());
            }
        } else if (key == "reasoning") {
            require(value.is_string(), line, "reasoning", "must be a string");
            f.reasoning = value.get<std::string>();
        } else if (key == "observation_ref") {
            require(value.is_string(), line, "observation_ref", "must be a string");
            f.observation_ref = value.get<std::string>();
        } else if (key == "reasoning_masked") {
            require(value.is_boolean(), line, "reasoning_masked", "must be a boolean");
            f.reasoning_masked = value.get<bool>();
        } else {
            f.extra[key] = value;
        }
    }
    require(j.contains("index") && j.contains("pose") && j.contains("gripper") &&
                j.contains("action") && j.contains("reasoning") &&
                j.contains("observation_ref"),
            line, "frames", "frame is missing a required field");
    return f;
}

inline Trajectory trajectory_from_json(const json& j, std::size_t line) {
    require(j.is_object(), line, "record", "must be an object");
    Trajectory traj;
    for (const auto& [key, value] : j.items()) {
        if (key == "schema_version") {
            require(value.is_string() && value.get<std::string>() == kSchemaVersion,
                    line, "schema_version",
                    std::string("must be \"") + kSchemaVersion + "\"");
        } else if (key == "id") {
            require(value.is_string(), line, "id", "must be a string");
            traj.id = value.get<std::string>();
        } else if (key == "instruction") {
            require(value.is_string(), line, "instruction", "must be a string");
            traj.instruction = value.get<std::string>();
        } else if (key == "domain_tag") {
            require(value.is_string(), line, "domain_tag", "must be a string");
            const std::string tag = value.get<std::string>();
            require(tag == "Robot" || tag == "Multimodal", line, "domain_tag",
                    "must be Robot or Multimodal");
            traj.domain_tag = tag == "Robot" ? DomainTag::Robot : DomainTag::Multimodal;
        } else if (key == "frames") {
            require(value.is_array(), line, "frames", "must be an array");
            for (const auto& fj : value) {
                traj.frames.push_back(frame_from_json(fj, line));
            }
        } else if (key == "meta") {
            require(value.is_object(), line, "meta", "must be an object");
            for (const auto& [mk, mv] : value.items()) {
                require(mv.is_string(), line, "meta", "values must be strings");
                traj.meta[mk] = mv.get<std::string>();
            }
        } else {
            traj.extra[key] = value;
        }
    }
    require(j.contains("id") && j.contains("domain_tag") && j.contains("frames"),
            line, "record", "missing a required field");
    validate_trajectory(traj, line);
    return traj;
}

}  // namespace detail

// Line-delimited records, one trajectory per line. Rejects the whole file on
// the first malformed record.
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    Dataset ds;
    std::unordered_set<std::string> seen_ids;
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
                              ": invalid record: " + e.what());
        }
        Trajectory traj = detail::trajectory_from_json(j, lineno);
        detail::require(seen_ids.insert(traj.id).second, lineno, "id",
                        "duplicate trajectory id \"" + traj.id + "\"");
        ds.trajectories.push_back(std::move(traj));
    }
    if (in.bad()) throw IoError("read failure on " + path);
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + path);
    for (const Trajectory& traj : ds.trajectories) {
        validate_trajectory(traj);
        out << trajectory_to_json(traj).dump() << '\n';
    }
    if (!out) throw IoError("write failure on " + path);
}

struct StatsReport {
    std::size_t n_trajectories = 0;
    std::size_t n_frames = 0;
    std::size_t reasoning_tokens = 0;
    std::size_t distinct_reasoning = 0;
    double entropy_bits = 0.0;
    std::optional<double> retention_ratio;  // present when masked flags exist
};

// Distinct-string entropy over non-empty reasoning, in bits.
inline double reasoning_entropy_bits(
    const std::unordered_map<std::string, std::size_t>& counts) {
    std::size_t total = 0;
    for (const auto& [s, c] : counts) total += c;
    if (total == 0) return 0.0;
    double h = 0.0;
    for (const auto& [s, c] : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

inline StatsReport dataset_stats(const Dataset& ds) {
    StatsReport r;
    r.n_trajectories = ds.trajectories.size();
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t retained_robot = 0;
    std::size_t masked = 0;
    for (const Trajectory& traj : ds.trajectories) {
        for (const Frame& f : traj.frames) {
            ++r.n_frames;
            r.reasoning_tokens += count_tokens(f.reasoning);
            if (!f.reasoning.empty()) ++counts[f.reasoning];
            if (traj.domain_tag == DomainTag::Robot) {
                if (f.reasoning_masked) {
                    ++masked;
                } else if (!f.reasoning.empty()) {
                    ++retained_robot;
                }
            }
        }
    }
    r.distinct_reasoning = counts.size();
    r.entropy_bits = reasoning_entropy_bits(counts);
    if (masked > 0) {
        r.retention_ratio = static_cast<double>(retained_robot) /
                            static_cast<double>(retained_robot + masked);
    }
    return r;
}

inline json stats_to_json(const StatsReport& r) {
    json j = json::object();
    j["n_trajectories"] = r.n_trajectories;
    j["n_frames"] = r.n_frames;
    j["reasoning_tokens"] = r.reasoning_tokens;
    j["distinct_reasoning"] = r.distinct_reasoning;
    j["entropy_bits"] = r.entropy_bits;
    if (r.retention_ratio) j["retention_ratio"] = *r.retention_ratio;
    return j;
}

}  // namespace dualpost
