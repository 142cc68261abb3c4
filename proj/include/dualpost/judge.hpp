#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpost/encoders.hpp"
#include "dualpost/error.hpp"
#include "dualpost/kb.hpp"

namespace dualpost {

enum class JudgeTemplate { ReasoningVLA, SpecialistVLA };

struct JudgeRequest {
    JudgeTemplate template_ = JudgeTemplate::ReasoningVLA;
    std::string trajectory_id;  // plumbing for backends; never rendered
    std::string task_description;
    std::optional<std::string> reasoning;  // required iff ReasoningVLA
    std::vector<std::string> frame_refs;   // already subsampled
    std::vector<Exemplar> exemplars;       // at most 2, retrieved few-shot context
};

struct JudgeVerdict {
    std::string thought;
    std::optional<int> reasoning_score;  // R, absent for specialist
    int action_score = 0;                // A
    int intention_score = 0;             // I
    std::optional<int> alignment_score;  // RA, absent for specialist
    std::optional<bool> success;
};

inline constexpr std::size_t kMaxJudgeFrames = 16;

// At most n evenly spaced references, endpoints included.
inline std::vector<std::string> subsample_refs(const std::vector<std::string>& refs,
                                               std::size_t n = kMaxJudgeFrames) {
    if (refs.size() <= n) return refs;
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(refs[i * (refs.size() - 1) / (n - 1)]);
    }
    return out;
}

namespace detail {

inline std::string render_exemplars(const std::vector<Exemplar>& exemplars) {
    if (exemplars.empty()) return "";
    std::ostringstream out;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        const Exemplar& e = exemplars[i];
        out << "Example " << (i + 1) << ": Task: " << e.task_text
            << " | Scores: R=" << e.r << " A=" << e.a << " I=" << e.i
            << " RA=" << e.ra << " | Note: " << e.expert_note << "\n";
    }
    return out.str();
}

inline std::string render_trajectory(const std::vector<std::string>& refs) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (i > 0) out << ", ";
        out << refs[i];
    }
    out << "]";
    return out.str();
}

}  // namespace detail

// Renders the evaluation prompt. The rendering is deterministic and pinned by
// golden files in the test suite; do not reword without regenerating them.
inline std::string build_prompt(const JudgeRequest& req) {
    const bool reasoning = req.template_ == JudgeTemplate::ReasoningVLA;
    if (reasoning && !req.reasoning.has_value()) {
        throw InvalidArgument("build_prompt: ReasoningVLA requires reasoning content");
    }
    if (!reasoning && req.reasoning.has_value()) {
        throw InvalidArgument("build_prompt: SpecialistVLA must not carry reasoning");
    }
    if (req.task_description.empty()) {
        throw InvalidArgument("build_prompt: task description is mandatory");
    }
    if (req.exemplars.size() > 2) {
        throw InvalidArgument("build_prompt: at most 2 exemplars");
    }
    std::ostringstream p;
    p << "System Prompt\n"
         "\n"
         "Character Introduction\n"
         "You are an engineer proficient in evaluating robotic operations.\n"
         "Your task is to perform a fine-grained, rigorous evaluation of a robot's "
         "behavior.\n"
         "\n"
         "Input Information\n"
         "You will receive the following components:\n"
         "1. Task Description - natural language description of the robot's assigned "
         "task.\n"
         "2. Motion Trajectory - a sequence of images representing the robot's "
         "movements over time.\n";
    if (reasoning) {
        p << "3. Reasoning Content - the robot's moment-by-moment reasoning "
             "corresponding to the trajectory.\n";
    }
    p << "\n"
         "Your Task\n"
         "Evaluate the robot's performance along "
      << (reasoning ? "four" : "two")
      << " dimensions, each scored on a 0-10 scale:\n"
         "\n"
         "| Dimension | Description |\n";
    if (reasoning) {
        p << "| Reasoning Score | Measures the correctness, logical consistency, and "
             "usefulness of the reasoning in guiding the task. |\n";
    }
    p << "| Action Score | Measures the coherence, precision, and efficiency of the "
         "action sequence in achieving the task. |\n"
         "| Intention Score | Evaluates whether the reasoning and actions "
         "constructively contribute toward solving the task. |\n";
    if (reasoning) {
        p << "| Reason-Act Alignment Score | Measures the consistency between "
             "reasoning and corresponding actions, ensuring logical and behavioral "
             "alignment. |\n";
    }
    p << "\n"
         "Scoring Guideline: 10 = excellent; 5 = acceptable; 0 = poor or missing "
         "evidence.\n"
         "\n"
         "Evaluation Requirements\n"
         "- Be objective, thorough, and specific - do not overlook details or "
         "fabricate facts.\n"
         "- If the task or data is ambiguous, acknowledge uncertainty explicitly.\n"
         "- Mention any critical failure modes (e.g., collisions, unsafe motions, "
         "too slow).\n"
         "- What you are seeing is the complete process of a robotic arm performing "
         "a task. A task must be fully executed to be considered successful; if "
         "opening a drawer, it must be fully opened, and if closing a drawer, it "
         "must be fully closed.\n"
         "- Please provide a rigorous evaluation.\n"
         "\n"
         "Examples\n"
      << detail::render_exemplars(req.exemplars)
      << "\n"
         "Output Format\n"
         "Output must be strictly formatted in JSON and include your internal "
         "reasoning under \"Thought\".\n"
         "\n"
         "{\n"
         "  \"Thought\": string,\n"
         "  \"Result\": {\n"
         "    \"Action\": int,\n"
         "    \"Intention\": int,\n";
    if (reasoning) {
        p << "    \"Reasoning\": int,\n"
             "    \"Alignment\": int,\n";
    }
    p << "    \"Success\": bool [optional]\n"
         "  }\n"
         "}\n"
         "\n"
         "User:\n"
         "Task: "
      << req.task_description;
    if (reasoning) {
        p << "; Reasoning: " << *req.reasoning;
    }
    p << "; Trajectory: " << detail::render_trajectory(req.frame_refs) << "\n";
    return p.str();
}

// A judge backend turns a rendered prompt (plus frame references) into the
// raw response text expected to contain the strict-JSON verdict body.
class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual std::string complete(const JudgeRequest& req, const std::string& prompt) = 0;
};

namespace detail {

inline int parse_score(const json& result, const char* key) {
    if (!result.contains(key)) {
        throw BackendError(std::string("verdict missing \"") + key + "\"");
    }
    if (!result.at(key).is_number_integer()) {
        throw BackendError(std::string("verdict field \"") + key + "\" is not an integer");
    }
    const int v = result.at(key).get<int>();
    if (v < 0 || v > 10) {
        throw BackendError(std::string("verdict field \"") + key + "\" out of range 0..10");
    }
    return v;
}

inline JudgeVerdict parse_verdict(const std::string& body, JudgeTemplate tmpl) {
    json j;
    try {
        j = json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("verdict is not valid JSON: ") + e.what());
    }
    if (!j.contains("Result") || !j.at("Result").is_object()) {
        throw BackendError("verdict missing \"Result\" object");
    }
    const json& result = j.at("Result");
    JudgeVerdict v;
    v.thought = j.value("Thought", std::string{});
    v.action_score = parse_score(result, "Action");
    v.intention_score = parse_score(result, "Intention");
    if (tmpl == JudgeTemplate::ReasoningVLA) {
        v.reasoning_score = parse_score(result, "Reasoning");
        v.alignment_score = parse_score(result, "Alignment");
    }
    if (result.contains("Success")) {
        if (!result.at("Success").is_boolean()) {
            throw BackendError("verdict field \"Success\" is not a boolean");
        }
        v.success = result.at("Success").get<bool>();
    }
    return v;
}

}  // namespace detail

inline constexpr int kJudgeAttempts = 3;

// Renders the prompt, calls the backend, parses and range-checks the strict
// JSON body. Malformed responses are retried up to 3 attempts total.
inline JudgeVerdict judge(const JudgeRequest& req, JudgeBackend& backend) {
    const std::string prompt = build_prompt(req);
    std::string last_error;
    for (int attempt = 0; attempt < kJudgeAttempts; ++attempt) {
        std::string body;
        try {
            body = backend.complete(req, prompt);
        } catch (const BackendError& e) {
            last_error = e.what();
            continue;
        }
        try {
            return detail::parse_verdict(body, req.template_);
        } catch (const BackendError& e) {
            last_error = e.what();
        }
    }
    throw BackendError("judge failed after " + std::to_string(kJudgeAttempts) +
                       " attempts: " + last_error);
}

// Deterministic offline judge: the verdict is a pure function of the
// trajectory id's hash. Same id, same verdict.
class MockJudgeBackend final : public JudgeBackend {
public:
    std::string complete(const JudgeRequest& req, const std::string&) override {
        const std::uint64_t h = detail::fnv1a(req.trajectory_id);
        json result = json::object();
        result["Action"] = static_cast<int>(h % 11);
        result["Intention"] = static_cast<int>((h / 11) % 11);
        if (req.template_ == JudgeTemplate::ReasoningVLA) {
            result["Reasoning"] = static_cast<int>((h / 121) % 11);
            result["Alignment"] = static_cast<int>((h / 1331) % 11);
        }
        result["Success"] = ((h >> 20) & 1) == 1;
        json j = json::object();
        j["Thought"] = "mock verdict for " + req.trajectory_id;
        j["Result"] = result;
        return j.dump();
    }
};

}  // namespace dualpost
