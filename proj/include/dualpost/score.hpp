#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dualpost/error.hpp"
#include "dualpost/judge.hpp"
#include "dualpost/kb.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

enum class PolicyKind { Reasoning, Specialist };

// Per-trajectory combined score. Judge scores are normalized to [0,1] before
// combining; the binary simulation outcome gates everything.
struct ScoreCard {
    std::string trajectory_id;
    double r = 0.0, a = 0.0, i = 0.0, ra = 0.0;
    int b = 0;
    double score = 0.0;
    PolicyKind policy_kind = PolicyKind::Reasoning;
};

// Reasoning policies: ((r + a*i)/2) * ra * b.
// Specialist policies: a * i * ra * b with ra fixed to 1.
inline ScoreCard score_trajectory(const JudgeVerdict& verdict, int b, PolicyKind kind,
                                  const std::string& trajectory_id = {}) {
    if (b != 0 && b != 1) throw InvalidArgument("score_trajectory: b must be 0 or 1");
    ScoreCard card;
    card.trajectory_id = trajectory_id;
    card.policy_kind = kind;
    card.a = verdict.action_score / 10.0;
    card.i = verdict.intention_score / 10.0;
    card.b = b;
    if (kind == PolicyKind::Reasoning) {
        if (!verdict.reasoning_score || !verdict.alignment_score) {
            throw InvalidArgument("score_trajectory: Reasoning kind requires R and RA");
        }
        card.r = *verdict.reasoning_score / 10.0;
        card.ra = *verdict.alignment_score / 10.0;
        card.score = ((card.r + card.a * card.i) / 2.0) * card.ra * card.b;
    } else {
        card.ra = 1.0;
        card.score = card.a * card.i * card.ra * card.b;
    }
    return card;
}

struct EvalReport {
    std::vector<ScoreCard> cards;
    std::size_t n_errors = 0;  // judge failures, excluded from means
    // Means x100 over successfully judged trajectories; absent when none.
    std::optional<double> mean_r, mean_a, mean_i, mean_ra;
    std::optional<double> mean_score;
    std::optional<double> sim_success_rate;
};

inline void finalize_report(EvalReport& rep) {
    if (rep.cards.empty()) return;
    double r = 0, a = 0, i = 0, ra = 0, s = 0, b = 0;
    for (const ScoreCard& c : rep.cards) {
        r += c.r; a += c.a; i += c.i; ra += c.ra; s += c.score; b += c.b;
    }
    const double n = static_cast<double>(rep.cards.size());
    rep.mean_r = 100.0 * r / n;
    rep.mean_a = 100.0 * a / n;
    rep.mean_i = 100.0 * i / n;
    rep.mean_ra = 100.0 * ra / n;
    rep.mean_score = 100.0 * s / n;
    rep.sim_success_rate = 100.0 * b / n;
}

// Outcomes file: line-delimited {"trajectory_id", "success"}.
inline std::unordered_map<std::string, bool> load_outcomes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open outcomes file: " + path);
    std::unordered_map<std::string, bool> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("outcomes line " + std::to_string(lineno) + ": " + e.what());
        }
        out[j.at("trajectory_id").get<std::string>()] = j.at("success").get<bool>();
    }
    return out;
}

// Full pipeline per trajectory: dual retrieval for few-shot context, judge
// call, score. Judge failures are counted and excluded from the means.
inline EvalReport evaluate_run(const Dataset& ds,
                               const std::unordered_map<std::string, bool>& outcomes,
                               const KnowledgeBase& kb, JudgeBackend& backend,
                               PolicyKind kind, const TextEncoder& text_enc,
                               const ImageEncoder& image_enc, int jobs = 1) {
    for (const Trajectory& traj : ds.trajectories) {
        if (!outcomes.count(traj.id)) {
            throw InvalidArgument("no outcome recorded for trajectory \"" + traj.id + "\"");
        }
    }
    std::vector<std::optional<ScoreCard>> slots(ds.trajectories.size());
    std::atomic<std::size_t> errors{0};
    std::atomic<std::size_t> next{0};

    auto work = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= ds.trajectories.size()) return;
            const Trajectory& traj = ds.trajectories[idx];
            try {
                std::vector<std::string> refs;
                for (const Frame& f : traj.frames) refs.push_back(f.observation_ref);
                const RetrievalHit hit =
                    retrieve(kb, traj.instruction, refs, text_enc, image_enc);
                JudgeRequest req;
                req.template_ = kind == PolicyKind::Reasoning
                                    ? JudgeTemplate::ReasoningVLA
                                    : JudgeTemplate::SpecialistVLA;
                req.trajectory_id = traj.id;
                req.task_description = traj.instruction;
                if (kind == PolicyKind::Reasoning) {
                    std::string reasoning;
                    for (const Frame& f : traj.frames) {
                        if (f.reasoning.empty()) continue;
                        if (!reasoning.empty()) reasoning += " | ";
                        reasoning += f.reasoning;
                    }
                    req.reasoning = reasoning;
                }
                req.frame_refs = subsample_refs(refs);
                req.exemplars = {*hit.text_hit};
                if (hit.scene_hit->id != hit.text_hit->id) {
                    req.exemplars.push_back(*hit.scene_hit);
                }
                const JudgeVerdict verdict = judge(req, backend);
                slots[idx] = score_trajectory(verdict, outcomes.at(traj.id) ? 1 : 0,
                                              kind, traj.id);
            } catch (const BackendError&) {
                errors.fetch_add(1);
            }
        }
    };

    if (jobs <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    EvalReport rep;
    for (auto& slot : slots) {
        if (slot) rep.cards.push_back(std::move(*slot));
    }
    rep.n_errors = errors.load();
    finalize_report(rep);
    return rep;
}

inline json report_json(const EvalReport& rep) {
    json j = json::object();
    j["n_trajectories"] = rep.cards.size();
    j["n_errors"] = rep.n_errors;
    auto put = [&j](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("mean_r", rep.mean_r);
    put("mean_a", rep.mean_a);
    put("mean_i", rep.mean_i);
    put("mean_ra", rep.mean_ra);
    put("sim_success_rate", rep.sim_success_rate);
    put("mean_score", rep.mean_score);
    json cards = json::array();
    for (const ScoreCard& c : rep.cards) {
        json cj = json::object();
        cj["trajectory_id"] = c.trajectory_id;
        cj["r"] = c.r;
        cj["a"] = c.a;
        cj["i"] = c.i;
        cj["ra"] = c.ra;
        cj["b"] = c.b;
        cj["score"] = c.score;
        cards.push_back(std::move(cj));
    }
    j["cards"] = std::move(cards);
    return j;
}

// Plain-text table with the published column layout.
inline std::string report_table(const EvalReport& rep) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "R      A      I      RA     Sim.   VLA Score\n";
    auto cell = [&out](const std::optional<double>& v) {
        if (v) out << std::setw(6) << std::left << *v << " ";
        else out << "-      ";
    };
    cell(rep.mean_r);
    cell(rep.mean_a);
    cell(rep.mean_i);
    cell(rep.mean_ra);
    cell(rep.sim_success_rate);
    cell(rep.mean_score);
    out << "\n";
    return out.str();
}

}  // namespace dualpost
