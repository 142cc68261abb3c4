#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dualpost/encoders.hpp"
#include "dualpost/error.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

// Expert-refined scored trajectory used as judge few-shot context.
struct Exemplar {
    std::string id;
    std::string task_text;
    std::vector<double> text_embedding;
    std::vector<double> image_embedding;  // mean-pooled over frames
    int r = 0, a = 0, i = 0, ra = 0;      // refined scores, 0..10
    std::string expert_note;
};

struct KnowledgeBase {
    std::vector<Exemplar> exemplars;
    int text_dim = 0;
    int image_dim = 0;
};

namespace detail {

inline void check_score_range(int v, const std::string& what) {
    if (v < 0 || v > 10) {
        throw SchemaError(what + " out of range 0..10: " + std::to_string(v));
    }
}

}  // namespace detail

inline void validate_kb(const KnowledgeBase& kb) {
    std::unordered_set<std::string> ids;
    for (const Exemplar& e : kb.exemplars) {
        if (!ids.insert(e.id).second) throw SchemaError("duplicate exemplar id: " + e.id);
        if (static_cast<int>(e.text_embedding.size()) != kb.text_dim ||
            static_cast<int>(e.image_embedding.size()) != kb.image_dim) {
            throw SchemaError("exemplar \"" + e.id + "\" has mismatched embedding dims");
        }
        detail::check_score_range(e.r, "R");
        detail::check_score_range(e.a, "A");
        detail::check_score_range(e.i, "I");
        detail::check_score_range(e.ra, "RA");
    }
}

// Mean of per-frame image embeddings; order-robust by construction.
inline std::vector<double> trajectory_image_embedding(
    const std::vector<std::string>& frame_refs, const ImageEncoder& enc) {
    if (frame_refs.empty()) throw InvalidArgument("no frame refs to embed");
    std::vector<double> mean(enc.dim(), 0.0);
    for (const std::string& ref : frame_refs) {
        const auto v = enc.embed_image(ref);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    for (double& v : mean) v /= static_cast<double>(frame_refs.size());
    return mean;
}

struct RetrievalHit {
    const Exemplar* text_hit = nullptr;
    const Exemplar* scene_hit = nullptr;
    double text_cosine = 0.0;
    double scene_cosine = 0.0;
};

// Exact top-1 dual retrieval: argmax cosine over all exemplars, once against
// the task-text embedding and once against the mean frame embedding. Ties go
// to the lexicographically smallest id.
inline RetrievalHit retrieve(const KnowledgeBase& kb, const std::string& task_text,
                             const std::vector<std::string>& frame_refs,
                             const TextEncoder& text_enc, const ImageEncoder& image_enc) {
    if (kb.exemplars.empty()) throw InvalidArgument("retrieve: empty knowledge base");
    const auto tq = text_enc.embed_text(task_text);
    const auto iq = trajectory_image_embedding(frame_refs, image_enc);
    RetrievalHit hit;
    auto better = [](double cand, const std::string& cand_id, double best,
                     const Exemplar* best_ex) {
        if (best_ex == nullptr) return true;
        if (cand != best) return cand > best;
        return cand_id < best_ex->id;
    };
    for (const Exemplar& e : kb.exemplars) {
        const double tc = cosine_similarity(e.text_embedding, tq);
        if (better(tc, e.id, hit.text_cosine, hit.text_hit)) {
            hit.text_hit = &e;
            hit.text_cosine = tc;
        }
        const double sc = cosine_similarity(e.image_embedding, iq);
        if (better(sc, e.id, hit.scene_cosine, hit.scene_hit)) {
            hit.scene_hit = &e;
            hit.scene_cosine = sc;
        }
    }
    return hit;
}

// --- persistence -----------------------------------------------------------

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open KB file: " + path);
    for (const Exemplar& e : kb.exemplars) {
        json j = json::object();
        j["id"] = e.id;
        j["task_text"] = e.task_text;
        j["text_embedding"] = e.text_embedding;
        j["image_embedding"] = e.image_embedding;
        j["scores"] = {{"R", e.r}, {"A", e.a}, {"I", e.i}, {"RA", e.ra}};
        j["expert_note"] = e.expert_note;
        out << j.dump() << '\n';
    }
}

inline KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open KB file: " + path);
    KnowledgeBase kb;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("KB line " + std::to_string(lineno) + ": " + e.what());
        }
        Exemplar e;
        e.id = j.at("id").get<std::string>();
        e.task_text = j.at("task_text").get<std::string>();
        e.text_embedding = j.at("text_embedding").get<std::vector<double>>();
        e.image_embedding = j.at("image_embedding").get<std::vector<double>>();
        e.r = j.at("scores").at("R").get<int>();
        e.a = j.at("scores").at("A").get<int>();
        e.i = j.at("scores").at("I").get<int>();
        e.ra = j.at("scores").at("RA").get<int>();
        e.expert_note = j.value("expert_note", std::string{});
        kb.exemplars.push_back(std::move(e));
    }
    if (!kb.exemplars.empty()) {
        kb.text_dim = static_cast<int>(kb.exemplars.front().text_embedding.size());
        kb.image_dim = static_cast<int>(kb.exemplars.front().image_embedding.size());
    }
    validate_kb(kb);
    return kb;
}

// --- building --------------------------------------------------------------

struct RawScores {
    int r = 0, a = 0, i = 0, ra = 0;
};

// Verdicts file: line-delimited {"trajectory_id", "R", "A", "I", "RA"}.
inline std::unordered_map<std::string, RawScores> load_verdict_scores(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open verdicts file: " + path);
    std::unordered_map<std::string, RawScores> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("verdicts line " + std::to_string(lineno) + ": " + e.what());
        }
        RawScores s;
        s.r = j.value("R", 0);
        s.a = j.at("A").get<int>();
        s.i = j.at("I").get<int>();
        s.ra = j.value("RA", 0);
        out[j.at("trajectory_id").get<std::string>()] = s;
    }
    return out;
}

struct Refinement {
    std::map<std::string, int> overrides;  // subset of {"R","A","I","RA"}
    std::string note;
};

// Refinement file: line-delimited {"id", "overrides": {...}, "note"}.
inline std::unordered_map<std::string, Refinement> load_refinements(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open refinements file: " + path);
    std::unordered_map<std::string, Refinement> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Refinement r;
        if (j.contains("overrides")) {
            for (const auto& [k, v] : j.at("overrides").items()) {
                if (k != "R" && k != "A" && k != "I" && k != "RA") {
                    throw SchemaError("refinement override key must be R/A/I/RA, got " + k);
                }
                r.overrides[k] = v.get<int>();
            }
        }
        r.note = j.value("note", std::string{});
        out[j.at("id").get<std::string>()] = r;
    }
    return out;
}

// One exemplar per trajectory: raw verdict scores with expert overrides
// applied, embeddings computed with the given encoders.
inline KnowledgeBase kb_build(const Dataset& ds, const std::string& verdicts_path,
                              const std::string& refinements_path,
                              const TextEncoder& text_enc,
                              const ImageEncoder& image_enc) {
    const auto verdicts = load_verdict_scores(verdicts_path);
    std::unordered_map<std::string, Refinement> refinements;
    if (!refinements_path.empty()) refinements = load_refinements(refinements_path);

    std::unordered_set<std::string> known;
    for (const Trajectory& traj : ds.trajectories) known.insert(traj.id);
    for (const auto& [id, unused] : refinements) {
        if (!known.count(id)) throw SchemaError("refinement references unknown id: " + id);
    }

    KnowledgeBase kb;
    kb.text_dim = text_enc.dim();
    kb.image_dim = image_enc.dim();
    for (const Trajectory& traj : ds.trajectories) {
        const auto v = verdicts.find(traj.id);
        if (v == verdicts.end()) {
            throw SchemaError("verdicts file does not cover trajectory \"" + traj.id + "\"");
        }
        Exemplar e;
        e.id = traj.id;
        e.task_text = traj.instruction;
        e.r = v->second.r;
        e.a = v->second.a;
        e.i = v->second.i;
        e.ra = v->second.ra;
        if (const auto ref = refinements.find(traj.id); ref != refinements.end()) {
            for (const auto& [k, val] : ref->second.overrides) {
                if (k == "R") e.r = val;
                else if (k == "A") e.a = val;
                else if (k == "I") e.i = val;
                else e.ra = val;
            }
            e.expert_note = ref->second.note;
        }
        e.text_embedding = text_enc.embed_text(e.task_text);
        std::vector<std::string> refs;
        for (const Frame& f : traj.frames) refs.push_back(f.observation_ref);
        e.image_embedding = trajectory_image_embedding(refs, image_enc);
        kb.exemplars.push_back(std::move(e));
    }
    validate_kb(kb);
    return kb;
}

}  // namespace dualpost
