// dualpost: dataset pruning, desk-scale distillation, and judge-based
// evaluation for reasoning robot policies. One binary, many subcommands;
// progress goes to stderr, artifacts go to disk.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualpost/gradcheck.hpp"
#include "dualpost/gridworld.hpp"
#include "dualpost/judge.hpp"
#include "dualpost/kb.hpp"
#include "dualpost/prune.hpp"
#include "dualpost/remote_backends.hpp"
#include "dualpost/score.hpp"
#include "dualpost/train.hpp"
#include "dualpost/trajectory.hpp"

namespace fs = std::filesystem;
using dualpost::json;

namespace {

// Shared config file: any subset of the keys below; command-line flags win.
struct AppConfig {
    json raw = json::object();

    static AppConfig load(const std::string& path) {
        AppConfig cfg;
        if (path.empty()) return cfg;
        std::ifstream in(path);
        if (!in) throw dualpost::IoError("cannot open config file: " + path);
        in >> cfg.raw;
        return cfg;
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        return raw.contains(key) ? raw.at(key).get<T>() : fallback;
    }
};

std::string make_run_dir(const std::string& base, std::uint64_t seed) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
    const fs::path dir = fs::path(base) / (std::string(stamp) + "-seed" +
                                           std::to_string(seed));
    fs::create_directories(dir);
    return dir.string();
}

int cmd_stats(const std::string& dataset_path) {
    const auto ds = dualpost::load_dataset(dataset_path);
    std::cout << dualpost::stats_to_json(dualpost::dataset_stats(ds)).dump(2) << "\n";
    return 0;
}

int cmd_label_kinematic(const std::string& dataset_path, const std::string& out_path) {
    const auto ds = dualpost::load_dataset(dataset_path);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw dualpost::IoError("cannot open output file: " + out_path);
        out = &file;
    }
    for (const auto& traj : ds.trajectories) {
        const auto labels = dualpost::label_kinematic(traj);
        json j = json::object();
        j["trajectory_id"] = traj.id;
        j["labels"] = labels.action_label;
        j["accel_norm"] = labels.accel_norm;
        j["mean_accel"] = labels.mean_accel;
        *out << j.dump() << "\n";
    }
    return 0;
}

int cmd_label_scene(const std::string& dataset_path, const std::string& out_path,
                    int window, double threshold) {
    const auto ds = dualpost::load_dataset(dataset_path);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw dualpost::IoError("cannot open output file: " + out_path);
        out = &file;
    }
    for (const auto& traj : ds.trajectories) {
        const auto labels = dualpost::detect_boundaries(
            dualpost::pose_gripper_features(traj), window, threshold);
        json j = json::object();
        j["trajectory_id"] = traj.id;
        j["labels"] = labels.scene_label;
        j["scores"] = labels.scores;
        *out << j.dump() << "\n";
    }
    return 0;
}

int cmd_prune(const std::string& dataset_path, const std::string& out_path,
              const std::string& report_path, const std::string& scene_labels,
              int window, double threshold) {
    const auto ds = dualpost::load_dataset(dataset_path);
    dualpost::PruneOptions opts;
    if (!scene_labels.empty()) {
        opts.source = dualpost::SceneSource::Precomputed;
        opts.scene_label_path = scene_labels;
    }
    opts.window = window;
    opts.threshold = threshold;
    const auto pruned = dualpost::prune_dataset(ds, opts, report_path);
    dualpost::save_dataset(pruned, out_path);
    std::cerr << "pruned " << ds.trajectories.size() << " trajectories -> "
              << out_path << "\n";
    return 0;
}

int cmd_make_task(std::uint64_t seed, int n, const std::string& out_path,
                  const std::string& scene_labels_path) {
    const auto ds = dualpost::gridworld::make_synthetic_task(seed, n);
    dualpost::save_dataset(ds, out_path);
    if (!scene_labels_path.empty()) {
        std::ofstream out(scene_labels_path, std::ios::trunc);
        if (!out) throw dualpost::IoError("cannot open output file: " + scene_labels_path);
        for (const auto& traj : ds.trajectories) {
            if (traj.domain_tag != dualpost::DomainTag::Robot) continue;
            const auto labels = dualpost::gridworld::synthetic_scene_labels(traj);
            json j = json::object();
            j["trajectory_id"] = traj.id;
            j["labels"] = labels.scene_label;
            out << j.dump() << "\n";
        }
    }
    std::cerr << "wrote " << ds.trajectories.size() << " trajectories -> " << out_path
              << "\n";
    return 0;
}

int cmd_check_grad(std::uint64_t seed) {
    const auto result = dualpost::run_gradcheck(seed, 10, {0.5, 1.0, 2.0, 4.0});
    std::cout << "max relative gradient error: ce=" << result.max_ce_error
              << " kd=" << result.max_kd_error << "\n";
    const bool ok = result.max_ce_error <= 1e-5 && result.max_kd_error <= 1e-5;
    std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-5)\n";
    return ok ? 0 : 1;
}

int cmd_distill_train(const std::string& config_path, std::uint64_t seed,
                      const std::string& run_base) {
    dualpost::ProtocolSpec spec;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw dualpost::IoError("cannot open config file: " + config_path);
        json j;
        in >> j;
        spec = dualpost::protocol_spec_from_json(j);
    }
    spec.seed = seed;
    const std::string run_dir = make_run_dir(run_base, seed);
    std::cerr << "training " << dualpost::to_string(spec.protocol) << " (seed " << seed
              << ") -> " << run_dir << "\n";
    const auto result = dualpost::train_protocol(spec);
    dualpost::write_trace(result.trace, run_dir + "/trace.jsonl");
    if (!result.trace.empty()) {
        const auto& last = result.trace.back();
        std::cerr << "final action_acc=" << last.action_acc
                  << " reasoning_acc=" << last.reasoning_acc << "\n";
    }
    return 0;
}

int cmd_kb_build(const std::string& dataset_path, const std::string& verdicts_path,
                 const std::string& refinements_path, const std::string& out_path) {
    const auto ds = dualpost::load_dataset(dataset_path);
    dualpost::LocalTextEncoder text_enc;
    dualpost::LocalImageEncoder image_enc;
    const auto kb = dualpost::kb_build(ds, verdicts_path, refinements_path, text_enc,
                                       image_enc);
    dualpost::save_kb(kb, out_path);
    std::cerr << "built KB with " << kb.exemplars.size() << " exemplars -> " << out_path
              << "\n";
    return 0;
}

int cmd_kb_retrieve(const std::string& kb_path, const std::string& task_text,
                    const std::vector<std::string>& frame_refs) {
    const auto kb = dualpost::load_kb(kb_path);
    dualpost::LocalTextEncoder text_enc;
    dualpost::LocalImageEncoder image_enc;
    const auto hit = dualpost::retrieve(kb, task_text, frame_refs, text_enc, image_enc);
    json j = json::object();
    j["text_hit"] = hit.text_hit->id;
    j["text_cosine"] = hit.text_cosine;
    j["scene_hit"] = hit.scene_hit->id;
    j["scene_cosine"] = hit.scene_cosine;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_score_run(const std::string& dataset_path, const std::string& outcomes_path,
                  const std::string& kb_path, const std::string& kind_name,
                  bool use_mock, const AppConfig& cfg, const std::string& run_base,
                  std::uint64_t seed, int jobs) {
    const auto ds = dualpost::load_dataset(dataset_path);
    const auto outcomes = dualpost::load_outcomes(outcomes_path);
    const auto kb = dualpost::load_kb(kb_path);
    const auto kind = kind_name == "specialist" ? dualpost::PolicyKind::Specialist
                                                : dualpost::PolicyKind::Reasoning;
    dualpost::LocalTextEncoder text_enc;
    dualpost::LocalImageEncoder image_enc;
    std::unique_ptr<dualpost::JudgeBackend> backend;
    if (use_mock) {
        backend = std::make_unique<dualpost::MockJudgeBackend>();
    } else {
        dualpost::RemoteConfig rc;
        rc.base_url = cfg.get<std::string>("judge_url", "");
        rc.model = cfg.get<std::string>("judge_model", "");
        rc.timeout_seconds = cfg.get<int>("judge_timeout_seconds", 120);
        rc.max_in_flight = cfg.get<int>("judge_max_in_flight", 4);
        if (rc.base_url.empty()) {
            throw dualpost::InvalidArgument(
                "remote judge requires judge_url in --config (or pass --mock)");
        }
        backend = std::make_unique<dualpost::RemoteJudgeBackend>(rc);
    }
    const auto report = dualpost::evaluate_run(ds, outcomes, kb, *backend, kind,
                                               text_enc, image_enc, jobs);
    const std::string run_dir = make_run_dir(run_base, seed);
    std::ofstream out(run_dir + "/report.json", std::ios::trunc);
    out << dualpost::report_json(report).dump(2) << "\n";
    std::cerr << "scored " << report.cards.size() << " trajectories ("
              << report.n_errors << " judge errors) -> " << run_dir << "/report.json\n";
    std::cout << dualpost::report_table(report);
    return 0;
}

int cmd_score_report(const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) throw dualpost::IoError("cannot open report file: " + report_path);
    json j;
    in >> j;
    dualpost::EvalReport rep;
    for (const auto& cj : j.at("cards")) {
        dualpost::ScoreCard c;
        c.trajectory_id = cj.at("trajectory_id").get<std::string>();
        c.r = cj.at("r").get<double>();
        c.a = cj.at("a").get<double>();
        c.i = cj.at("i").get<double>();
        c.ra = cj.at("ra").get<double>();
        c.b = cj.at("b").get<int>();
        c.score = cj.at("score").get<double>();
        rep.cards.push_back(std::move(c));
    }
    rep.n_errors = j.value("n_errors", 0);
    dualpost::finalize_report(rep);
    std::cout << dualpost::report_table(rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-layer pruning, dual-teacher distillation, and VLA-score "
                 "evaluation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    std::string run_base = "runs";
    app.add_option("--config", config_path, "shared JSON config file");
    app.add_option("--seed", seed, "random seed for randomized commands");
    app.add_option("--jobs", jobs, "parallelism for per-trajectory maps");
    app.add_option("--run-dir", run_base, "base directory for run artifacts");

    std::string dataset_path, out_path, report_path, scene_labels_path;
    int window = 3;
    double threshold = 0.5;

    auto* stats = app.add_subcommand("stats", "dataset statistics report")->fallthrough();
    stats->add_option("--dataset", dataset_path)->required();

    auto* labelk = app.add_subcommand("label-kinematic", "kinematic keyframe labels")->fallthrough();
    labelk->add_option("--dataset", dataset_path)->required();
    labelk->add_option("--out", out_path);

    auto* labels = app.add_subcommand("label-scene", "scene boundary labels")->fallthrough();
    labels->add_option("--dataset", dataset_path)->required();
    labels->add_option("--out", out_path);
    labels->add_option("--window", window);
    labels->add_option("--threshold", threshold);

    auto* prune = app.add_subcommand("prune", "dual-layer reasoning pruning")->fallthrough();
    prune->add_option("--dataset", dataset_path)->required();
    prune->add_option("--out", out_path)->required();
    prune->add_option("--report", report_path)->required();
    prune->add_option("--scene-labels", scene_labels_path,
                      "precomputed scene labels (default: built-in detector)");
    prune->add_option("--window", window);
    prune->add_option("--threshold", threshold);

    auto* distill = app.add_subcommand("distill", "training objectives")->fallthrough();
    distill->require_subcommand(1);
    std::string proto_config;
    auto* dtrain = distill->add_subcommand("train", "train one protocol")->fallthrough();
    dtrain->add_option("--protocol-config", proto_config, "ProtocolSpec JSON file");
    auto* dcheck = distill->add_subcommand("check-grad", "finite-difference check")->fallthrough();
    int task_n = 100;
    auto* dtask = distill->add_subcommand("make-task", "generate the synthetic corpus")->fallthrough();
    dtask->add_option("--n", task_n, "trajectories per domain");
    dtask->add_option("--out", out_path)->required();
    dtask->add_option("--scene-labels", scene_labels_path,
                      "also write phase-boundary scene annotations");

    auto* kb = app.add_subcommand("kb", "knowledge base")->fallthrough();
    kb->require_subcommand(1);
    std::string verdicts_path, refinements_path, kb_path, task_text;
    std::vector<std::string> frame_refs;
    auto* kbuild = kb->add_subcommand("build", "build the exemplar KB")->fallthrough();
    kbuild->add_option("--dataset", dataset_path)->required();
    kbuild->add_option("--verdicts", verdicts_path)->required();
    kbuild->add_option("--refinements", refinements_path);
    kbuild->add_option("--out", out_path)->required();
    auto* kret = kb->add_subcommand("retrieve", "dual retrieval query")->fallthrough();
    kret->add_option("--kb", kb_path)->required();
    kret->add_option("--task", task_text)->required();
    kret->add_option("--frames", frame_refs, "observation refs")->required();

    auto* score = app.add_subcommand("score", "VLA-score evaluation")->fallthrough();
    score->require_subcommand(1);
    std::string outcomes_path, kind_name = "reasoning";
    bool use_mock = false;
    auto* srun = score->add_subcommand("run", "judge + score a dataset")->fallthrough();
    srun->add_option("--dataset", dataset_path)->required();
    srun->add_option("--outcomes", outcomes_path)->required();
    srun->add_option("--kb", kb_path)->required();
    srun->add_option("--kind", kind_name)->check(CLI::IsMember({"reasoning", "specialist"}));
    srun->add_flag("--mock", use_mock, "deterministic offline judge");
    auto* srep = score->add_subcommand("report", "render a saved report as a table")->fallthrough();
    srep->add_option("--in", report_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const AppConfig cfg = AppConfig::load(config_path);
        if (*stats) return cmd_stats(dataset_path);
        if (*labelk) return cmd_label_kinematic(dataset_path, out_path);
        if (*labels) return cmd_label_scene(dataset_path, out_path, window, threshold);
        if (*prune) {
            return cmd_prune(dataset_path, out_path, report_path, scene_labels_path,
                             window, threshold);
        }
        if (*dtrain) return cmd_distill_train(proto_config, seed, run_base);
        if (*dcheck) return cmd_check_grad(seed);
        if (*dtask) return cmd_make_task(seed, task_n, out_path, scene_labels_path);
        if (*kbuild) return cmd_kb_build(dataset_path, verdicts_path, refinements_path,
                                         out_path);
        if (*kret) return cmd_kb_retrieve(kb_path, task_text, frame_refs);
        if (*srun) {
            return cmd_score_run(dataset_path, outcomes_path, kb_path, kind_name,
                                 use_mock, cfg, run_base, seed, jobs);
        }
        if (*srep) return cmd_score_report(report_path);
    } catch (const dualpost::SchemaError& e) {
        std::cerr << "error:schema: " << e.what() << "\n";
        return 2;
    } catch (const dualpost::IoError& e) {
        std::cerr << "error:io: " << e.what() << "\n";
        return 3;
    } catch (const dualpost::InvalidArgument& e) {
        std::cerr << "error:invalid: " << e.what() << "\n";
        return 4;
    } catch (const dualpost::BackendError& e) {
        std::cerr << "error:backend: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
