#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualpost/error.hpp"
#include "dualpost/gridworld.hpp"
#include "dualpost/policy.hpp"
#include "dualpost/prune.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

enum class Protocol { Specialist, MixedBaseline, DualDistilled };

inline Protocol protocol_from_string(const std::string& s) {
    if (s == "specialist") return Protocol::Specialist;
    if (s == "mixed_baseline") return Protocol::MixedBaseline;
    if (s == "dual_distilled") return Protocol::DualDistilled;
    throw InvalidArgument("unknown protocol: " + s);
}

inline std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::Specialist: return "specialist";
        case Protocol::MixedBaseline: return "mixed_baseline";
        case Protocol::DualDistilled: return "dual_distilled";
    }
    return {};
}

// Reasoning treatment applied to robot training and evaluation sequences.
enum class MaskingMode { None, Full, DualLayer, RandomMatched };

struct ProtocolSpec {
    Protocol protocol = Protocol::DualDistilled;
    int epochs = 6;
    double step_size = 0.5;
    int batch_size = 16;
    double temperature = 2.0;
    double lambda = 0.15;
    std::uint64_t seed = 0;
    int n_robot = 2000;       // robot trajectories
    int n_multimodal = 2000;  // multimodal samples
    int n_heldout = 300;      // held-out trajectories per domain
    // dual_distilled only: dual-layer pruning or random masking at matched
    // retention (the ablation arm).
    MaskingMode masking = MaskingMode::DualLayer;
    int embed_dim = 8;
    int hidden_dim = 24;
};

inline ProtocolSpec protocol_spec_from_json(const json& j) {
    ProtocolSpec s;
    if (j.contains("protocol")) s.protocol = protocol_from_string(j.at("protocol"));
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("step_size")) s.step_size = j.at("step_size").get<double>();
    if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
    if (j.contains("temperature")) s.temperature = j.at("temperature").get<double>();
    if (j.contains("lambda")) s.lambda = j.at("lambda").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_robot")) s.n_robot = j.at("n_robot").get<int>();
    if (j.contains("n_multimodal")) s.n_multimodal = j.at("n_multimodal").get<int>();
    if (j.contains("n_heldout")) s.n_heldout = j.at("n_heldout").get<int>();
    if (j.contains("masking")) {
        const std::string m = j.at("masking");
        if (m == "dual") s.masking = MaskingMode::DualLayer;
        else if (m == "random") s.masking = MaskingMode::RandomMatched;
        else throw InvalidArgument("masking must be \"dual\" or \"random\"");
    }
    if (j.contains("embed_dim")) s.embed_dim = j.at("embed_dim").get<int>();
    if (j.contains("hidden_dim")) s.hidden_dim = j.at("hidden_dim").get<int>();
    return s;
}

struct EpochMetrics {
    int epoch = 0;
    double action_acc = 0.0;
    double reasoning_acc = 0.0;
    double loss_total = 0.0;
    double loss_kd = 0.0;
};

struct TrainResult {
    Policy policy;
    std::vector<EpochMetrics> trace;
};

namespace detail {

struct TrainSample {
    TokenSequence seq;
    DomainTag domain = DomainTag::Robot;
};

// Dual-layer prune of one synthetic robot trajectory: scene labels from the
// generator annotations, kinematic labels from the real labeler.
inline Trajectory dual_prune(const Trajectory& traj) {
    return prune_trajectory(traj, gridworld::synthetic_scene_labels(traj),
                            label_kinematic(traj))
        .pruned;
}

// Random masking at per-trajectory retention matched to the dual-layer mask.
inline Trajectory random_prune(const Trajectory& traj, std::mt19937_64& rng) {
    const Trajectory dual = dual_prune(traj);
    std::size_t keep = 0;
    for (const Frame& f : dual.frames) {
        if (!f.reasoning.empty()) ++keep;
    }
    std::vector<std::size_t> order(traj.frames.size());
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> kept(traj.frames.size(), 0);
    for (std::size_t i = 0; i < keep && i < order.size(); ++i) kept[order[i]] = 1;
    Trajectory out = traj;
    for (std::size_t t = 0; t < out.frames.size(); ++t) {
        if (!kept[t] && !out.frames[t].reasoning.empty()) {
            out.frames[t].reasoning.clear();
            out.frames[t].reasoning_masked = true;
        }
    }
    return out;
}

inline std::vector<TrainSample> robot_samples(const std::vector<Trajectory>& trajs,
                                              MaskingMode masking,
                                              std::mt19937_64& rng) {
    std::vector<TrainSample> samples;
    for (const Trajectory& traj : trajs) {
        Trajectory prepared = traj;
        bool include_reasoning = true;
        switch (masking) {
            case MaskingMode::None: include_reasoning = false; break;
            case MaskingMode::Full: break;
            case MaskingMode::DualLayer: prepared = dual_prune(traj); break;
            case MaskingMode::RandomMatched: prepared = random_prune(traj, rng); break;
        }
        for (auto& seq : gridworld::robot_frame_sequences(prepared, include_reasoning)) {
            samples.push_back({std::move(seq), DomainTag::Robot});
        }
    }
    return samples;
}

inline std::vector<TrainSample> multimodal_samples(
    const std::vector<Trajectory>& trajs) {
    std::vector<TrainSample> samples;
    for (const Trajectory& traj : trajs) {
        samples.push_back({gridworld::multimodal_sequence(traj), DomainTag::Multimodal});
    }
    return samples;
}

struct SplitDataset {
    std::vector<Trajectory> robot;
    std::vector<Trajectory> multimodal;
};

inline SplitDataset split_by_domain(Dataset ds) {
    SplitDataset out;
    for (Trajectory& traj : ds.trajectories) {
        (traj.domain_tag == DomainTag::Robot ? out.robot : out.multimodal)
            .push_back(std::move(traj));
    }
    return out;
}

struct HeldoutMetrics {
    double action_acc = 0.0;
    double reasoning_acc = 0.0;
};

inline HeldoutMetrics evaluate(const Policy& policy,
                               const std::vector<TrainSample>& robot,
                               const std::vector<TrainSample>& multimodal) {
    HeldoutMetrics m;
    auto accuracy = [&](const std::vector<TrainSample>& samples, TokenKind kind) {
        std::size_t correct = 0, total = 0;
        for (const TrainSample& s : samples) {
            for (std::size_t pos = 0; pos < s.seq.size(); ++pos) {
                if (s.seq.kinds[pos] != kind) continue;
                const auto probs = policy.forward(
                    std::vector<int>(s.seq.tokens.begin(), s.seq.tokens.begin() + pos));
                const int pred = static_cast<int>(
                    std::max_element(probs.begin(), probs.end()) - probs.begin());
                correct += pred == s.seq.tokens[pos] ? 1 : 0;
                ++total;
            }
        }
        return total == 0 ? 0.0 : static_cast<double>(correct) / total;
    };
    m.action_acc = accuracy(robot, TokenKind::Action);
    m.reasoning_acc = accuracy(multimodal, TokenKind::Reasoning);
    return m;
}

struct SgdOptions {
    int epochs;
    double step_size;
    int batch_size;
    std::uint64_t shuffle_seed;
};

// Plain mini-batch gradient descent, fixed step. per_sample computes the
// sample loss and accumulates its gradient (already scaled for a per-sample
// mean). Returns per-epoch mean losses; calls on_epoch after each epoch.
template <typename PerSample, typename OnEpoch>
void sgd_train(Policy& policy, const std::vector<TrainSample>& samples,
               const SgdOptions& opt, PerSample&& per_sample, OnEpoch&& on_epoch) {
    std::mt19937_64 rng(opt.shuffle_seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0u);
    std::vector<double> grad(policy.param_count());
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0, kd_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < stop; ++i) {
                const auto [loss, kd] = per_sample(samples[order[i]], grad);
                loss_sum += loss;
                kd_sum += kd;
                if (!std::isfinite(loss)) {
                    throw Error("training diverged: non-finite loss at epoch " +
                                std::to_string(epoch));
                }
            }
            const double scale = opt.step_size / static_cast<double>(stop - start);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                policy.params()[i] -= scale * grad[i];
            }
        }
        on_epoch(epoch, loss_sum / static_cast<double>(samples.size()),
                 kd_sum / static_cast<double>(samples.size()));
    }
}

}  // namespace detail

// Optional call counters for the routing-exclusivity checks: snapshots of the
// two teachers' forward counts across a training run.
struct TeacherCallCounts {
    std::size_t action_teacher = 0;
    std::size_t reason_teacher = 0;
};

// Trains one protocol end to end on the synthetic gridworld task and reports
// held-out accuracy per epoch. Deterministic in spec.seed.
inline TrainResult train_protocol(const ProtocolSpec& spec,
                                  TeacherCallCounts* counts = nullptr) {
    using namespace detail;
    const int n = std::max(spec.n_robot, spec.n_multimodal);
    SplitDataset train = split_by_domain(gridworld::make_synthetic_task(spec.seed, n));
    train.robot.resize(spec.n_robot);
    train.multimodal.resize(spec.n_multimodal);
    SplitDataset heldout = split_by_domain(
        gridworld::make_synthetic_task(spec.seed ^ 0x9e3779b97f4a7c15ULL,
                                       spec.n_heldout));

    std::mt19937_64 mask_rng(spec.seed + 1);
    const MaskingMode train_masking =
        spec.protocol == Protocol::Specialist      ? MaskingMode::None
        : spec.protocol == Protocol::MixedBaseline ? MaskingMode::Full
                                                   : spec.masking;

    // Held-out sequences use the same reasoning form the protocol trains with.
    std::mt19937_64 heldout_mask_rng(spec.seed + 2);
    const auto eval_robot = robot_samples(heldout.robot, train_masking,
                                          heldout_mask_rng);
    const auto eval_mm = multimodal_samples(heldout.multimodal);

    const int vocab = gridworld::TOK_VOCAB_SIZE;
    const int context = gridworld::kContextLen;
    Policy student = Policy::random_init(vocab, spec.embed_dim, spec.hidden_dim,
                                         context, spec.seed);

    std::vector<TrainSample> samples;
    std::optional<Policy> action_teacher;
    std::optional<Policy> reason_teacher;
    DistillConfig cfg;
    cfg.temperature = spec.temperature;
    cfg.lambda = spec.lambda;

    if (spec.protocol == Protocol::Specialist) {
        samples = robot_samples(train.robot, MaskingMode::None, mask_rng);
    } else if (spec.protocol == Protocol::MixedBaseline) {
        samples = robot_samples(train.robot, MaskingMode::Full, mask_rng);
        const auto mm = multimodal_samples(train.multimodal);
        samples.insert(samples.end(), mm.begin(), mm.end());
    } else {
        // Teachers first: the specialist action teacher and the
        // multimodal-only reasoning teacher, both from the shared init.
        action_teacher = student;
        {
            const auto teacher_data = robot_samples(train.robot, MaskingMode::None,
                                                    mask_rng);
            sgd_train(*action_teacher, teacher_data,
                      {spec.epochs, spec.step_size, spec.batch_size, spec.seed + 11},
                      [&](const TrainSample& s, std::vector<double>& grad) {
                          const auto r = ce_loss(*action_teacher, s.seq,
                                                 {TokenKind::Action});
                          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
                          return std::pair{r.loss, 0.0};
                      },
                      [](int, double, double) {});
        }
        reason_teacher = student;
        {
            const auto teacher_data = multimodal_samples(train.multimodal);
            sgd_train(*reason_teacher, teacher_data,
                      {spec.epochs, spec.step_size, spec.batch_size, spec.seed + 12},
                      [&](const TrainSample& s, std::vector<double>& grad) {
                          const auto r = ce_loss(*reason_teacher, s.seq,
                                                 {TokenKind::Reasoning});
                          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
                          return std::pair{r.loss, 0.0};
                      },
                      [](int, double, double) {});
        }
        samples = robot_samples(train.robot, train_masking, mask_rng);
        const auto mm = multimodal_samples(train.multimodal);
        samples.insert(samples.end(), mm.begin(), mm.end());
        action_teacher->reset_forward_calls();
        reason_teacher->reset_forward_calls();
    }

    TrainResult result{student, {}};
    if (spec.epochs == 0) {
        return result;  // the initialization, untouched
    }

    auto record_epoch = [&](int epoch, double mean_loss, double mean_kd) {
        const HeldoutMetrics m = evaluate(result.policy, eval_robot, eval_mm);
        result.trace.push_back({epoch, m.action_acc, m.reasoning_acc, mean_loss,
                                mean_kd});
    };

    if (spec.protocol == Protocol::DualDistilled) {
        sgd_train(result.policy, samples,
                  {spec.epochs, spec.step_size, spec.batch_size, spec.seed + 13},
                  [&](const TrainSample& s, std::vector<double>& grad) {
                      const auto r = total_loss(result.policy, &*action_teacher,
                                                &*reason_teacher, s.seq, cfg, s.domain);
                      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
                      return std::pair{r.total, r.kd};
                  },
                  record_epoch);
    } else {
        const std::set<TokenKind> kinds =
            spec.protocol == Protocol::Specialist
                ? std::set<TokenKind>{TokenKind::Action}
                : std::set<TokenKind>{TokenKind::Action, TokenKind::Reasoning};
        sgd_train(result.policy, samples,
                  {spec.epochs, spec.step_size, spec.batch_size, spec.seed + 13},
                  [&](const TrainSample& s, std::vector<double>& grad) {
                      const auto r = ce_loss(result.policy, s.seq, kinds);
                      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
                      return std::pair{r.loss, 0.0};
                  },
                  record_epoch);
    }

    if (counts != nullptr && action_teacher && reason_teacher) {
        counts->action_teacher = action_teacher->forward_calls();
        counts->reason_teacher = reason_teacher->forward_calls();
    }
    return result;
}

inline void write_trace(const std::vector<EpochMetrics>& trace,
                        const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open trace file: " + path);
    for (const EpochMetrics& m : trace) {
        json j = json::object();
        j["epoch"] = m.epoch;
        j["action_acc"] = m.action_acc;
        j["reasoning_acc"] = m.reasoning_acc;
        j["loss_total"] = m.loss_total;
        j["loss_kd"] = m.loss_kd;
        out << j.dump() << '\n';
    }
}

}  // namespace dualpost
