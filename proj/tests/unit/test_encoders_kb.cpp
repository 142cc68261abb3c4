#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dualpost/encoders.hpp"
#include "dualpost/kb.hpp"

using namespace dualpost;
namespace fs = std::filesystem;

namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

// A tiny 4x4 gradient image in both PGM encodings.
void write_pgm_pair(const std::string& ascii_path, const std::string& binary_path) {
    {
        std::ofstream out(ascii_path, std::ios::trunc);
        out << "P2\n# comment line\n4 4\n255\n";
        for (int i = 0; i < 16; ++i) out << (i * 16) << (i % 4 == 3 ? "\n" : " ");
    }
    {
        std::ofstream out(binary_path, std::ios::binary | std::ios::trunc);
        out << "P5\n4 4\n255\n";
        for (int i = 0; i < 16; ++i) out.put(static_cast<char>(i * 16));
    }
}

std::vector<double> random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> g;
    std::vector<double> v(dim);
    for (double& x : v) x = g(rng);
    detail::l2_normalize(v);
    return v;
}

KnowledgeBase random_kb(std::mt19937_64& rng, int n, int text_dim, int image_dim) {
    KnowledgeBase kb;
    kb.text_dim = text_dim;
    kb.image_dim = image_dim;
    for (int i = 0; i < n; ++i) {
        Exemplar e;
        e.id = "ex-" + std::to_string(i);
        e.task_text = "task " + std::to_string(i);
        e.text_embedding = random_unit(rng, text_dim);
        e.image_embedding = random_unit(rng, image_dim);
        e.r = e.a = e.i = e.ra = 5;
        kb.exemplars.push_back(std::move(e));
    }
    return kb;
}

}  // namespace

TEST_CASE("text embeddings are unit-norm and deterministic") {
    LocalTextEncoder enc;
    const auto a = enc.embed_text("pick up the red cube");
    const auto b = enc.embed_text("pick up the red cube");
    const auto c = enc.embed_text("stack the blue plates");
    REQUIRE(a.size() == LocalTextEncoder::kDim);
    CHECK(a == b);
    CHECK_THAT(norm(a), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(cosine_similarity(a, b), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(cosine_similarity(a, c) < 0.9);
}

TEST_CASE("cosine similarity is scale invariant") {
    std::vector<double> a = {1.0, -2.0, 0.5};
    std::vector<double> b = a;
    for (double& x : b) x *= 37.5;
    CHECK_THAT(cosine_similarity(a, b), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("ascii and binary PGM encodings embed identically") {
    const auto p2 = temp_path("img_ascii.pgm");
    const auto p5 = temp_path("img_bin.pgm");
    write_pgm_pair(p2, p5);
    LocalImageEncoder enc;
    const auto a = enc.embed_image(p2);
    const auto b = enc.embed_image(p5);
    REQUIRE(a.size() == LocalImageEncoder::kDim);
    CHECK_THAT(norm(a), Catch::Matchers::WithinAbs(1.0, 1e-12));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-12));
    }
}

TEST_CASE("PGM loader rejects other formats") {
    const auto p = temp_path("img_bad.pgm");
    std::ofstream(p, std::ios::trunc) << "P6\n2 2\n255\n";
    LocalImageEncoder enc;
    CHECK_THROWS_AS(enc.embed_image(p), IoError);
    CHECK_THROWS_AS(enc.embed_image(temp_path("missing.pgm")), IoError);
}

TEST_CASE("retrieval equals an exhaustive scan with lexicographic ties") {
    std::mt19937_64 rng(77);
    LocalTextEncoder text_enc;
    LocalImageEncoder image_enc;
    const auto p2 = temp_path("img_q.pgm");
    write_pgm_pair(p2, temp_path("img_q5.pgm"));
    for (int rep = 0; rep < 30; ++rep) {
        auto kb = random_kb(rng, 1 + static_cast<int>(rng() % 20),
                            LocalTextEncoder::kDim, LocalImageEncoder::kDim);
        const std::string query = "query " + std::to_string(rep);
        const auto hit = retrieve(kb, query, {p2}, text_enc, image_enc);

        const auto tq = text_enc.embed_text(query);
        const auto iq = trajectory_image_embedding({p2}, image_enc);
        const Exemplar* best_t = nullptr;
        const Exemplar* best_i = nullptr;
        double bt = -2, bi = -2;
        for (const auto& e : kb.exemplars) {
            const double ct = cosine_similarity(e.text_embedding, tq);
            if (!best_t || ct > bt || (ct == bt && e.id < best_t->id)) {
                best_t = &e;
                bt = ct;
            }
            const double ci = cosine_similarity(e.image_embedding, iq);
            if (!best_i || ci > bi || (ci == bi && e.id < best_i->id)) {
                best_i = &e;
                bi = ci;
            }
        }
        CHECK(hit.text_hit->id == best_t->id);
        CHECK(hit.scene_hit->id == best_i->id);
        CHECK_THAT(hit.text_cosine, Catch::Matchers::WithinAbs(bt, 1e-15));
        CHECK_THAT(hit.scene_cosine, Catch::Matchers::WithinAbs(bi, 1e-15));
    }
}

TEST_CASE("querying with an exemplar's own text retrieves it at cosine 1") {
    LocalTextEncoder text_enc;
    LocalImageEncoder image_enc;
    const auto p2 = temp_path("img_self.pgm");
    write_pgm_pair(p2, temp_path("img_self5.pgm"));
    KnowledgeBase kb;
    kb.text_dim = LocalTextEncoder::kDim;
    kb.image_dim = LocalImageEncoder::kDim;
    const char* texts[] = {"open the drawer", "fold the towel", "pour the water"};
    std::mt19937_64 rng(5);
    int i = 0;
    for (const char* t : texts) {
        Exemplar e;
        e.id = "self-" + std::to_string(i++);
        e.task_text = t;
        e.text_embedding = text_enc.embed_text(t);
        e.image_embedding = random_unit(rng, kb.image_dim);
        e.r = e.a = e.i = e.ra = 5;
        kb.exemplars.push_back(std::move(e));
    }
    for (const auto& e : kb.exemplars) {
        const auto hit = retrieve(kb, e.task_text, {p2}, text_enc, image_enc);
        CHECK(hit.text_hit->id == e.id);
        CHECK_THAT(hit.text_cosine, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("knowledge base persists through save/load") {
    std::mt19937_64 rng(31);
    auto kb = random_kb(rng, 5, 8, 4);
    kb.exemplars[2].expert_note = "watch the approach angle";
    const auto p = temp_path("kb.jsonl");
    save_kb(kb, p);
    const auto loaded = load_kb(p);
    REQUIRE(loaded.exemplars.size() == kb.exemplars.size());
    for (std::size_t i = 0; i < kb.exemplars.size(); ++i) {
        CHECK(loaded.exemplars[i].id == kb.exemplars[i].id);
        CHECK(loaded.exemplars[i].task_text == kb.exemplars[i].task_text);
        CHECK(loaded.exemplars[i].r == kb.exemplars[i].r);
        CHECK(loaded.exemplars[i].ra == kb.exemplars[i].ra);
        CHECK(loaded.exemplars[i].expert_note == kb.exemplars[i].expert_note);
        for (int d = 0; d < kb.text_dim; ++d) {
            CHECK_THAT(loaded.exemplars[i].text_embedding[d],
                       Catch::Matchers::WithinAbs(kb.exemplars[i].text_embedding[d],
                                                  1e-12));
        }
    }
}

TEST_CASE("validation rejects out-of-range scores") {
    std::mt19937_64 rng(33);
    auto kb = random_kb(rng, 3, 4, 4);
    CHECK_NOTHROW(validate_kb(kb));
    kb.exemplars[1].ra = 11;
    CHECK_THROWS_AS(validate_kb(kb), SchemaError);
    kb.exemplars[1].ra = -1;
    CHECK_THROWS_AS(validate_kb(kb), SchemaError);
}

TEST_CASE("refinements override raw verdict scores") {
    const auto verdicts = temp_path("verdicts.jsonl");
    std::ofstream(verdicts, std::ios::trunc)
        << R"({"trajectory_id":"t0","R":3,"A":4,"I":5,"RA":6})" << "\n";
    const auto refinements = temp_path("refine.jsonl");
    std::ofstream(refinements, std::ios::trunc)
        << R"({"id":"t0","overrides":{"RA":9},"note":"tightened"})"
        << "\n";

    Dataset ds;
    Trajectory t;
    t.id = "t0";
    t.instruction = "demo task";
    t.domain_tag = DomainTag::Robot;
    Frame f;
    f.index = 0;
    f.action = {1.0};
    const auto ascii = temp_path("img_kbb.pgm");
    write_pgm_pair(ascii, temp_path("img_kbb5.pgm"));
    f.observation_ref = ascii;
    t.frames = {f};
    ds.trajectories.push_back(t);

    LocalTextEncoder text_enc;
    LocalImageEncoder image_enc;
    const auto kb = kb_build(ds, verdicts, refinements, text_enc, image_enc);
    REQUIRE(kb.exemplars.size() == 1);
    CHECK(kb.exemplars[0].r == 3);
    CHECK(kb.exemplars[0].ra == 9);
    CHECK(kb.exemplars[0].expert_note == "tightened");

    // Every trajectory must have verdict coverage.
    Trajectory extra = t;
    extra.id = "t1";
    ds.trajectories.push_back(extra);
    CHECK_THROWS_AS(kb_build(ds, verdicts, refinements, text_enc, image_enc),
                    SchemaError);
}
