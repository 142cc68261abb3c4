#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dualpost/gridworld.hpp"
#include "dualpost/trajectory.hpp"

using namespace dualpost;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
}

}  // namespace

TEST_CASE("count_tokens splits on whitespace runs") {
    CHECK(count_tokens("") == 0);
    CHECK(count_tokens("   ") == 0);
    CHECK(count_tokens("one") == 1);
    CHECK(count_tokens("move the object") == 3);
    CHECK(count_tokens("  a \t b\nc  ") == 3);
}

TEST_CASE("dataset save/load round trip is byte-stable") {
    const auto ds = gridworld::make_synthetic_task(7, 5);
    const auto p1 = temp_path("rt1.jsonl");
    const auto p2 = temp_path("rt2.jsonl");
    save_dataset(ds, p1);
    const auto loaded = load_dataset(p1);
    save_dataset(loaded, p2);
    REQUIRE(loaded.trajectories.size() == ds.trajectories.size());
    CHECK(slurp(p1) == slurp(p2));
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        CHECK(loaded.trajectories[i].id == ds.trajectories[i].id);
        CHECK(loaded.trajectories[i].frames == ds.trajectories[i].frames);
        CHECK(loaded.trajectories[i].meta == ds.trajectories[i].meta);
    }
}

TEST_CASE("unknown fields survive a load/save cycle") {
    const std::string line =
        R"({"schema_version":"dualpost/1","id":"t0","instruction":"go",)"
        R"("domain_tag":"Robot","future_field":{"x":1},)"
        R"("frames":[{"index":0,"pose":[0,0,0,0,0,0],"gripper":0,"action":[1],)"
        R"("reasoning":"r","observation_ref":"o","frame_extra":7}]})";
    const auto p = temp_path("unknown.jsonl");
    spit(p, line + "\n");
    const auto ds = load_dataset(p);
    const auto p2 = temp_path("unknown2.jsonl");
    save_dataset(ds, p2);
    const json out = json::parse(slurp(p2));
    CHECK(out.at("future_field").at("x") == 1);
    CHECK(out.at("frames").at(0).at("frame_extra") == 7);
}

TEST_CASE("validation rejects malformed trajectories") {
    Trajectory t;
    t.id = "t";
    t.instruction = "go";
    t.domain_tag = DomainTag::Robot;
    Frame f;
    f.index = 0;
    f.action = {1.0};
    t.frames = {f};

    SECTION("valid baseline passes") { CHECK_NOTHROW(validate_trajectory(t)); }
    SECTION("gripper out of range") {
        t.frames[0].gripper = 2;
        CHECK_THROWS_AS(validate_trajectory(t), SchemaError);
    }
    SECTION("non-finite pose") {
        t.frames[0].pose[3] = std::nan("");
        CHECK_THROWS_AS(validate_trajectory(t), SchemaError);
    }
    SECTION("indices must increase from zero") {
        Frame g = f;
        g.index = 2;
        t.frames.push_back(g);
        CHECK_THROWS_AS(validate_trajectory(t), SchemaError);
    }
    SECTION("robot trajectories need an instruction") {
        t.instruction.clear();
        CHECK_THROWS_AS(validate_trajectory(t), SchemaError);
    }
    SECTION("multimodal samples carry no actions") {
        t.domain_tag = DomainTag::Multimodal;
        CHECK_THROWS_AS(validate_trajectory(t), SchemaError);
    }
}

TEST_CASE("loader reports duplicates and bad lines") {
    const std::string good =
        R"({"schema_version":"dualpost/1","id":"a","instruction":"go","domain_tag":"Robot",)"
        R"("frames":[{"index":0,"pose":[0,0,0,0,0,0],"gripper":0,"action":[1],)"
        R"("reasoning":"","observation_ref":""}]})";
    SECTION("duplicate ids") {
        const auto p = temp_path("dup.jsonl");
        spit(p, good + "\n" + good + "\n");
        CHECK_THROWS_AS(load_dataset(p), SchemaError);
    }
    SECTION("wrong schema version") {
        auto bad = good;
        bad.replace(bad.find("dualpost/1"), 10, "dualpost/9");
        const auto p = temp_path("ver.jsonl");
        spit(p, bad + "\n");
        CHECK_THROWS_AS(load_dataset(p), SchemaError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_dataset(temp_path("definitely-missing.jsonl")), IoError);
    }
}

TEST_CASE("reasoning entropy matches a hand-computed oracle") {
    // Strings {"a","a","b"} plus one empty: p = (2/3, 1/3) over distinct
    // non-empty strings, H = 0.91829583405448945 bits.
    Dataset ds;
    const char* texts[] = {"a", "a", "b", ""};
    int idx = 0;
    for (const char* r : texts) {
        Trajectory t;
        t.id = "t" + std::to_string(idx++);
        t.instruction = "go";
        t.domain_tag = DomainTag::Robot;
        Frame f;
        f.index = 0;
        f.action = {1.0};
        f.reasoning = r;
        t.frames = {f};
        ds.trajectories.push_back(t);
    }
    const auto stats = dataset_stats(ds);
    CHECK(stats.n_frames == 4);
    CHECK(stats.distinct_reasoning == 2);
    CHECK_THAT(stats.entropy_bits,
               Catch::Matchers::WithinAbs(0.91829583405448945, 1e-12));
    CHECK_FALSE(stats.retention_ratio.has_value());
}

TEST_CASE("retention ratio appears once frames carry mask flags") {
    Dataset ds;
    Trajectory t;
    t.id = "t";
    t.instruction = "go";
    t.domain_tag = DomainTag::Robot;
    for (int i = 0; i < 4; ++i) {
        Frame f;
        f.index = i;
        f.action = {1.0};
        f.reasoning = i == 0 ? "keep" : "";
        f.reasoning_masked = i != 0;
        t.frames.push_back(f);
    }
    ds.trajectories.push_back(t);
    const auto stats = dataset_stats(ds);
    REQUIRE(stats.retention_ratio.has_value());
    CHECK_THAT(*stats.retention_ratio, Catch::Matchers::WithinAbs(0.25, 1e-15));
}
