#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "grpo/math_util.hpp"
#include "grpo/serialize.hpp"
#include "grpo/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("GRPODYN_BIN");
    REQUIRE(b != nullptr);
    return b;
}

std::string golden_dir() {
    const char* g = std::getenv("GRPODYN_GOLDEN");
    REQUIRE(g != nullptr);
    return g;
}

int run(const std::string& args) {
    const std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "grpodyn_cli_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit with code 2 and write nothing") {
    const fs::path out = temp_dir() / "never.csv";
    fs::remove(out);
    CHECK(run("trajectory --beta -1 --out " + out.string()) == 2);
    CHECK(run("fixed-points --pref 1.5 --out " + out.string()) == 2);
    CHECK(run("trajectory --no-such-flag") == 2);
    CHECK(run("policy-evolve --world /nonexistent.json") == 2);
    CHECK_FALSE(fs::exists(out));
    CHECK_FALSE(fs::exists(out.string() + ".tmp"));
}

TEST_CASE("malformed world json is a usage error") {
    const fs::path bad = temp_dir() / "bad_world.json";
    {
        std::ofstream w(bad);
        w << "{ not json";
    }
    CHECK(run("policy-evolve --world " + bad.string() + " --beta 1") == 2);
    const fs::path negctx = temp_dir() / "neg_world.json";
    {
        std::ofstream w(negctx);
        w << R"({"prompts":[{"id":"q","weight":1.0,"outcomes":["a","b"],"rewards":[1,2]}]})";
    }
    CHECK(run("policy-evolve --world " + negctx.string() + " --beta 1") == 2);
}

TEST_CASE("fixed-points output matches the golden file") {
    const fs::path out = temp_dir() / "fixed_points.csv";
    CHECK(run("fixed-points --beta 0.05,0.5,1,5 --pref 0.001,0.1,0.3,0.7,0.9 --out " +
              out.string()) == 0);
    CHECK(read_all(out) == read_all(fs::path(golden_dir()) / "fixed_points.csv"));
}

TEST_CASE("trajectory output matches the golden file") {
    const fs::path out = temp_dir() / "trajectory.csv";
    CHECK(run("trajectory --variant mirror --beta 0.5,2 --pref 0.001,0.2 --steps 100 --out " +
              out.string()) == 0);
    CHECK(read_all(out) == read_all(fs::path(golden_dir()) / "trajectory.csv"));
}

TEST_CASE("policy-evolve log matches the golden file and passes --check") {
    const fs::path world = fs::path(golden_dir()) / "world.json";
    const fs::path out = temp_dir() / "evolve.jsonl";
    CHECK(run("policy-evolve --world " + world.string() +
              " --variant twokl --alpha 0.5 --beta 1 --steps 8 --check --out " +
              out.string()) == 0);
    CHECK(read_all(out) == read_all(fs::path(golden_dir()) / "policy_evolve.jsonl"));
}

TEST_CASE("policy-evolve honors a custom reference and starting policy") {
    const fs::path world = fs::path(golden_dir()) / "world.json";
    const fs::path refp = fs::path(golden_dir()) / "ref_policy.json";
    const fs::path initp = fs::path(golden_dir()) / "init_policy.json";
    const fs::path out = temp_dir() / "evolve_seeded.jsonl";
    CHECK(run("policy-evolve --world " + world.string() + " --ref-policy " + refp.string() +
              " --init-policy " + initp.string() +
              " --variant twokl --alpha 0.5 --beta 1 --steps 6 --check --out " +
              out.string()) == 0);
    // The seeded chain has drifted conditionals, so delta_r is live on the
    // prompts whose classes have more than one outcome.
    const std::string log = read_all(out);
    std::istringstream lines(log);
    std::string line;
    int easy_lines = 0;
    while (std::getline(lines, line)) {
        if (line.find("\"prompt\":\"easy\"") == std::string::npos) continue;
        ++easy_lines;
        CHECK(line.find("\"delta_r\":0.0,") == std::string::npos);
        CHECK(line.find("\"delta_r\":null") == std::string::npos);
    }
    CHECK(easy_lines >= 3);
}

TEST_CASE("train subcommand runs and verifies its drift bounds") {
    const fs::path world = fs::path(golden_dir()) / "world.json";
    const fs::path out = temp_dir() / "train.jsonl";
    CHECK(run("train --world " + world.string() +
              " --beta 5 --lr 0.3 --outer-iters 4 --inner-steps 100 --seed 11 --out " +
              out.string()) == 0);
    const std::string log = read_all(out);
    CHECK(log.find("pos_exact") != std::string::npos);
    CHECK(log.find("objective") != std::string::npos);
}

TEST_CASE("verify subcommand reports success") {
    CHECK(run("verify --worlds 5 --seed 1") == 0);
}

TEST_CASE("divergent regime rows are flagged non-convergent") {
    const fs::path out = temp_dir() / "divergent.csv";
    CHECK(run("trajectory --variant ref --beta 5 --pref 0.001 --out " + out.string()) == 0);
    const std::string csv = read_all(out);
    CHECK(csv.find("max-iters,1") != std::string::npos);  // oscillating period-2 orbit
}

TEST_CASE("empty beta grid is a usage error and writes nothing") {
    const fs::path out = temp_dir() / "empty.csv";
    fs::remove(out);
    CHECK(run("trajectory --beta \"\" --out " + out.string()) == 2);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("a saturated reference prompt stays pinned at one") {
    const fs::path dir = temp_dir();
    const fs::path world = dir / "pinned_world.json";
    const fs::path refp = dir / "pinned_ref.json";
    {
        std::ofstream w(world);
        w << R"({"prompts":[{"id":"q0","weight":1.0,"outcomes":["a","b","c"],)"
          << R"("rewards":[1,1,0]}]})";
        std::ofstream r(refp);
        r << R"({"prompts":[{"id":"q0","policy":[0.6,0.4,0.0]}]})";
    }
    const fs::path out = dir / "pinned.jsonl";
    CHECK(run("policy-evolve --world " + world.string() + " --ref-policy " + refp.string() +
              " --variant ref --beta 1 --steps 5 --out " + out.string()) == 0);
    const std::string log = read_all(out);
    CHECK(log.find("\"pos\":1.0") != std::string::npos);
    CHECK(log.find("\"pos\":0.9") == std::string::npos);
}

TEST_CASE("policy-evolve --check passes on random worlds") {
    const fs::path dir = temp_dir();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const grpo::FiniteWorld world = grpo::random_world(seed + 0xCE, 2, 2, 6);
        const fs::path world_path = dir / ("check_world_" + std::to_string(seed) + ".json");
        grpo::write_file_atomic(world_path, grpo::world_to_json(world));
        const grpo::ConditionalPolicy pi_ref = grpo::random_policy(world, seed + 0xCF);
        const fs::path ref_path = dir / ("check_ref_" + std::to_string(seed) + ".json");
        grpo::write_file_atomic(ref_path, grpo::policy_to_json(world, pi_ref));
        const std::string variant = seed % 2 == 0 ? "ref" : "mirror";
        CHECK(run("policy-evolve --world " + world_path.string() + " --ref-policy " +
                  ref_path.string() + " --variant " + variant +
                  " --beta 0.8 --steps 6 --check --out " +
                  (dir / "check_out.jsonl").string()) == 0);
    }
}

TEST_CASE("train writes the final policy when asked") {
    const fs::path world = fs::path(golden_dir()) / "world.json";
    const fs::path out = temp_dir() / "trained.jsonl";
    const fs::path out_policy = temp_dir() / "trained_policy.json";
    CHECK(run("train --world " + world.string() +
              " --beta 5 --lr 0.3 --outer-iters 3 --inner-steps 60 --out " + out.string() +
              " --out-policy " + out_policy.string()) == 0);
    const grpo::FiniteWorld w = grpo::load_world(world);
    const grpo::ConditionalPolicy trained = grpo::load_policy(w, out_policy);
    CHECK(trained.num_rows() == w.num_prompts());
}

TEST_CASE("mean-only fixed point rows carry the exact one-step value") {
    const fs::path out = temp_dir() / "mean_only_fp.csv";
    CHECK(run("fixed-points --norm mean --beta 2 --pref 0.3 --out " + out.string()) == 0);
    const std::string csv = read_all(out);
    const double expected = grpo::sigmoid(grpo::logit(0.3) + 0.5);
    CHECK(csv.find("," + grpo::format_double(expected) + ",") != std::string::npos);
}

TEST_CASE("json format is accepted") {
    const fs::path out = temp_dir() / "traj.json";
    CHECK(run("trajectory --beta 1 --pref 0.3 --steps 20 --format json --out " +
              out.string()) == 0);
    CHECK(read_all(out).find("\"terminated_by\"") != std::string::npos);
}
