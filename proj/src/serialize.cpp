#include "grpo/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace grpo {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

FiniteWorld parse_world_json(const std::string& text) {
    const ordered_json j = ordered_json::parse(text);
    if (!j.contains("prompts") || !j["prompts"].is_array()) {
        throw std::invalid_argument("world json: missing 'prompts' array");
    }
    std::vector<PromptSpec> prompts;
    for (const auto& pj : j["prompts"]) {
        PromptSpec p;
        p.id = pj.at("id").get<std::string>();
        p.weight = pj.at("weight").get<double>();
        p.outcomes = pj.at("outcomes").get<std::vector<std::string>>();
        p.rewards = pj.at("rewards").get<std::vector<int>>();
        prompts.push_back(std::move(p));
    }
    return FiniteWorld(std::move(prompts));
}

std::string world_to_json(const FiniteWorld& world) {
    ordered_json j;
    j["prompts"] = ordered_json::array();
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        const PromptSpec& p = world.prompt(qi);
        ordered_json pj;
        pj["id"] = p.id;
        pj["weight"] = p.weight;
        pj["outcomes"] = p.outcomes;
        pj["rewards"] = p.rewards;
        j["prompts"].push_back(std::move(pj));
    }
    return j.dump(2) + "\n";
}

ConditionalPolicy parse_policy_json(const FiniteWorld& world, const std::string& text) {
    const ordered_json j = ordered_json::parse(text);
    if (!j.contains("prompts") || !j["prompts"].is_array()) {
        throw std::invalid_argument("policy json: missing 'prompts' array");
    }
    std::vector<std::vector<double>> rows(world.num_prompts());
    std::vector<bool> seen(world.num_prompts(), false);
    for (const auto& pj : j["prompts"]) {
        const std::size_t qi = world.index_of(pj.at("id").get<std::string>());
        rows[qi] = pj.at("policy").get<std::vector<double>>();
        seen[qi] = true;
    }
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        if (!seen[qi]) {
            throw std::invalid_argument("policy json: no row for prompt '" +
                                        world.prompt(qi).id + "'");
        }
    }
    return ConditionalPolicy(world, std::move(rows));
}

std::string policy_to_json(const FiniteWorld& world, const ConditionalPolicy& policy) {
    ordered_json j;
    j["prompts"] = ordered_json::array();
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        ordered_json pj;
        pj["id"] = world.prompt(qi).id;
        pj["policy"] = policy.row(qi);
        j["prompts"].push_back(std::move(pj));
    }
    return j.dump(2) + "\n";
}

FiniteWorld load_world(const std::filesystem::path& path) {
    return parse_world_json(read_file(path));
}

ConditionalPolicy load_policy(const FiniteWorld& world, const std::filesystem::path& path) {
    return parse_policy_json(world, read_file(path));
}

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out.good()) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace grpo
