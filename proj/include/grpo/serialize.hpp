#pragma once

#include <filesystem>
#include <string>

#include "grpo/world.hpp"

namespace grpo {

// World schema:
//   {"prompts":[{"id":"q0","weight":0.5,"outcomes":["a","b"],"rewards":[1,0]}, ...]}
// Policy schema, parallel probability arrays against the world's outcome order:
//   {"prompts":[{"id":"q0","policy":[0.3,0.7]}, ...]}
FiniteWorld parse_world_json(const std::string& text);
std::string world_to_json(const FiniteWorld& world);

ConditionalPolicy parse_policy_json(const FiniteWorld& world, const std::string& text);
std::string policy_to_json(const FiniteWorld& world, const ConditionalPolicy& policy);

FiniteWorld load_world(const std::filesystem::path& path);
ConditionalPolicy load_policy(const FiniteWorld& world, const std::filesystem::path& path);

// Shortest round-trip decimal form; locale-free, so emitted files are
// byte-stable across runs and platforms.
std::string format_double(double v);

// Writes text through a temporary file and renames into place, so a failed
// run never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace grpo
