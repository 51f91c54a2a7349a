#pragma once

// Internal JSON helpers shared by the checkpoint writers.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "voltreg/mlp.hpp"

namespace voltreg::detail {

inline constexpr int kMlpFormatVersion = 1;

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

}  // namespace voltreg::detail
