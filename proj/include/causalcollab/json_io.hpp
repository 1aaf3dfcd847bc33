#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace causalcollab {

using Json = nlohmann::ordered_json;

/// Formats a finite double with 17 significant digits. Integral values keep a
/// trailing ".0" so the number stays visibly floating point.
std::string format_double(double v);

/// Compact JSON serialization with the project-wide float convention. Key
/// order is preserved. Throws NumericalError on non-finite numbers.
std::string dump_json(const Json& j);

/// Pretty variant used for config echo and reports.
std::string dump_json_pretty(const Json& j, int indent = 2);

Json vector_to_json(const Eigen::VectorXd& v);
Json matrix_to_json(const Eigen::MatrixXd& m);  // row-major nested arrays
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace causalcollab
