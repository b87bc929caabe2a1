#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protoot/matrix.hpp"

namespace protoot {

// Text feature file:
//   line 1:  ucir-features 1 <N> <D> <has_labels:0|1>
//   then N lines of D floats separated by single spaces; with labels, each
//   line ends with one integer label.
// Floats are written in shortest round-trip form, so save -> load -> save is
// byte-identical and load reconstructs the exact doubles.
struct FeatureFile {
    UnitRowMatrix features;
    std::optional<std::vector<int>> labels;
};

void save_features(const std::filesystem::path& path, const UnitRowMatrix& features,
                   const std::vector<int>* labels = nullptr);
FeatureFile load_features(const std::filesystem::path& path);

// Shortest round-trip decimal form of a double (std::to_chars).
std::string format_double(double value);

// Strict double/integer parusers used by every text format here; `where`
// names the field for error messages.
double parse_double(const std::string& token, std::size_t line, std::size_t column,
                    const std::string& where);
long long parse_integer(const std::string& token, std::size_t line, std::size_t column,
                        const std::string& where);

}  // namespace protoot
