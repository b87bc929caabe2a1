#include "protoot/feature_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "protoot/errors.hpp"

namespace protoot {

namespace {

constexpr const char* kMagic = "ucir-features";
constexpr int kVersion = 1;

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream stream(line);
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& token, std::size_t line, std::size_t column,
                    const std::string& where) {
    double value = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        throw ParseError("bad " + where + " '" + token + "'", line, column);
    }
    return value;
}

long long parse_integer(const std::string& token, std::size_t line, std::size_t column,
                        const std::string& where) {
    long long value = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        throw ParseError("bad " + where + " '" + token + "'", line, column);
    }
    return value;
}

void save_features(const std::filesystem::path& path, const UnitRowMatrix& features,
                   const std::vector<int>* labels) {
    if (labels && labels->size() != features.rows()) {
        throw DimMismatchError("save_features: label count != row count");
    }
    std::ofstream out(path);
    if (!out) throw IoError("save_features: cannot open " + path.string());
    out << kMagic << ' ' << kVersion << ' ' << features.rows() << ' ' << features.cols() << ' '
        << (labels ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto row = features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ' ';
            out << format_double(row[j]);
        }
        if (labels) out << ' ' << (*labels)[i];
        out << '\n';
    }
    if (!out) throw IoError("save_features: write failed for " + path.string());
}

FeatureFile load_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_features: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header", 1, 1);
    const auto header = split_ws(line);
    if (header.size() != 5 || header[0] != kMagic) {
        throw ParseError("expected 'ucir-features 1 <N> <D> <has_labels>'", 1, 1);
    }
    if (parse_integer(header[1], 1, 2, "version") != kVersion) {
        throw ParseError("unsupported version '" + header[1] + "'", 1, 2);
    }
    const long long n = parse_integer(header[2], 1, 3, "row count");
    const long long d = parse_integer(header[3], 1, 4, "column count");
    const long long has_labels = parse_integer(header[4], 1, 5, "label flag");
    if (n < 1 || d < 1) throw ParseError("row and column counts must be >= 1", 1, 3);
    if (has_labels != 0 && has_labels != 1) throw ParseError("label flag must be 0 or 1", 1, 5);

    const std::size_t rows = static_cast<std::size_t>(n);
    const std::size_t cols = static_cast<std::size_t>(d);
    DenseMatrix features(rows, cols, 0.0);
    std::vector<int> labels;
    if (has_labels) labels.resize(rows);

    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t line_no = i + 2;
        if (!std::getline(in, line)) {
            throw ParseError("header promised " + std::to_string(rows) + " rows", line_no, 1);
        }
        const auto tokens = split_ws(line);
        const std::size_t expected = cols + (has_labels ? 1 : 0);
        if (tokens.size() != expected) {
            throw ParseError("expected " + std::to_string(expected) + " fields, found " +
                                 std::to_string(tokens.size()),
                             line_no, tokens.size() + 1);
        }
        for (std::size_t j = 0; j < cols; ++j) {
            features(i, j) = parse_double(tokens[j], line_no, j + 1, "feature value");
        }
        if (has_labels) {
            labels[i] = static_cast<int>(
                parse_integer(tokens[cols], line_no, cols + 1, "label"));
        }
    }
    // Trailing content beyond the promised rows is a format error.
    while (std::getline(in, line)) {
        if (!split_ws(line).empty()) {
            throw ParseError("unexpected content after " + std::to_string(rows) + " rows",
                             rows + 2, 1);
        }
    }

    FeatureFile out;
    out.features = UnitRowMatrix(std::move(features));
    if (has_labels) out.labels = std::move(labels);
    return out;
}

}  // namespace protoot
