#pragma once

// Reading grouped samples from text files.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace steelrank {

enum class InputFormat { csv_long, csv_wide, whitespace };

inline const char* to_string(InputFormat f) {
    switch (f) {
        case InputFormat::csv_long: return "csv_long";
        case InputFormat::csv_wide: return "csv_wide";
        case InputFormat::whitespace: return "whitespace";
    }
    return "?";
}

inline InputFormat parse_input_format(std::string_view s) {
    if (s == "csv_long") return InputFormat::csv_long;
    if (s == "csv_wide") return InputFormat::csv_wide;
    if (s == "whitespace") return InputFormat::whitespace;
    fail(ErrorKind::parameter, "unknown input format '" + std::string(s) + "'");
}

/// Samples in order of first appearance of their labels.
struct Dataset {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> samples;

    std::vector<double>& group(const std::string& label) {
        for (std::size_t g = 0; g < labels.size(); ++g)
            if (labels[g] == label) return samples[g];
        labels.push_back(label);
        samples.emplace_back();
        return samples.back();
    }

    /// Moves group `label` to the front (control position).
    void move_to_front(const std::string& label) {
        for (std::size_t g = 0; g < labels.size(); ++g) {
            if (labels[g] != label) continue;
            std::rotate(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(g), labels.begin() + static_cast<std::ptrdiff_t>(g) + 1);
            std::rotate(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(g), samples.begin() + static_cast<std::ptrdiff_t>(g) + 1);
            return;
        }
        fail(ErrorKind::data, "unknown group '" + label + "'");
    }

    /// Rounds every value to `digits` decimal places.
    void round_to(int digits) {
        const double scale = std::pow(10.0, digits);
        for (auto& s : samples)
            for (auto& v : s) v = std::round(v * scale) / scale;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline bool parse_number(const std::string& text, double& out) {
    if (text.empty()) return false;
    char* end = nullptr;
    out = std::strtod(text.c_str(), &end);
    return end == text.c_str() + text.size() && std::isfinite(out);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline bool skip_line(const std::string& line) { return line.empty() || line[0] == '#'; }

inline std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace detail

/// Parses one input stream into `data`. Formats:
///   csv_long    `group,value` per line; an optional header line is recognised by a non-numeric value
///   csv_wide    header of group labels, then rows of values; empty cells are skipped (ragged columns)
///   whitespace  `label v1 v2 ...` per line
inline void read_samples(std::istream& in, InputFormat format, Dataset& data) {
    std::string raw;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    bool first = true;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (detail::skip_line(line)) continue;
        switch (format) {
            case InputFormat::csv_long: {
                const auto cells = detail::split_csv(line);
                if (cells.size() != 2) fail(ErrorKind::data, detail::at_line(line_no) + "expected 2 columns `group,value`");
                double v = 0.0;
                if (!detail::parse_number(cells[1], v)) {
                    if (first) break;  // header
                    fail(ErrorKind::data, detail::at_line(line_no) + "non-numeric value '" + cells[1] + "'");
                }
                if (cells[0].empty()) fail(ErrorKind::data, detail::at_line(line_no) + "empty group label");
                data.group(cells[0]).push_back(v);
                break;
            }
            case InputFormat::csv_wide: {
                const auto cells = detail::split_csv(line);
                if (first) {
                    header = cells;
                    for (const auto& label : header) {
                        if (label.empty()) fail(ErrorKind::data, detail::at_line(line_no) + "empty group label");
                        data.group(label);
                    }
                    break;
                }
                if (cells.size() > header.size()) fail(ErrorKind::data, detail::at_line(line_no) + "more cells than header labels");
                for (std::size_t c = 0; c < cells.size(); ++c) {
                    if (cells[c].empty()) continue;
                    double v = 0.0;
                    if (!detail::parse_number(cells[c], v))
                        fail(ErrorKind::data, detail::at_line(line_no) + "non-numeric value '" + cells[c] + "'");
                    data.group(header[c]).push_back(v);
                }
                break;
            }
            case InputFormat::whitespace: {
                std::istringstream fields(line);
                std::string label;
                std::string token;
                fields >> label;
                auto& group = data.group(label);
                while (fields >> token) {
                    double v = 0.0;
                    if (!detail::parse_number(token, v))
                        fail(ErrorKind::data, detail::at_line(line_no) + "non-numeric value '" + token + "'");
                    group.push_back(v);
                }
                break;
            }
        }
        first = false;
    }
    for (std::size_t g = 0; g < data.labels.size(); ++g)
        if (data.samples[g].empty()) fail(ErrorKind::data, "group '" + data.labels[g] + "' has no values");
}

inline Dataset read_samples(const std::vector<std::string>& paths, InputFormat format) {
    if (paths.empty()) fail(ErrorKind::parameter, "no input files");
    Dataset data;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::data, "cannot open '" + path + "'");
        read_samples(in, format, data);
    }
    return data;
}

}  // namespace steelrank
