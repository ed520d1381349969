#pragma once

// Structural checks on emitted report files, shared by unit and acceptance tests.

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace testing {

// Throws if the file is not well-formed XML.
inline boost::property_tree::ptree read_xml_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(path.string(), tree);
  return tree;
}

inline bool well_formed_svg(const std::filesystem::path& path, std::string* error = nullptr) {
  try {
    const auto tree = read_xml_file(path);
    return tree.get_child_optional("svg").has_value();
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return false;
  }
}

// (concept id, accuracy) of every background bar, in drawing order.
inline std::vector<std::pair<int, double>> background_bars(const std::filesystem::path& svg) {
  const auto tree = read_xml_file(svg);
  std::vector<std::pair<int, double>> bars;
  for (const auto& [tag, node] : tree.get_child("svg")) {
    if (tag != "g" || node.get("<xmlattr>.id", "") != "background") continue;
    for (const auto& [rtag, rect] : node) {
      if (rtag != "rect") continue;
      bars.emplace_back(rect.get<int>("<xmlattr>.data-concept"), rect.get<double>("<xmlattr>.data-accuracy"));
    }
  }
  return bars;
}

// Bars form a permutation of `expected_ids`, sorted by descending accuracy
// with ties in ascending id order.
inline bool ordering_is_valid(const std::vector<std::pair<int, double>>& bars, const std::set<int>& expected_ids) {
  std::set<int> ids;
  for (const auto& b : bars) ids.insert(b.first);
  if (ids != expected_ids || ids.size() != bars.size()) return false;
  for (std::size_t i = 1; i < bars.size(); ++i) {
    const auto& [pid, pa] = bars[i - 1];
    const auto& [id, a] = bars[i];
    if (!(a <= pa)) return false;
    if (a == pa && id < pid) return false;
  }
  return true;
}

inline std::string first_line(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

inline std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

inline std::size_t polyline_count(const std::filesystem::path& svg) {
  std::ifstream in(svg);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t n = 0;
  for (auto pos = text.find("<polyline"); pos != std::string::npos; pos = text.find("<polyline", pos + 1)) ++n;
  return n;
}

}  // namespace testing
