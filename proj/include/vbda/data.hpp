// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vbda/common.hpp"
#include "vbda/margins.hpp"

namespace vbda {

/// T x r panel, row-major by time.
struct SeriesData {
  int T = 0;
  int r = 0;
  std::vector<double> values;
  std::vector<std::string> names;
  std::string source{};      ///< file name when read from text
  std::vector<int> line_of{};  ///< source line per row; empty for in-memory data

  /// "source:line" of row t when read from text, otherwise "row t+1".
  std::string where(int t) const {
    if (static_cast<std::size_t>(t) < line_of.size()) return source + ":" + std::to_string(line_of[static_cast<std::size_t>(t)]);
    return "row " + std::to_string(t + 1);
  }

  double at(int t, int l) const { return values[static_cast<std::size_t>(t) * static_cast<std::size_t>(r) + static_cast<std::size_t>(l)]; }

  std::vector<double> column(int l) const {
    std::vector<double> out(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) out[static_cast<std::size_t>(t)] = at(t, l);
    return out;
  }

  /// Last `rows` time points (all of them when rows >= T).
  SeriesData tail(int rows) const {
    SeriesData out = *this;
    const int keep = std::min(rows, T);
    out.T = keep;
    out.values.assign(values.end() - static_cast<std::ptrdiff_t>(keep) * r, values.end());
    if (!line_of.empty()) out.line_of.assign(line_of.end() - keep, line_of.end());
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

/// Reads a numeric CSV. A first row that does not parse as numbers is taken as a header.
inline SeriesData read_series_csv(std::istream& in, const std::string& source = "<input>") {
  SeriesData data;
  data.source = source;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    for (auto& c : cells) c = detail::trim(c);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t k = 0; k < cells.size(); ++k) numeric = numeric && detail::parse_double(cells[k], row[k]);
    if (first) {
      first = false;
      data.r = static_cast<int>(cells.size());
      if (!numeric) {
        data.names = cells;
        continue;
      }
    }
    if (static_cast<int>(cells.size()) != data.r) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(data.r) +
                         " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!detail::parse_double(cells[k], row[k]) || !std::isfinite(row[k])) {
        throw InvalidInput(source + ":" + std::to_string(line_no) + ": column " + std::to_string(k + 1) +
                           " is not a finite number ('" + cells[k] + "')");
      }
    }
    data.values.insert(data.values.end(), row.begin(), row.end());
    data.line_of.push_back(line_no);
    ++data.T;
  }
  if (data.T == 0) throw InvalidInput(source + ": no data rows");
  if (data.names.empty()) {
    for (int l = 0; l < data.r; ++l) data.names.push_back("y" + std::to_string(l + 1));
  }
  return data;
}

inline SeriesData read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return read_series_csv(in, path);
}

inline void write_series_csv(std::ostream& out, const SeriesData& data) {
  out << std::setprecision(17);
  for (int l = 0; l < data.r; ++l) out << (l ? "," : "") << data.names[static_cast<std::size_t>(l)];
  out << '\n';
  for (int t = 0; t < data.T; ++t) {
    for (int l = 0; l < data.r; ++l) out << (l ? "," : "") << data.at(t, l);
    out << '\n';
  }
}

/// Checks the column count and that discrete columns are integer valued.
inline void check_kinds(const SeriesData& data, const std::vector<SeriesKind>& kinds) {
  if (static_cast<int>(kinds.size()) != data.r) {
    throw InvalidInput("got " + std::to_string(kinds.size()) + " series types for " + std::to_string(data.r) + " columns");
  }
  for (int t = 0; t < data.T; ++t) {
    for (int l = 0; l < data.r; ++l) {
      const double y = data.at(t, l);
      if (kinds[static_cast<std::size_t>(l)] == SeriesKind::kDiscrete && y != std::floor(y)) {
        throw InvalidInput(data.where(t) + ": column " + std::to_string(l + 1) + " is discrete but holds " +
                           std::to_string(y));
      }
    }
  }
}

/// Empirical margins per column.
inline std::vector<Margin> fit_margins(const SeriesData& data, const std::vector<SeriesKind>& kinds) {
  check_kinds(data, kinds);
  std::vector<Margin> out;
  for (int l = 0; l < data.r; ++l) {
    const auto col = data.column(l);
    if (kinds[static_cast<std::size_t>(l)] == SeriesKind::kDiscrete) {
      try {
        out.emplace_back(OrdinalMargin::fit_empirical(to_ordinal(col)));
      } catch (const InvalidInput& e) {
        throw InvalidInput("column " + std::to_string(l + 1) + ": " + e.what());
      }
    } else {
      out.emplace_back(ContinuousMargin::fit_empirical(col));
    }
  }
  return out;
}

/// Latent boxes of the flattened cells i = l + r * t. Continuous cells are point masses
/// with lower == upper == G(y) and no latent coordinate.
struct LatentBoxes {
  int T = 0;
  int r = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> latent_of;        ///< latent index per cell, -1 for continuous cells
  std::vector<std::size_t> cell_of;  ///< cell per latent index

  std::size_t cells() const noexcept { return lower.size(); }
  std::size_t n_latent() const noexcept { return cell_of.size(); }
  bool is_latent(std::size_t cell) const noexcept { return latent_of[cell] >= 0; }

  /// Full PIT vector with every continuous cell at its fixed value and latent cells at
  /// their box midpoints.
  std::vector<double> midpoint_fill() const {
    std::vector<double> u(cells());
    for (std::size_t i = 0; i < cells(); ++i) u[i] = 0.5 * (lower[i] + upper[i]);
    return u;
  }

  static LatentBoxes build(const SeriesData& data, const std::vector<Margin>& margins) {
    if (static_cast<int>(margins.size()) != data.r) throw InvalidInput("one margin per column required");
    LatentBoxes b;
    b.T = data.T;
    b.r = data.r;
    for (int t = 0; t < data.T; ++t) {
      for (int l = 0; l < data.r; ++l) {
        const double y = data.at(t, l);
        const auto& m = margins[static_cast<std::size_t>(l)];
        if (const auto* om = std::get_if<OrdinalMargin>(&m)) {
          if (y != std::floor(y)) {
            throw InvalidInput(data.where(t) + ": column " + std::to_string(l + 1) +
                               " is discrete but holds a non-integer value");
          }
          std::pair<double, double> box;
          try {
            box = om->bounds(static_cast<std::int64_t>(y));
          } catch (const UnknownCategory& e) {
            throw UnknownCategory(data.where(t) + ": column " + std::to_string(l + 1) + ": " + e.what());
          }
          const auto [a, ub] = box;
          b.latent_of.push_back(static_cast<int>(b.cell_of.size()));
          b.cell_of.push_back(b.lower.size());
          b.lower.push_back(a);
          b.upper.push_back(ub);
        } else {
          const double u = std::get<ContinuousMargin>(m).pit(y);
          b.latent_of.push_back(-1);
          b.lower.push_back(u);
          b.upper.push_back(u);
        }
      }
    }
    return b;
  }
};

}  // namespace vbda
