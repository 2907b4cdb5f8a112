#pragma once

// CSV output with round-trip exact doubles, plus the timeline schema.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "rotor_engine/autonomous_engine.hpp"

namespace rotor::io {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double x) { return fmt::format("{:.17g}", x); }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    write_line(header);
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_) {
      throw std::logic_error(fmt::format("csv row has {} values, header has {}", values.size(), columns_));
    }
    std::string line;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) line += ',';
      line += format_double(values[i]);
    }
    line += '\n';
    out_ << line;
    check();
  }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError("failed to finish writing " + path_.string());
  }

 private:
  void write_line(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    out_ << line << '\n';
    check();
  }
  void check() {
    if (!out_) throw IoError("write to " + path_.string() + " failed");
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

inline const std::vector<std::string>& timeline_columns() {
  static const std::vector<std::string> cols = {
      "t_kappa", "mean_L_hbar", "std_L_hbar", "W_int",      "W_kin",    "W_net",      "Q_BA",    "W_erg",
      "W_erg_rate", "S_sys_rate", "S_h_rate", "S_c_rate", "S_net_rate", "trace_err", "edge_pop"};
  return cols;
}

inline std::vector<double> timeline_row(const autonomous::PowerReport& r) {
  return {r.t,     r.mean_L,     r.std_L,      r.W_int,    r.W_kin,    r.W_net,      r.Q_BA,    r.W_erg,
          r.W_erg_rate, r.S_sys_rate, r.S_h_rate, r.S_c_rate, r.S_net_rate, r.trace_err, r.edge_pop};
}

/// Writes the timeline as CSV. Time is in units 1/kappa, angular momentum in hbar, powers in
/// hbar kappa^2 and entropy rates in k_B kappa.
inline void emit_timeline(const autonomous::ObservableTimeline& timeline, const std::filesystem::path& path) {
  CsvWriter w(path, timeline_columns());
  for (const auto& r : timeline.rows) w.row(timeline_row(r));
  w.close();
}

/// Minimal CSV reader for numeric tables written by CsvWriter.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = s.find(',', start);
      cells.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& c : split(line)) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (out.fail()) throw IoError("write to " + path.string() + " failed");
}

}  // namespace rotor::io
