// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace CLI {
class App;
class Option;
}  // namespace CLI

namespace topoflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitThreshold = 3;

/// Build version in `git describe` form, e.g. v0.1.0-g3f1b3f2-dirty.
std::string version_string();

/// Bad invocation: unknown config key, malformed config file, bad flag value.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text. `#` starts a comment; blank lines are skipped.
/// Underscores in keys read as dashes. UsageError naming `origin` and the
/// line on malformed or duplicate entries.
std::map<std::string, std::string> parse_config_text(std::string_view text, const std::string& origin);

/// Resolved option values of one command, in declaration order.
struct RunConfig {
  std::string command;
  std::vector<std::pair<std::string, std::string>> values;

  std::string get(const std::string& key) const;
  /// {"command", "version", "values": {...}} on one line.
  std::string json() const;
  /// The same values as a config file that reproduces the run.
  std::string config_text() const;
};

/// Options of one subcommand, registered with CLI11 and mirrored so that
/// they can be filled from a config file and serialized afterwards.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app);

  CLI::Option* add(const std::string& name, std::string& var, const std::string& desc);
  CLI::Option* add(const std::string& name, double& var, const std::string& desc);
  /// Also takes std::uint64_t, which is the same type on LP64 targets.
  CLI::Option* add(const std::string& name, std::size_t& var, const std::string& desc);
  CLI::Option* add(const std::string& name, int& var, const std::string& desc);
  CLI::Option* add(const std::string& name, std::vector<std::string>& var, const std::string& desc);
  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc);

  /// True when the option was given on the command line or in the config file.
  bool given(const std::string& name) const;

  /// Applies the config file (flags win) and the OPAL_SEED fallback for
  /// `seed`. Call after CLI11 has parsed the command line.
  void resolve();

  RunConfig run_config() const;

 private:
  struct Entry {
    std::string name;
    CLI::Option* option;
    std::function<std::string()> show;
  };
  CLI::Option* remember(const std::string& name, CLI::Option* opt, std::function<std::string()> show);

  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

/// Comma-separated table. `#` lines before the header carry provenance.
struct Csv {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // npos when absent
  std::string str() const;
};

/// Double quotes group fields that contain commas. topoflow::ParseError with
/// the 1-based row number (header = row 1) when a row has the wrong field count.
Csv parse_csv(std::string_view text);

/// Shortest decimal text that reads back to the same double.
std::string fmt(double v);

/// Columns padded to their widest cell, values verbatim.
std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

/// Variant × task grid of `metric` with a per-variant average column, in
/// first-appearance order. Empty when the columns are missing.
std::string render_grid(const Csv& csv, const std::string& metric);

/// Per-variant means of every numeric column, keyed by variant then column.
std::map<std::string, std::map<std::string, double>> variant_means(const Csv& csv);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::vector<Series>& series);
/// Grouped bars: one group per category, one bar per series entry.
std::string svg_bar_plot(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series);

}  // namespace topoflow::cli
