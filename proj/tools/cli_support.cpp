// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli_support.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <type_traits>

#include "CLI11.hpp"
#include "json.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/io.hpp"

#ifndef TOPOFLOW_GIT_DESCRIBE
#define TOPOFLOW_GIT_DESCRIBE "v0.0.0-unknown"
#endif

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed options are registered as std::size_t");

namespace topoflow::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote");
  out.push_back(cur);
  return out;
}

std::string quote_field(const std::string& f) {
  if (f.find_first_of(",\"\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string version_string() { return TOPOFLOW_GIT_DESCRIBE; }

std::map<std::string, std::string> parse_config_text(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value', got '" + body + "'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw UsageError(where + "missing key before '='");
    std::replace(key.begin(), key.end(), '_', '-');
    if (!out.emplace(key, value).second) throw UsageError(where + "duplicate key '" + key + "'");
  }
  return out;
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  throw LookupError("run config has no key '" + key + "'");
}

std::string RunConfig::json() const {
  nlohmann::ordered_json vals = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values) vals[k] = v;
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version_string();
  j["values"] = vals;
  return j.dump();
}

std::string RunConfig::config_text() const {
  std::string out = "# topoflow " + command + " " + version_string() + "\n";
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

OptionSet::OptionSet(CLI::App* app) : app_(app) {
  app_->add_option("--config", config_path_, "Flat 'key = value' file; command-line flags win");
}

CLI::Option* OptionSet::remember(const std::string& name, CLI::Option* opt, std::function<std::string()> show) {
  entries_.push_back(Entry{name, opt, std::move(show)});
  return opt;
}

CLI::Option* OptionSet::add(const std::string& name, std::string& var, const std::string& desc) {
  return remember(name, app_->add_option("--" + name, var, desc)->capture_default_str(), [&var] { return var; });
}

CLI::Option* OptionSet::add(const std::string& name, double& var, const std::string& desc) {
  return remember(name, app_->add_option("--" + name, var, desc)->capture_default_str(),
                  [&var] { return fmt(var); });
}

CLI::Option* OptionSet::add(const std::string& name, std::size_t& var, const std::string& desc) {
  return remember(name, app_->add_option("--" + name, var, desc)->capture_default_str(),
                  [&var] { return std::to_string(var); });
}

CLI::Option* OptionSet::add(const std::string& name, int& var, const std::string& desc) {
  return remember(name, app_->add_option("--" + name, var, desc)->capture_default_str(),
                  [&var] { return std::to_string(var); });
}

CLI::Option* OptionSet::add(const std::string& name, std::vector<std::string>& var, const std::string& desc) {
  return remember(name, app_->add_option("--" + name, var, desc)->delimiter(',')->capture_default_str(),
                  [&var] { return join(var, ","); });
}

CLI::Option* OptionSet::flag(const std::string& name, bool& var, const std::string& desc) {
  return remember(name, app_->add_flag("--" + name, var, desc),
                  [&var] { return std::string(var ? "true" : "false"); });
}

bool OptionSet::given(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e.option->count() > 0;
  return false;
}

void OptionSet::resolve() {
  auto set = [](const Entry& e, const std::string& value, const std::string& origin) {
    try {
      e.option->add_result(value);
      e.option->run_callback();
    } catch (const CLI::Error& err) {
      throw UsageError(origin + ": invalid value '" + value + "' for '" + e.name + "': " + err.what());
    }
  };
  if (!config_path_.empty()) {
    std::string text;
    try {
      text = read_file(config_path_);
    } catch (const ParseError&) {
      throw UsageError("config file '" + config_path_ + "' does not exist or cannot be read");
    }
    for (const auto& [key, value] : parse_config_text(text, config_path_)) {
      auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == key; });
      if (it == entries_.end()) {
        std::vector<std::string> names;
        for (const Entry& e : entries_) names.push_back(e.name);
        std::sort(names.begin(), names.end());
        throw UsageError("unknown config key '" + key + "' in '" + config_path_ + "'; valid keys: " +
                         join(names, ", "));
      }
      if (it->option->count() == 0) set(*it, value, config_path_);
    }
  }
  auto seed = std::find_if(entries_.begin(), entries_.end(), [](const Entry& e) { return e.name == "seed"; });
  if (seed != entries_.end() && seed->option->count() == 0) {
    if (const char* env = std::getenv("OPAL_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string s = env;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError("OPAL_SEED must be an unsigned integer, got '" + s + "'");
      set(*seed, s, "OPAL_SEED");
    }
  }
}

RunConfig OptionSet::run_config() const {
  RunConfig rc;
  rc.command = app_->get_name();
  for (const Entry& e : entries_) rc.values.emplace_back(e.name, e.show());
  return rc;
}

std::size_t Csv::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? std::string::npos : static_cast<std::size_t>(it - header.begin());
}

std::string Csv::str() const {
  std::string out;
  for (const std::string& c : comments) out += "# " + c + "\n";
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + quote_field(fields[i]);
    out += "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

Csv parse_csv(std::string_view text) {
  Csv csv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0, row_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (row_no == 0 && line.starts_with("#")) {
      csv.comments.push_back(trim(std::string_view(line).substr(1)));
      continue;
    }
    ++row_no;
    std::vector<std::string> fields;
    try {
      fields = split_record(line);
    } catch (const ParseError& e) {
      throw ParseError("malformed CSV at row " + std::to_string(row_no) + " (line " + std::to_string(line_no) +
                       "): " + e.what());
    }
    if (row_no == 1) {
      csv.header = std::move(fields);
      continue;
    }
    if (fields.size() != csv.header.size()) {
      throw ParseError("malformed CSV at row " + std::to_string(row_no) + " (line " + std::to_string(line_no) +
                       "): expected " + std::to_string(csv.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    csv.rows.push_back(std::move(fields));
  }
  return csv;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    std::string l;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      l += fields[c];
      if (c + 1 < fields.size()) l += std::string(width[c] - fields[c].size() + 2, ' ');
    }
    out += l + "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.emplace_back(w, '-');
  if (!header.empty()) line(rule);
  for (const auto& r : rows) line(r);
  return out;
}

std::string render_grid(const Csv& csv, const std::string& metric) {
  const std::size_t ct = csv.column("task"), cv = csv.column("model_variant"), cm = csv.column(metric);
  if (ct == std::string::npos || cv == std::string::npos || cm == std::string::npos || csv.rows.empty()) return "";
  std::vector<std::string> tasks, variants;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> cells;
  std::map<std::pair<std::string, std::string>, std::string> raw;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    double v = 0.0;
    if (!parse_double(row[cm], v)) {
      throw ParseError("malformed CSV at row " + std::to_string(r + 2) + ": '" + metric + "' value '" + row[cm] +
                       "' is not a number");
    }
    if (std::find(tasks.begin(), tasks.end(), row[ct]) == tasks.end()) tasks.push_back(row[ct]);
    if (std::find(variants.begin(), variants.end(), row[cv]) == variants.end()) variants.push_back(row[cv]);
    auto& cell = cells[{row[cv], row[ct]}];
    cell.first += v;
    cell.second += 1;
    raw[{row[cv], row[ct]}] = row[cm];
  }
  std::vector<std::string> header{"variant"};
  header.insert(header.end(), tasks.begin(), tasks.end());
  header.push_back("average");
  std::vector<std::vector<std::string>> rows;
  for (const std::string& var : variants) {
    std::vector<std::string> row{var};
    double sum = 0.0;
    int n = 0;
    for (const std::string& t : tasks) {
      const auto it = cells.find({var, t});
      if (it == cells.end()) {
        row.emplace_back("-");
        continue;
      }
      const double mean = it->second.first / it->second.second;
      row.push_back(it->second.second == 1 ? raw[{var, t}] : short_fmt(mean));
      sum += mean;
      ++n;
    }
    row.push_back(n ? short_fmt(sum / n) : "-");
    rows.push_back(std::move(row));
  }
  return metric + " by variant\n" + render_table(header, rows);
}

std::map<std::string, std::map<std::string, double>> variant_means(const Csv& csv) {
  std::map<std::string, std::map<std::string, double>> out;
  const std::size_t cv = csv.column("model_variant");
  if (cv == std::string::npos) return out;
  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& row : csv.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      double v = 0.0;
      if (c == cv || csv.header[c] == "task" || !parse_double(row[c], v)) continue;
      out[row[cv]][csv.header[c]] += v;
      ++counts[row[cv]][csv.header[c]];
    }
  }
  for (auto& [var, cols] : out)
    for (auto& [col, sum] : cols) sum /= counts[var][col];
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr double kW = 640, kH = 400, kL = 70, kR = 150, kT = 40, kB = 50;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string text_at(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"%d\" text-anchor=\"%s\">", x, y, size,
                anchor);
  return buf + esc(s) + "</text>\n";
}

std::string frame(const std::string& title, double lo, double hi) {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                    "font-family=\"sans-serif\">\n<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += text_at(kW / 2, 24, title, "middle", 14);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                kL, kT, kL, kH - kB, kL, kH - kB, kW - kR, kH - kB);
  out += buf;
  out += text_at(kL - 6, kH - kB + 4, short_fmt(lo), "end");
  out += text_at(kL - 6, kT + 4, short_fmt(hi), "end");
  return out;
}

void range_of(const std::vector<Series>& series, double& lo, double& hi, bool include_zero) {
  lo = include_zero ? 0.0 : INFINITY;
  hi = include_zero ? 0.0 : -INFINITY;
  for (const Series& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi <= lo) hi = lo + 1.0;
}

std::string legend(const std::vector<Series>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>\n",
                  kW - kR + 12, kT + 18.0 * i, kPalette[i % 6]);
    out += buf + text_at(kW - kR + 30, kT + 18.0 * i + 11, series[i].name);
  }
  return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::vector<Series>& series) {
  double lo, hi;
  range_of(series, lo, hi, false);
  double xlo = INFINITY, xhi = -INFINITY;
  for (const Series& s : series)
    for (double x : s.x) xlo = std::min(xlo, x), xhi = std::max(xhi, x);
  if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0;
  if (xhi <= xlo) xhi = xlo + 1.0;
  std::string out = frame(title, lo, hi);
  out += text_at((kL + kW - kR) / 2, kH - 12, x_label, "middle");
  out += text_at(kL, kH - kB + 18, short_fmt(xlo), "middle");
  out += text_at(kW - kR, kH - kB + 18, short_fmt(xhi), "middle");
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (std::size_t p = 0; p < series[i].x.size() && p < series[i].y.size(); ++p) {
      if (!std::isfinite(series[i].y[p])) continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", kL + (series[i].x[p] - xlo) / (xhi - xlo) * (kW - kL - kR),
                    kH - kB - (series[i].y[p] - lo) / (hi - lo) * (kH - kT - kB));
      pts += buf;
    }
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(kPalette[i % 6]) + "\" points=\"" +
           pts + "\"/>\n";
  }
  return out + legend(series) + "</svg>\n";
}

std::string svg_bar_plot(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series) {
  double lo, hi;
  range_of(series, lo, hi, true);
  std::string out = frame(title, lo, hi);
  const double group = (kW - kL - kR) / std::max<std::size_t>(categories.size(), 1);
  const double bar = group * 0.8 / std::max<std::size_t>(series.size(), 1);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    out += text_at(kL + group * (c + 0.5), kH - kB + 18, categories[c], "middle");
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (c >= series[i].y.size() || !std::isfinite(series[i].y[c])) continue;
      const double y0 = kH - kB - (0.0 - lo) / (hi - lo) * (kH - kT - kB);
      const double y1 = kH - kB - (series[i].y[c] - lo) / (hi - lo) * (kH - kT - kB);
      char buf[200];
      std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                    kL + group * c + group * 0.1 + bar * i, std::min(y0, y1), bar, std::abs(y1 - y0),
                    kPalette[i % 6]);
      out += buf;
    }
  }
  return out + legend(series) + "</svg>\n";
}

}  // namespace topoflow::cli
