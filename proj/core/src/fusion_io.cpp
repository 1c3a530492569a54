// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/fusion_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <vector>

#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

enum class Section { header, fusion, rules, omega, proj };

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ": " + msg);
}

std::size_t parse_index(const std::string& tok, std::size_t limit, std::size_t line,
                        const char* what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(line, std::string("invalid ") + what + " '" + tok + "'");
  }
  if (v >= limit) {
    fail(line, std::string(what) + " " + tok + " out of range (limit " + std::to_string(limit) +
                   ")");
  }
  return v;
}

double parse_value(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(line, "invalid number '" + tok + "'");
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

FusionSpec parse_fusion_spec(std::string_view text) {
  FusionSpec spec;
  auto& parts = spec.parts;
  std::size_t n = 0, s = 0, d = 0;
  Section section = Section::header;
  std::map<std::pair<std::size_t, std::size_t>, Tensor> omega;
  std::map<int, std::vector<std::tuple<std::size_t, std::size_t, double>>> proj_entries;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const auto tok = split_ws(raw);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }

    if (tok[0].front() == '[') {
      if (n == 0) fail(line_no, "'types' must precede any section");
      if (tok[0] == "[F]") {
        section = Section::fusion;
      } else if (tok[0] == "[N]") {
        section = Section::rules;
      } else if (tok[0] == "[OMEGA]") {
        if (s == 0) fail(line_no, "'coupling_dim' must precede [OMEGA]");
        section = Section::omega;
      } else if (tok[0] == "[PROJ]") {
        if (d == 0) fail(line_no, "'proj_dim' must precede [PROJ]");
        section = Section::proj;
      } else {
        fail(line_no, "unknown section " + tok[0]);
      }
      continue;
    }

    switch (section) {
      case Section::header: {
        if (tok.size() != 2) fail(line_no, "expected 'key value'");
        if (tok[0] == "types") {
          n = parse_index(tok[1], 1u << 12, line_no, "type count");
          if (n == 0) fail(line_no, "type count must be positive");
          parts.n_types = n;
          parts.fusion = Tensor({n, n, n});
          parts.local_rules = Tensor({n, n, n});
        } else if (tok[0] == "coupling_dim") {
          s = parse_index(tok[1], 1u << 12, line_no, "coupling dimension");
        } else if (tok[0] == "proj_dim") {
          d = parse_index(tok[1], 1u << 20, line_no, "projector dimension");
        } else if (tok[0] == "tolerance") {
          spec.tolerance = parse_value(tok[1], line_no);
        } else {
          fail(line_no, "unknown key '" + tok[0] + "' (valid: types, coupling_dim, proj_dim, tolerance)");
        }
        break;
      }
      case Section::fusion:
      case Section::rules: {
        if (tok.size() != 4) fail(line_no, "expected 'k i j value'");
        const std::size_t k = parse_index(tok[0], n, line_no, "index");
        const std::size_t i = parse_index(tok[1], n, line_no, "index");
        const std::size_t j = parse_index(tok[2], n, line_no, "index");
        Tensor& target = section == Section::fusion ? parts.fusion : parts.local_rules;
        target[fusion_index(n, k, i, j)] = parse_value(tok[3], line_no);
        break;
      }
      case Section::omega: {
        if (tok.size() != 5) fail(line_no, "expected 'i j r c value'");
        const std::size_t i = parse_index(tok[0], 1u << 20, line_no, "primitive index");
        const std::size_t j = parse_index(tok[1], 1u << 20, line_no, "primitive index");
        const std::size_t r = parse_index(tok[2], s, line_no, "row");
        const std::size_t c = parse_index(tok[3], s, line_no, "column");
        auto [it, inserted] = omega.try_emplace({i, j}, Tensor({s, s}));
        it->second(r, c) = parse_value(tok[4], line_no);
        break;
      }
      case Section::proj: {
        if (tok.size() != 4) fail(line_no, "expected 'sector row col value'");
        const auto sector = static_cast<int>(parse_index(tok[0], 1u << 20, line_no, "sector"));
        const std::size_t r = parse_index(tok[1], d, line_no, "row");
        const std::size_t c = parse_index(tok[2], d, line_no, "column");
        proj_entries[sector].emplace_back(r, c, parse_value(tok[3], line_no));
        break;
      }
    }
    if (end == text.size()) break;
  }
  if (n == 0) throw ParseError("missing 'types' declaration");

  parts.couplings = std::move(omega);
  for (auto& [sector, entries] : proj_entries) {
    std::size_t rank = 0;
    for (const auto& e : entries) rank = std::max(rank, std::get<1>(e) + 1);
    Tensor basis({d, rank});
    for (const auto& [r, c, v] : entries) basis(r, c) = v;
    parts.projectors.push_back(Projector{sector, std::move(basis)});
  }
  return spec;
}

FusionSpec read_fusion_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open fusion spec '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_fusion_spec(buf.str());
}

FusionSystem load_fusion_system(std::string_view text) {
  FusionSpec spec = parse_fusion_spec(text);
  std::vector<Projector> checked;
  for (auto& p : spec.parts.projectors) checked.push_back(make_projector(p.sector_id, p.basis));
  spec.parts.projectors = std::move(checked);
  return FusionSystem::create(std::move(spec.parts), spec.tolerance);
}

std::string format_fusion_spec(const FusionSystem& fs) {
  const std::size_t n = fs.n_types();
  std::ostringstream out;
  out << "types " << n << '\n';
  if (fs.coupling_dim()) out << "coupling_dim " << fs.coupling_dim() << '\n';
  if (!fs.projectors().empty()) out << "proj_dim " << fs.projectors().front().dim() << '\n';
  out << "tolerance " << fmt(fs.tolerance()) << '\n';

  auto dump_cube = [&](const char* header, const Tensor& t) {
    out << header << '\n';
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double v = t[fusion_index(n, k, i, j)];
          if (v != 0.0) out << k << ' ' << i << ' ' << j << ' ' << fmt(v) << '\n';
        }
  };
  dump_cube("[F]", fs.fusion());
  dump_cube("[N]", fs.local_rules());

  if (!fs.couplings().empty()) {
    out << "[OMEGA]\n";
    for (const auto& [key, omega] : fs.couplings())
      for (std::size_t r = 0; r < omega.rows(); ++r)
        for (std::size_t c = 0; c < omega.cols(); ++c)
          if (omega(r, c) != 0.0)
            out << key.first << ' ' << key.second << ' ' << r << ' ' << c << ' ' << fmt(omega(r, c))
                << '\n';
  }
  if (!fs.projectors().empty()) {
    out << "[PROJ]\n";
    for (const Projector& p : fs.projectors())
      for (std::size_t r = 0; r < p.basis.rows(); ++r)
        for (std::size_t c = 0; c < p.basis.cols(); ++c)
          if (p.basis(r, c) != 0.0)
            out << p.sector_id << ' ' << r << ' ' << c << ' ' << fmt(p.basis(r, c)) << '\n';
  }
  return out.str();
}

}  // namespace topoflow
