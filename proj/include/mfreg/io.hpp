#pragma once

// File formats.
//
//   quantile row            lo,hi,Q(p_1),...,Q(p_m)
//   correlation matrix      {"r": r, "entries": [[...], ...]}
//   distribution data       CSV, header subject,time,lo,hi,q_1..q_m, one observation per row
//   correlation data        JSON lines {"subject": s, "time": t, "matrix": [[...]]}
//   warp                    CSV t,warp
//   summary curve           CSV t,lambda_hat
//   Monte Carlo runs        CSV case,p,lambda,run,tmise,wmise
//   Monte Carlo summary     CSV case,p,lambda,metric,min,q1,median,q3,max,runs
//
// Reals are written in shortest round-trip form, so every file re-reads to identical doubles.

#include "error.hpp"
#include "extrema.hpp"
#include "geometry.hpp"
#include "lofreg.hpp"
#include "simlab.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace mfreg::io {

  using json = nlohmann::json;

  /// Malformed input; the message carries "source:line:".
  class ParseError : public InvalidInput {
  public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InvalidInput(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
  };

  inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
  }

  inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) { s.remove_prefix(1); }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) { s.remove_suffix(1); }
    if (!s.empty() && s.front() == '+') { s.remove_prefix(1); }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) { return std::nullopt; }
    return v;
  }

  inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) { break; }
      start = comma + 1;
    }
    return out;
  }

  inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) { throw InvalidInput("cannot open '" + path.string() + "'"); }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  /// Writes through a temporary file in the same directory, then renames over `path`.
  inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) { std::filesystem::create_directories(path.parent_path()); }
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) { throw InvalidInput("cannot write '" + tmp.string() + "'"); }
      out << content;
      if (!out) { throw InvalidInput("write failed for '" + tmp.string() + "'"); }
    }
    std::filesystem::rename(tmp, path);
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Single points
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  inline std::string quantile_row(const QuantileFunction& q) {
    std::string s = format_double(q.lo()) + "," + format_double(q.hi());
    for (double v : q.values()) { s += "," + format_double(v); }
    return s;
  }

  /// Parses `lo,hi,Q(p_1),...` fields.
  inline QuantileFunction parse_quantile_fields(std::span<const std::string_view> fields, const std::string& source, std::size_t line) {
    if (fields.size() < 4) { throw ParseError(source, line, "a quantile row needs lo, hi and at least 2 values"); }
    std::vector<double> v;
    v.reserve(fields.size());
    for (auto f : fields) {
      const auto d = parse_double(f);
      if (!d) { throw ParseError(source, line, "not a number: '" + std::string(f) + "'"); }
      v.push_back(*d);
    }
    try {
      return {std::vector<double>(v.begin() + 2, v.end()), v[0], v[1]};
    } catch (const Error& e) {
      throw ParseError(source, line, e.what());
    }
  }

  inline QuantileFunction parse_quantile_row(std::string_view row, const std::string& source = "<row>", std::size_t line = 1) {
    const auto fields = split_csv(row);
    return parse_quantile_fields(fields, source, line);
  }

  inline json correlation_to_json(const CorrelationMatrix& r) {
    return json{{"r", r.dim()}, {"entries", r.matrix().rows()}};
  }

  inline CorrelationMatrix matrix_from_json(const json& entries) {
    if (!entries.is_array()) { throw InvalidInput("matrix must be an array of rows"); }
    std::vector<std::vector<double>> rows;
    for (const auto& row : entries) {
      if (!row.is_array()) { throw InvalidInput("matrix rows must be arrays"); }
      std::vector<double> r;
      for (const auto& v : row) {
        if (!v.is_number()) { throw InvalidInput("matrix entries must be numbers"); }
        r.push_back(v.get<double>());
      }
      rows.push_back(std::move(r));
    }
    return CorrelationMatrix(Matrix::from_rows(rows));
  }

  inline CorrelationMatrix correlation_from_json(const json& j) {
    if (!j.is_object() || !j.contains("r") || !j.contains("entries")) { throw InvalidInput("correlation JSON needs 'r' and 'entries'"); }
    auto r = matrix_from_json(j.at("entries"));
    if (j.at("r").get<std::size_t>() != r.dim()) { throw InvalidInput("correlation JSON: 'r' does not match the entries"); }
    return r;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Per-subject observation files
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  template<Geometry G>
  struct SubjectSeries {
    std::string subject;
    std::vector<double> times;
    std::vector<typename G::Point> points;
  };

  namespace detail {
    template<Geometry G>
    SubjectSeries<G>& series_for(std::vector<SubjectSeries<G>>& all, const std::string& subject) {
      for (auto& s : all) {
        if (s.subject == subject) { return s; }
      }
      all.push_back({subject, {}, {}});
      return all.back();
    }
  }

  /// Distribution CSV; subjects in order of first appearance.
  inline std::vector<SubjectSeries<Wasserstein>> parse_distribution_csv(const std::string& text, const std::string& source) {
    std::vector<SubjectSeries<Wasserstein>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') { line.pop_back(); }
      if (line.empty()) { continue; }
      const auto fields = split_csv(line);
      if (width == 0) {
        if (fields.size() < 6 || fields[0] != "subject" || fields[1] != "time" || fields[2] != "lo" || fields[3] != "hi") {
          throw ParseError(source, lineno, "expected header subject,time,lo,hi,q_1,...,q_m");
        }
        width = fields.size();
        continue;
      }
      if (fields.size() != width) {
        throw ParseError(source, lineno, "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
      }
      const auto t = parse_double(fields[1]);
      if (!t) { throw ParseError(source, lineno, "time is not a number"); }
      auto q = parse_quantile_fields(std::span(fields).subspan(2), source, lineno);
      auto& s = detail::series_for(out, std::string(fields[0]));
      s.times.push_back(*t);
      s.points.push_back(std::move(q));
    }
    if (width == 0) { throw ParseError(source, lineno, "no header found"); }
    return out;
  }

  inline std::string distribution_csv(std::span<const SubjectSeries<Wasserstein>> all) {
    std::string s;
    const std::size_t m = all.empty() || all.front().points.empty() ? 0 : all.front().points.front().values().size();
    s += "subject,time,lo,hi";
    for (std::size_t i = 1; i <= m; ++i) { s += ",q_" + std::to_string(i); }
    s += "\n";
    for (const auto& series : all) {
      for (std::size_t j = 0; j < series.times.size(); ++j) {
        s += series.subject + "," + format_double(series.times[j]) + "," + quantile_row(series.points[j]) + "\n";
      }
    }
    return s;
  }

  inline std::string subject_label(const json& v) {
    if (v.is_string()) { return v.get<std::string>(); }
    if (v.is_number_integer()) { return std::to_string(v.get<long long>()); }
    if (v.is_number()) { return format_double(v.get<double>()); }
    throw InvalidInput("subject must be a string or a number");
  }

  /// Correlation JSON lines; subjects in order of first appearance.
  inline std::vector<SubjectSeries<Correlation>> parse_correlation_jsonl(const std::string& text, const std::string& source) {
    std::vector<SubjectSeries<Correlation>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) { continue; }
      try {
        const json j = json::parse(line);
        if (!j.is_object() || !j.contains("time") || !j.contains("matrix")) {
          throw InvalidInput("each line needs 'time' and 'matrix'");
        }
        const std::string subject = j.contains("subject") ? subject_label(j.at("subject")) : "0";
        if (!j.at("time").is_number()) { throw InvalidInput("time is not a number"); }
        auto r = matrix_from_json(j.at("matrix"));
        auto& s = detail::series_for(out, subject);
        s.times.push_back(j.at("time").get<double>());
        s.points.push_back(std::move(r));
      } catch (const json::exception& e) {
        throw ParseError(source, lineno, e.what());
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(source, lineno, e.what());
      }
    }
    return out;
  }

  inline std::string correlation_jsonl(std::span<const SubjectSeries<Correlation>> all) {
    std::string s;
    for (const auto& series : all) {
      for (std::size_t j = 0; j < series.times.size(); ++j) {
        // Built by hand so reals use the shortest round-trip form.
        std::string row = "{\"subject\":" + json(series.subject).dump() + ",\"time\":" + format_double(series.times[j]) + ",\"matrix\":[";
        const auto& m = series.points[j].matrix();
        for (std::size_t a = 0; a < m.size(); ++a) {
          row += a ? ",[" : "[";
          for (std::size_t b = 0; b < m.size(); ++b) { row += (b ? "," : "") + format_double(m(a, b)); }
          row += "]";
        }
        s += row + "]}\n";
      }
    }
    return s;
  }

  template<Geometry G>
  SubjectSeries<G> as_series(std::string subject, const FittedTrajectory<G>& traj) {
    return {std::move(subject), traj.grid, traj.points};
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Curves and reports
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  inline std::string two_column_csv(std::string_view h1, std::string_view h2, std::span<const double> a, std::span<const double> b) {
    std::string s = std::string(h1) + "," + std::string(h2) + "\n";
    for (std::size_t k = 0; k < a.size(); ++k) { s += format_double(a[k]) + "," + format_double(b[k]) + "\n"; }
    return s;
  }

  inline std::pair<std::vector<double>, std::vector<double>> parse_two_column_csv(const std::string& text, std::string_view h1,
                                                                                  std::string_view h2, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::pair<std::vector<double>, std::vector<double>> out;
    bool header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') { line.pop_back(); }
      if (line.empty()) { continue; }
      const auto f = split_csv(line);
      if (!header) {
        if (f.size() != 2 || f[0] != h1 || f[1] != h2) { throw ParseError(source, lineno, "expected header " + std::string(h1) + "," + std::string(h2)); }
        header = true;
        continue;
      }
      const auto x = f.size() == 2 ? parse_double(f[0]) : std::nullopt;
      const auto y = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
      if (!x || !y) { throw ParseError(source, lineno, "expected two numbers"); }
      out.first.push_back(*x);
      out.second.push_back(*y);
    }
    if (!header) { throw ParseError(source, lineno, "empty file"); }
    return out;
  }

  inline std::string warp_csv(std::span<const double> grid, std::span<const double> values) { return two_column_csv("t", "warp", grid, values); }
  inline std::string summary_curve_csv(const SummaryCurve& c) { return two_column_csv("t", "lambda_hat", c.grid, c.values); }

  inline std::string mise_runs_csv(const MISEReport& r) {
    std::string s = "case,p,lambda,run,tmise,wmise\n";
    for (const auto& e : r.entries) {
      s += std::to_string(e.case_id) + "," + std::to_string(e.p) + "," + format_double(e.lambda) + "," + std::to_string(e.run) + "," +
           format_double(e.tmise) + "," + format_double(e.wmise) + "\n";
    }
    return s;
  }

  inline std::string mise_summary_csv(const MISEReport& r) {
    std::string s = "case,p,lambda,metric,min,q1,median,q3,max,runs\n";
    for (const auto& row : r.summary()) {
      for (int metric = 0; metric < 2; ++metric) {
        const Quartiles& q = metric == 0 ? row.tmise : row.wmise;
        s += std::to_string(r.case_id) + "," + std::to_string(row.p) + "," + format_double(row.lambda) + "," +
             (metric == 0 ? "tmise" : "wmise") + "," + format_double(q.min) + "," + format_double(q.q1) + "," +
             format_double(q.median) + "," + format_double(q.q3) + "," + format_double(q.max) + "," + std::to_string(row.runs) + "\n";
      }
    }
    return s;
  }

  inline std::vector<MiseEntry> parse_mise_runs_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<MiseEntry> out;
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno == 1) {
        if (line != "case,p,lambda,run,tmise,wmise") { throw ParseError(source, lineno, "unexpected header"); }
        continue;
      }
      if (line.empty()) { continue; }
      const auto f = split_csv(line);
      if (f.size() != 6) { throw ParseError(source, lineno, "expected 6 fields"); }
      std::array<double, 6> v{};
      for (std::size_t k = 0; k < 6; ++k) {
        const auto d = parse_double(f[k]);
        if (!d) { throw ParseError(source, lineno, "not a number: '" + std::string(f[k]) + "'"); }
        v[k] = *d;
      }
      out.push_back({static_cast<int>(v[0]), static_cast<std::size_t>(v[1]), v[2], static_cast<std::size_t>(v[3]), v[4], v[5]});
    }
    return out;
  }

} // namespace mfreg::io
