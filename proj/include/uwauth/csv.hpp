#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "uwauth/auth.hpp"
#include "uwauth/error.hpp"
#include "uwauth/estimators.hpp"
#include "uwauth/mobility.hpp"

namespace uwauth {

/// 17-significant-digit rendering; parses back to the
/// identical double.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace csv {

/// Splits one CSV line on commas (no quoting: every field is numeric or a
/// bare token).
inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

/// A header row plus data rows, each tagged with its 1-based line number.
struct Table {
  std::vector<std::string> header;
  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;
  std::string source;

  /// Column index of `name`, or a malformed-header error.
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError(ParseError::Kind::kMalformed, 1, source + ": missing column '" + name + "'");
  }
};

inline Table read(std::istream& in, const std::string& source) {
  Table table;
  table.source = source;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (std::string_view f : split(line)) fields.emplace_back(f);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError(ParseError::Kind::kMalformed, number,
                       source + ": expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    table.rows.push_back({number, std::move(fields)});
  }
  if (!have_header) throw ParseError(ParseError::Kind::kEmpty, 0, source + ": empty input");
  return table;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read(in, path);
}

/// Strict decimal parse of a whole field; NaN and infinities are rejected
/// unless allow_inf is set (then only "inf" is accepted).
inline double parse_double(std::string_view text, std::size_t line, const std::string& source, bool allow_inf = false) {
  if (allow_inf && text == "inf") return INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec == std::errc::result_out_of_range)
    throw ParseError(ParseError::Kind::kNonFinite, line, source + ": value out of range '" + std::string(text) + "'");
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError(ParseError::Kind::kMalformed, line, source + ": not a number '" + std::string(text) + "'");
  if (!std::isfinite(v))
    throw ParseError(ParseError::Kind::kNonFinite, line, source + ": non-finite value '" + std::string(text) + "'");
  return v;
}

inline long long parse_int(std::string_view text, std::size_t line, const std::string& source) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError(ParseError::Kind::kMalformed, line, source + ": not an integer '" + std::string(text) + "'");
  return v;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace csv

// Trajectory file: t_s,x_m,y_m,vx_mps,vy_mps,label

inline std::string trajectory_csv(const LabeledTrajectory& traj) {
  std::ostringstream out;
  out << "t_s,x_m,y_m,vx_mps,vy_mps,label\n";
  for (std::size_t i = 0; i < traj.trace.size(); ++i) {
    const MobilityState& s = traj.trace.samples[i];
    out << format_double(s.t) << ',' << format_double(s.p.x()) << ',' << format_double(s.p.y()) << ','
        << format_double(s.v.x()) << ',' << format_double(s.v.y()) << ',' << (i < traj.labels.size() ? traj.labels[i] : 0)
        << '\n';
  }
  return out.str();
}

inline LabeledTrajectory parse_trajectory(const csv::Table& table) {
  const std::size_t ct = table.column("t_s"), cx = table.column("x_m"), cy = table.column("y_m");
  const std::size_t cvx = table.column("vx_mps"), cvy = table.column("vy_mps"), cl = table.column("label");
  if (table.rows.empty()) throw ParseError(ParseError::Kind::kEmpty, 0, table.source + ": no samples");
  LabeledTrajectory traj;
  for (const auto& row : table.rows) {
    MobilityState s;
    s.t = csv::parse_double(row.fields[ct], row.line, table.source);
    s.p = {csv::parse_double(row.fields[cx], row.line, table.source), csv::parse_double(row.fields[cy], row.line, table.source)};
    s.v = {csv::parse_double(row.fields[cvx], row.line, table.source), csv::parse_double(row.fields[cvy], row.line, table.source)};
    const long long label = csv::parse_int(row.fields[cl], row.line, table.source);
    if (label != 0 && label != 1) throw ParseError(ParseError::Kind::kMalformed, row.line, table.source + ": label must be 0 or 1");
    if (!traj.trace.samples.empty() && !(s.t > traj.trace.samples.back().t))
      throw ParseError(ParseError::Kind::kNonMonotoneTime, row.line, table.source + ": time does not increase");
    traj.trace.samples.push_back(s);
    traj.labels.push_back(static_cast<int>(label));
  }
  return traj;
}

inline LabeledTrajectory load_trajectory(const std::string& path) { return parse_trajectory(csv::read_file(path)); }

// Estimate file: t_s,x_m,y_m (extra columns are ignored, so trajectory files
// load as perfect estimates).

inline std::string estimates_csv(const std::vector<PositionEstimate>& estimates) {
  std::ostringstream out;
  out << "t_s,x_m,y_m\n";
  for (const auto& e : estimates)
    out << format_double(e.t) << ',' << format_double(e.p.x()) << ',' << format_double(e.p.y()) << '\n';
  return out.str();
}

inline std::vector<PositionEstimate> parse_estimates(const csv::Table& table) {
  const std::size_t ct = table.column("t_s"), cx = table.column("x_m"), cy = table.column("y_m");
  if (table.rows.empty()) throw ParseError(ParseError::Kind::kEmpty, 0, table.source + ": no estimates");
  std::vector<PositionEstimate> out;
  double spacing = 0.0;
  for (const auto& row : table.rows) {
    PositionEstimate e;
    e.source = EstimateSource::kExternal;
    e.t = csv::parse_double(row.fields[ct], row.line, table.source);
    e.p = {csv::parse_double(row.fields[cx], row.line, table.source), csv::parse_double(row.fields[cy], row.line, table.source)};
    if (!out.empty()) {
      const double dt = e.t - out.back().t;
      if (!(dt > 0.0))
        throw ParseError(ParseError::Kind::kNonMonotoneTime, row.line, table.source + ": time does not increase");
      if (out.size() == 1) {
        spacing = dt;
      } else if (!is_next_instant(out.back().t, e.t, spacing)) {
        throw ParseError(ParseError::Kind::kIrregularTime, row.line,
                         table.source + ": sampling interval " + format_double(dt) + " s differs from " + format_double(spacing) + " s");
      }
    }
    out.push_back(e);
  }
  return out;
}

inline std::vector<PositionEstimate> load_estimates(const std::string& path) { return parse_estimates(csv::read_file(path)); }

// Prediction log: t_s,xhat_m,yhat_m,xtilde_m,ytilde_m

inline std::string predictions_csv(const std::vector<Prediction>& preds) {
  std::ostringstream out;
  out << "t_s,xhat_m,yhat_m,xtilde_m,ytilde_m\n";
  for (const auto& p : preds)
    out << format_double(p.t) << ',' << format_double(p.predicted.x()) << ',' << format_double(p.predicted.y()) << ','
        << format_double(p.estimate.x()) << ',' << format_double(p.estimate.y()) << '\n';
  return out.str();
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t ct = table.column("t_s"), cxh = table.column("xhat_m"), cyh = table.column("yhat_m");
  const std::size_t cxt = table.column("xtilde_m"), cyt = table.column("ytilde_m");
  std::vector<Prediction> out;
  for (const auto& row : table.rows) {
    Prediction p;
    p.t = csv::parse_double(row.fields[ct], row.line, path);
    p.predicted = {csv::parse_double(row.fields[cxh], row.line, path), csv::parse_double(row.fields[cyh], row.line, path)};
    p.estimate = {csv::parse_double(row.fields[cxt], row.line, path), csv::parse_double(row.fields[cyt], row.line, path)};
    if (!out.empty() && !(p.t > out.back().t))
      throw ParseError(ParseError::Kind::kNonMonotoneTime, row.line, path + ": time does not increase");
    out.push_back(p);
  }
  return out;
}

// Decisions: run_id,t_s,E_m2,decision,truth (decision blank in the pilot phase)

struct DecisionRecord {
  long long run_id = 0;
  AuthSample sample;
};

inline std::string decisions_csv(long long run_id, const std::vector<AuthSample>& samples, bool header = true) {
  std::ostringstream out;
  if (header) out << "run_id,t_s,E_m2,decision,truth\n";
  for (const auto& s : samples) {
    out << run_id << ',' << format_double(s.t) << ',' << format_double(s.error_m2) << ',';
    if (s.decision) out << *s.decision;
    out << ',' << s.truth << '\n';
  }
  return out.str();
}

inline std::vector<DecisionRecord> load_decisions(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t cr = table.column("run_id"), ct = table.column("t_s"), ce = table.column("E_m2");
  const std::size_t cd = table.column("decision"), cg = table.column("truth");
  std::vector<DecisionRecord> out;
  for (const auto& row : table.rows) {
    DecisionRecord r;
    r.run_id = csv::parse_int(row.fields[cr], row.line, path);
    r.sample.t = csv::parse_double(row.fields[ct], row.line, path);
    r.sample.error_m2 = csv::parse_double(row.fields[ce], row.line, path);
    if (r.sample.error_m2 < 0.0) throw ParseError(ParseError::Kind::kMalformed, row.line, path + ": negative metric");
    if (!row.fields[cd].empty()) {
      const long long d = csv::parse_int(row.fields[cd], row.line, path);
      if (d != 0 && d != 1) throw ParseError(ParseError::Kind::kMalformed, row.line, path + ": decision must be 0 or 1");
      r.sample.decision = static_cast<int>(d);
    }
    const long long g = csv::parse_int(row.fields[cg], row.line, path);
    if (g != 0 && g != 1) throw ParseError(ParseError::Kind::kMalformed, row.line, path + ": truth must be 0 or 1");
    r.sample.truth = static_cast<int>(g);
    out.push_back(r);
  }
  return out;
}

// DET: lambda_m2,p_fa,p_md

inline std::string det_csv(const DetCurve& curve) {
  std::ostringstream out;
  out << "lambda_m2,p_fa,p_md\n";
  for (const auto& p : curve.points)
    out << format_double(p.lambda_m2) << ',' << format_double(p.p_fa) << ',' << format_double(p.p_md) << '\n';
  return out.str();
}

inline DetCurve load_det(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t cl = table.column("lambda_m2"), cf = table.column("p_fa"), cm = table.column("p_md");
  DetCurve curve;
  for (const auto& row : table.rows)
    curve.points.push_back({csv::parse_double(row.fields[cl], row.line, path, true), csv::parse_double(row.fields[cf], row.line, path),
                            csv::parse_double(row.fields[cm], row.line, path)});
  return curve;
}

// Error file: t_s,x_m,y_m,xhat_m,yhat_m (true position vs. its estimate)

struct ErrorSample {
  double t = 0.0;
  Vec2 truth = Vec2::Zero();
  Vec2 estimate = Vec2::Zero();
};

inline std::string errors_csv(const std::vector<ErrorSample>& samples) {
  std::ostringstream out;
  out << "t_s,x_m,y_m,xhat_m,yhat_m\n";
  for (const auto& s : samples)
    out << format_double(s.t) << ',' << format_double(s.truth.x()) << ',' << format_double(s.truth.y()) << ','
        << format_double(s.estimate.x()) << ',' << format_double(s.estimate.y()) << '\n';
  return out.str();
}

inline std::vector<ErrorSample> load_errors(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t ct = table.column("t_s"), cx = table.column("x_m"), cy = table.column("y_m");
  const std::size_t cxh = table.column("xhat_m"), cyh = table.column("yhat_m");
  std::vector<ErrorSample> out;
  for (const auto& row : table.rows) {
    ErrorSample s;
    s.t = csv::parse_double(row.fields[ct], row.line, path);
    s.truth = {csv::parse_double(row.fields[cx], row.line, path), csv::parse_double(row.fields[cy], row.line, path)};
    s.estimate = {csv::parse_double(row.fields[cxh], row.line, path), csv::parse_double(row.fields[cyh], row.line, path)};
    out.push_back(s);
  }
  return out;
}

}  // namespace uwauth
