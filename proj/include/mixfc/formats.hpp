#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mixfc/errors.hpp"
#include "mixfc/family.hpp"
#include "mixfc/fitting.hpp"
#include "mixfc/mixture.hpp"
#include "mixfc/parallel.hpp"
#include "mixfc/representations.hpp"

namespace mixfc {

enum class Kind { Bin, Quantile, Mixture };

constexpr std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::Bin: return "bin";
    case Kind::Quantile: return "quantile";
    case Kind::Mixture: return "mixture";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  if (s == "bin") return Kind::Bin;
  if (s == "quantile") return Kind::Quantile;
  if (s == "mixture") return Kind::Mixture;
  return std::nullopt;
}

/// Value of the `type` column for rows of each kind.
constexpr std::string_view type_tag(Kind k) {
  switch (k) {
    case Kind::Bin: return "bin";
    case Kind::Quantile: return "quantile";
    case Kind::Mixture: return "dist";
  }
  return "?";
}

struct ForecastKey {
  std::string location;
  std::string target;
  std::string unit;

  friend auto operator<=>(const ForecastKey&, const ForecastKey&) = default;
  friend bool operator==(const ForecastKey&, const ForecastKey&) = default;

  std::string str() const { return location + " | " + target + " | " + unit; }
};

using Forecast = std::variant<BinForecast, QuantileForecast, Mixture>;

/// First and last data row (1-based, header is row 1) of a forecast.
struct RowSpan {
  std::size_t first = 0;
  std::size_t last = 0;
};

struct SubmissionTable {
  Kind kind = Kind::Mixture;
  std::map<ForecastKey, Forecast> entries;
  std::string source;
  std::map<ForecastKey, RowSpan> rows;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  // Provenance and warnings are not part of the table's value.
  friend bool operator==(const SubmissionTable& a, const SubmissionTable& b) {
    return a.kind == b.kind && a.entries == b.entries;
  }
};

struct TruthTable {
  std::map<ForecastKey, double> values;

  std::optional<double> find(const ForecastKey& k) const {
    auto it = values.find(k);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  friend bool operator==(const TruthTable&, const TruthTable&) = default;
};

struct Diagnostic {
  std::size_t row = 0;
  std::string column;
  std::string key;
  std::string message;

  std::string str() const { return ParseError(row, column, key, message).what(); }
};

/// Forecasts that passed validation plus one diagnostic per rejected row or
/// forecast.
struct ParseOutcome {
  SubmissionTable table;
  std::vector<Diagnostic> diagnostics;
  bool ok() const noexcept { return diagnostics.empty(); }
};

namespace csv {

/// Comma-separated records with RFC 4180 quoting; accepts LF and CRLF.
inline std::vector<std::vector<std::string>> read(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  bool any = false;
  auto trim = [](std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
      s.clear();
      return;
    }
    s = s.substr(b, s.find_last_not_of(" \t") - b + 1);
  };
  auto end_field = [&] {
    if (!field_was_quoted) trim(field);
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
    any = false;
  };
  char ch;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
      field_was_quoted = true;
      field.clear();
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      end_record();
    } else if (ch == '\n') {
      end_record();
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (any || !field.empty() || !record.empty()) end_record();
  return records;
}

inline std::string quote(std::string_view s) {
  const bool padded = !s.empty() && (s.front() == ' ' || s.front() == '\t' || s.back() == ' ' || s.back() == '\t');
  if (!padded && s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace csv

/// Shortest decimal rendering that parses back to the same double.
inline std::string format_real(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_real(*x) : "NA"; }

/// Strict decimal parse of a whole cell.
inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool is_missing(std::string_view s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

namespace detail {

struct Header {
  std::map<std::string, std::size_t> index;

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

inline Header read_header(const std::vector<std::string>& row, std::span<const std::string_view> required) {
  Header h;
  for (std::size_t i = 0; i < row.size(); ++i) {
    std::string name = row[i];
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.erase(0, 3);
    if (!h.index.emplace(name, i).second) throw FormatError("header: duplicate column '" + name + "'");
  }
  for (auto name : required) {
    if (!h.find(std::string(name))) throw FormatError("header: missing required column '" + std::string(name) + "'");
  }
  return h;
}

struct Row {
  std::size_t number;
  const std::vector<std::string>* cells;
};

struct Group {
  std::vector<Row> rows;
};

class RowError : public std::exception {
 public:
  RowError(std::size_t row, std::string column, std::string message)
      : row(row), column(std::move(column)), message(std::move(message)) {}
  const char* what() const noexcept override { return message.c_str(); }
  std::size_t row;
  std::string column;
  std::string message;
};

inline const std::string& cell(const Header& h, const Row& r, const char* name) {
  static const std::string empty;
  const auto i = h.find(name);
  return i ? (*r.cells)[*i] : empty;
}

inline double required_real(const Header& h, const Row& r, const char* name) {
  const auto& s = cell(h, r, name);
  const auto v = parse_real(s);
  if (!v) throw RowError(r.number, name, "malformed number '" + s + "'");
  return *v;
}

inline std::optional<double> optional_real(const Header& h, const Row& r, const char* name) {
  const auto& s = cell(h, r, name);
  if (is_missing(s)) return std::nullopt;
  const auto v = parse_real(s);
  if (!v) throw RowError(r.number, name, "malformed number '" + s + "'");
  return v;
}

inline BinForecast build_bins(const Header& h, const std::vector<Row>& rows) {
  struct Cell {
    double start;
    std::optional<double> end;
    double value;
    std::size_t row;
  };
  std::vector<Cell> cells;
  const bool has_end = h.find("bin_end").has_value();
  for (const auto& r : rows) {
    Cell c{required_real(h, r, "bin"), std::nullopt, 0.0, r.number};
    if (has_end) c.end = required_real(h, r, "bin_end");
    c.value = required_real(h, r, "value");
    if (c.value < 0.0) throw RowError(r.number, "value", "negative bin probability");
    cells.push_back(c);
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.start < b.start; });
  std::vector<double> edges;
  std::vector<double> probs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0 && cells[i].start == cells[i - 1].start) {
      throw RowError(cells[i].row, "bin", "duplicate bin " + format_real(cells[i].start));
    }
    if (i > 0 && has_end && *cells[i - 1].end != cells[i].start) {
      throw RowError(cells[i].row, "bin", "bins are not contiguous");
    }
    edges.push_back(cells[i].start);
    probs.push_back(cells[i].value);
  }
  if (has_end) {
    edges.push_back(*cells.back().end);
  } else if (cells.size() == 1) {
    edges.push_back(cells[0].start + 1.0);
  } else {
    edges.push_back(cells.back().start + (cells.back().start - cells[cells.size() - 2].start));
  }
  try {
    return BinForecast(std::move(edges), std::move(probs));
  } catch (const InvalidParameter& e) {
    throw RowError(rows.front().number, "value", e.what());
  }
}

inline QuantileForecast build_quantiles(const Header& h, const std::vector<Row>& rows) {
  struct Cell {
    double level;
    double value;
    std::size_t row;
  };
  std::vector<Cell> cells;
  for (const auto& r : rows) {
    Cell c{required_real(h, r, "quantile"), required_real(h, r, "value"), r.number};
    if (!(c.level > 0.0 && c.level < 1.0)) throw RowError(r.number, "quantile", "level must lie in (0, 1)");
    cells.push_back(c);
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.level < b.level; });
  std::vector<double> levels, values;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0 && cells[i].level == cells[i - 1].level) {
      throw RowError(cells[i].row, "quantile", "duplicate level " + format_real(cells[i].level));
    }
    if (i > 0 && cells[i].value < cells[i - 1].value) {
      throw RowError(cells[i].row, "value",
                     "quantile values decrease (level " + format_real(cells[i].level) + " has " +
                         format_real(cells[i].value) + " < " + format_real(cells[i - 1].value) + ")");
    }
    levels.push_back(cells[i].level);
    values.push_back(cells[i].value);
  }
  return QuantileForecast(std::move(levels), std::move(values));
}

inline Mixture build_mixture(const Header& h, const std::vector<Row>& rows) {
  std::vector<Component> parts;
  double total = 0.0;
  for (const auto& r : rows) {
    const auto& tag = cell(h, r, "family");
    const auto family = parse_family(tag);
    if (!family) throw RowError(r.number, "family", "unknown family '" + tag + "'");
    const double p1 = required_real(h, r, "param1");
    const auto p2 = optional_real(h, r, "param2");
    const auto p3 = optional_real(h, r, "param3");
    const double w = required_real(h, r, "weight");
    const auto lo = optional_real(h, r, "lowerlim");
    const auto hi = optional_real(h, r, "upperlim");
    try {
      parts.emplace_back(*family, p1, p2, p3, w, lo, hi);
    } catch (const InvalidParameter& e) {
      throw RowError(r.number, "param1", e.what());
    } catch (const DegenerateInput& e) {
      throw RowError(r.number, "lowerlim", e.what());
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw RowError(rows.front().number, "weight", "component weights sum to " + format_real(total) + ", expected 1");
  }
  return Mixture::normalized(std::move(parts));
}

inline std::vector<std::string_view> required_columns(Kind kind) {
  switch (kind) {
    case Kind::Bin: return {"location", "target", "type", "unit", "bin", "value"};
    case Kind::Quantile: return {"location", "target", "type", "unit", "quantile", "value"};
    case Kind::Mixture: return {"location", "target", "type", "unit", "family", "param1", "param2", "weight"};
  }
  return {};
}

}  // namespace detail

/// Reads a submission, keeping every valid forecast and a diagnostic for
/// each invalid one. Throws FormatError when the layout itself is broken.
inline ParseOutcome read_submission(std::istream& in, Kind kind, std::string source = {}) {
  ParseOutcome out;
  out.table.kind = kind;
  out.table.source = std::move(source);
  const auto records = csv::read(in);
  if (records.empty()) throw FormatError("submission: missing header row");
  const auto required = detail::required_columns(kind);
  const auto header = detail::read_header(records[0], required);

  std::map<ForecastKey, detail::Group> groups;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::size_t number = i + 1;
    if (rec.size() != records[0].size()) {
      throw FormatError("row " + std::to_string(number) + ": expected " + std::to_string(records[0].size()) +
                        " fields, found " + std::to_string(rec.size()));
    }
    const detail::Row row{number, &rec};
    ForecastKey key{detail::cell(header, row, "location"), detail::cell(header, row, "target"),
                    detail::cell(header, row, "unit")};
    const auto& type = detail::cell(header, row, "type");
    if (type == "point") {
      out.table.warnings.push_back("row " + std::to_string(number) + ": point row ignored");
      continue;
    }
    if (key.location.empty() || key.target.empty() || key.unit.empty()) {
      out.diagnostics.push_back({number, key.location.empty() ? "location" : key.target.empty() ? "target" : "unit",
                                 key.str(), "empty key field"});
      continue;
    }
    if (type != type_tag(kind)) {
      out.diagnostics.push_back({number, "type", key.str(),
                                 "type '" + type + "' does not match a " + std::string(to_string(kind)) + " file"});
      continue;
    }
    groups[key].rows.push_back(row);
  }

  for (const auto& [key, group] : groups) {
    try {
      switch (kind) {
        case Kind::Bin: out.table.entries.emplace(key, detail::build_bins(header, group.rows)); break;
        case Kind::Quantile: out.table.entries.emplace(key, detail::build_quantiles(header, group.rows)); break;
        case Kind::Mixture: out.table.entries.emplace(key, detail::build_mixture(header, group.rows)); break;
      }
      out.table.rows[key] = {group.rows.front().number, group.rows.back().number};
    } catch (const detail::RowError& e) {
      out.diagnostics.push_back({e.row, e.column, key.str(), e.message});
    } catch (const std::exception& e) {
      out.diagnostics.push_back({group.rows.front().number, "", key.str(), e.what()});
    }
  }
  std::sort(out.diagnostics.begin(), out.diagnostics.end(),
            [](const Diagnostic& a, const Diagnostic& b) { return a.row < b.row; });
  return out;
}

inline ParseOutcome read_submission_file(const std::string& path, Kind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_submission(in, kind, path);
}

/// Strict parse: the first diagnostic becomes a ParseError.
inline SubmissionTable parse_submission(std::istream& in, Kind kind, std::string source = {}) {
  auto outcome = read_submission(in, kind, std::move(source));
  if (!outcome.ok()) {
    const auto& d = outcome.diagnostics.front();
    throw ParseError(d.row, d.column, d.key, d.message);
  }
  return std::move(outcome.table);
}

inline SubmissionTable parse_submission(const std::string& path, Kind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return parse_submission(in, kind, path);
}

namespace detail {

// True when a bin file without bin_end reproduces the forecast's last edge.
inline bool last_edge_inferable(const BinForecast& f) {
  const auto e = f.edges();
  const std::size_t k = f.size();
  const double inferred = k == 1 ? e[0] + 1.0 : e[k - 1] + (e[k - 1] - e[k - 2]);
  return inferred == e[k];
}

inline void write_key(std::ostream& out, const ForecastKey& k, Kind kind) {
  out << csv::quote(k.location) << ',' << csv::quote(k.target) << ',' << type_tag(kind) << ','
      << csv::quote(k.unit);
}

}  // namespace detail

/// Writes header and rows in schema column order, newline line endings.
/// Bin files gain a bin_end column and mixture files gain param3 /
/// lowerlim,upperlim columns only when some forecast needs them.
inline void write_submission(std::ostream& out, const SubmissionTable& t) {
  switch (t.kind) {
    case Kind::Bin: {
      bool widen = false;
      for (const auto& [k, f] : t.entries) widen = widen || !detail::last_edge_inferable(std::get<BinForecast>(f));
      out << "location,target,type,unit,bin," << (widen ? "bin_end," : "") << "value\n";
      for (const auto& [k, f] : t.entries) {
        const auto& b = std::get<BinForecast>(f);
        for (std::size_t i = 0; i < b.size(); ++i) {
          detail::write_key(out, k, t.kind);
          out << ',' << format_real(b.lower(i));
          if (widen) out << ',' << format_real(b.upper(i));
          out << ',' << format_real(b.probs()[i]) << '\n';
        }
      }
      break;
    }
    case Kind::Quantile: {
      out << "location,target,type,unit,quantile,value\n";
      for (const auto& [k, f] : t.entries) {
        const auto& q = std::get<QuantileForecast>(f);
        for (std::size_t i = 0; i < q.size(); ++i) {
          detail::write_key(out, k, t.kind);
          out << ',' << format_real(q.levels()[i]) << ',' << format_real(q.values()[i]) << '\n';
        }
      }
      break;
    }
    case Kind::Mixture: {
      bool p3 = false, limits = false;
      for (const auto& [k, f] : t.entries) {
        for (const auto& c : std::get<Mixture>(f).components()) {
          p3 = p3 || c.param3().has_value();
          limits = limits || c.truncated();
        }
      }
      out << "location,target,type,unit,family,param1,param2," << (p3 ? "param3," : "") << "weight"
          << (limits ? ",lowerlim,upperlim" : "") << '\n';
      for (const auto& [k, f] : t.entries) {
        for (const auto& c : std::get<Mixture>(f).components()) {
          std::string tag(to_string(c.family()));
          std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char ch) { return std::tolower(ch); });
          detail::write_key(out, k, t.kind);
          out << ',' << tag << ',' << format_real(c.param1()) << ',' << format_optional(c.param2());
          if (p3) out << ',' << format_optional(c.param3());
          out << ',' << format_real(c.weight());
          if (limits) out << ',' << format_optional(c.lower()) << ',' << format_optional(c.upper());
          out << '\n';
        }
      }
      break;
    }
  }
}

inline void serialize_submission(const SubmissionTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_submission(out, t);
  if (!out) throw FormatError("write to '" + path + "' failed");
}

/// Truth file: location,target,unit,value (a type column is tolerated).
inline TruthTable parse_truth(std::istream& in) {
  const auto records = csv::read(in);
  if (records.empty()) throw FormatError("truth: missing header row");
  constexpr std::string_view required[] = {"location", "target", "unit", "value"};
  const auto header = detail::read_header(records[0], required);
  TruthTable t;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const std::size_t number = i + 1;
    if (records[i].size() != records[0].size()) {
      throw FormatError("truth row " + std::to_string(number) + ": wrong number of fields");
    }
    const detail::Row row{number, &records[i]};
    ForecastKey key{detail::cell(header, row, "location"), detail::cell(header, row, "target"),
                    detail::cell(header, row, "unit")};
    const auto v = parse_real(detail::cell(header, row, "value"));
    if (!v) throw ParseError(number, "value", key.str(), "malformed number");
    if (!t.values.emplace(key, *v).second) throw ParseError(number, "", key.str(), "duplicate truth value");
  }
  return t;
}

inline TruthTable parse_truth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return parse_truth(in);
}

inline void write_truth(std::ostream& out, const TruthTable& t) {
  out << "location,target,unit,value\n";
  for (const auto& [k, v] : t.values) {
    out << csv::quote(k.location) << ',' << csv::quote(k.target) << ',' << csv::quote(k.unit) << ','
        << format_real(v) << '\n';
  }
}

struct ConvertRecord {
  ForecastKey key;
  int components = 0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::optional<std::string> error;
};

struct ConvertResult {
  SubmissionTable table;
  std::vector<ConvertRecord> report;
};

/// Replaces each bin or quantile forecast with its fitted shared-σ normal
/// mixture. With `nested`, fits C = 1..cfg.components in turn (each started
/// from the last) and reports every order; the output keeps the largest.
/// Failed keys are reported and left out of the table.
inline ConvertResult convert(const SubmissionTable& t, const FitConfig& cfg, bool nested = false,
                             unsigned workers = 1) {
  if (t.kind == Kind::Mixture) throw InvalidParameter("convert: table is already a mixture table");
  ConvertResult result;
  result.table.kind = Kind::Mixture;
  result.table.source = t.source;
  std::vector<const std::pair<const ForecastKey, Forecast>*> items;
  for (const auto& e : t.entries) items.push_back(&e);

  struct Slot {
    std::vector<FitReport> fits;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    try {
      const auto& f = items[i]->second;
      std::vector<FitReport> fits;
      if (nested) {
        if (const auto* b = std::get_if<BinForecast>(&f)) {
          fits = fit_nested(*b, cfg.components, cfg);
        } else {
          fits = fit_nested(std::get<QuantileForecast>(f), cfg.components, cfg);
        }
      } else if (const auto* b = std::get_if<BinForecast>(&f)) {
        fits.push_back(fit_bins(*b, cfg));
      } else {
        fits.push_back(fit_quantiles(std::get<QuantileForecast>(f), cfg));
      }
      slots[i].fits = std::move(fits);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& key = items[i]->first;
    if (slots[i].error) {
      result.report.push_back({key, cfg.components, std::numeric_limits<double>::quiet_NaN(), 0, false, slots[i].error});
      continue;
    }
    for (const auto& fit : slots[i].fits) {
      result.report.push_back({key, fit.params.components(), fit.objective(), fit.iterations, fit.converged, {}});
    }
    result.table.entries.emplace(key, slots[i].fits.back().fitted);
  }
  return result;
}

}  // namespace mixfc
