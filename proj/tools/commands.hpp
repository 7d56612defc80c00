#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mixfc/mixfc.hpp"

namespace mixfc::cli {

inline constexpr int kOk = 0;
inline constexpr int kIoError = 1;
inline constexpr int kInvalid = 2;

/// The 23 COVID-hub quantile levels: a median and 11 central intervals.
inline std::vector<double> hub_levels() {
  std::vector<double> l{0.01, 0.025};
  for (int i = 1; i <= 19; ++i) l.push_back(0.05 * i);
  l.push_back(0.975);
  l.push_back(0.99);
  for (auto& x : l) x = std::round(x * 1000.0) / 1000.0;
  return l;
}

/// Exit-code carrying failure raised inside a command.
struct Failure {
  int code;
  std::string message;
};

class Output {
 public:
  explicit Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path, std::ios::binary);
      if (!file_) throw Failure{kIoError, "cannot write '" + path + "'"};
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

inline Kind kind_or_fail(const std::string& s) {
  const auto k = parse_kind(s);
  if (!k) throw Failure{kInvalid, "unknown kind '" + s + "' (expected bin, quantile or mixture)"};
  return *k;
}

inline SubmissionTable load(const std::string& path, Kind kind, std::ostream& err) {
  ParseOutcome outcome;
  try {
    outcome = read_submission_file(path, kind);
  } catch (const FormatError& e) {
    throw Failure{kIoError, e.what()};
  }
  for (const auto& w : outcome.table.warnings) err << path << ": warning: " << w << '\n';
  if (!outcome.ok()) {
    for (const auto& d : outcome.diagnostics) err << path << ": " << d.str() << '\n';
    throw Failure{kInvalid, path + ": " + std::to_string(outcome.diagnostics.size()) + " invalid forecast(s)"};
  }
  return std::move(outcome.table);
}

inline TruthTable load_truth(const std::string& path) {
  try {
    return parse_truth(path);
  } catch (const FormatError& e) {
    throw Failure{kIoError, e.what()};
  } catch (const ParseError& e) {
    throw Failure{kInvalid, std::string("truth: ") + e.what()};
  }
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
}

inline void write_key_cells(std::ostream& out, const ForecastKey& k) {
  out << csv::quote(k.location) << ',' << csv::quote(k.target) << ',' << csv::quote(k.unit);
}

// ---- validate ---------------------------------------------------------------

struct ValidateOptions {
  std::string submission{};
  std::string kind = "mixture";
};

inline int cmd_validate(const ValidateOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto kind = kind_or_fail(o.kind);
    ParseOutcome outcome;
    try {
      outcome = read_submission_file(o.submission, kind);
    } catch (const FormatError& e) {
      throw Failure{kIoError, e.what()};
    }
    for (const auto& w : outcome.table.warnings) err << "warning: " << w << '\n';
    for (const auto& d : outcome.diagnostics) out << d.str() << '\n';
    if (!outcome.ok()) {
      out << outcome.diagnostics.size() << " invalid, " << outcome.table.size() << " forecasts OK\n";
      return kInvalid;
    }
    out << outcome.table.size() << " forecasts OK\n";
    return kOk;
  });
}

// ---- score ------------------------------------------------------------------

struct ScoreOptions {
  std::string submission{};
  std::string kind = "mixture";
  std::string truth{};
  std::string rule = "crps";
  std::vector<double> levels{};  // empty: hub levels
  double alpha = 0.2;
  unsigned workers = 1;
  std::string out{};
};

inline double score_one(const Forecast& f, const std::string& rule, double x, const ScoreOptions& o) {
  const auto levels = o.levels.empty() ? hub_levels() : o.levels;
  if (const auto* m = std::get_if<Mixture>(&f)) {
    if (rule == "logs") return log_score(*m, x);
    if (rule == "crps") return crps(*m, x);
    if (rule == "is") {
      const std::vector<double> pair{o.alpha / 2.0, 1.0 - o.alpha / 2.0};
      const auto q = quantiles_of(*m, pair);
      return interval_score(o.alpha, q.values()[0], q.values()[1], x);
    }
    return wis(IntervalSet::from_quantiles(quantiles_of(*m, levels)), x);
  }
  if (const auto* q = std::get_if<QuantileForecast>(&f)) {
    if (rule == "is") {
      const auto l = q->value_at(o.alpha / 2.0);
      const auto r = q->value_at(1.0 - o.alpha / 2.0);
      if (!l || !r) throw InvalidParameter("forecast lacks the levels of the " + format_real(o.alpha) + " interval");
      return interval_score(o.alpha, *l, *r, x);
    }
    return wis(IntervalSet::from_quantiles(*q), x);
  }
  const auto& b = std::get<BinForecast>(f);
  return rule == "logs" ? log_score(b, x) : crps(b, x);
}

inline bool rule_supported(Kind kind, const std::string& rule) {
  switch (kind) {
    case Kind::Mixture: return rule == "logs" || rule == "crps" || rule == "is" || rule == "wis";
    case Kind::Quantile: return rule == "is" || rule == "wis";
    case Kind::Bin: return rule == "logs" || rule == "crps";
  }
  return false;
}

inline int cmd_score(const ScoreOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto kind = kind_or_fail(o.kind);
    if (!rule_supported(kind, o.rule)) {
      throw Failure{kInvalid, "rule '" + o.rule + "' is not supported for " + std::string(to_string(kind)) +
                                  " forecasts"};
    }
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw Failure{kInvalid, "--alpha must lie in (0, 1)"};
    const auto table = load(o.submission, kind, err);
    const auto truth = load_truth(o.truth);
    std::vector<const std::pair<const ForecastKey, Forecast>*> items;
    for (const auto& e : table.entries) {
      if (!truth.find(e.first)) throw Failure{kInvalid, "no truth value for key [" + e.first.str() + "]"};
      items.push_back(&e);
    }
    std::vector<double> scores(items.size());
    std::vector<std::string> errors(items.size());
    parallel_for(items.size(), o.workers, [&](std::size_t i) {
      try {
        scores[i] = score_one(items[i]->second, o.rule, *truth.find(items[i]->first), o);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!errors[i].empty()) throw Failure{kInvalid, "key [" + items[i]->first.str() + "]: " + errors[i]};
    }
    Output sink(o.out, out);
    *sink << "location,target,unit,rule,score\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
      write_key_cells(*sink, items[i]->first);
      *sink << ',' << o.rule << ',' << (std::isinf(scores[i]) ? "Inf" : format_real(scores[i])) << '\n';
    }
    return kOk;
  });
}

// ---- ensemble ---------------------------------------------------------------

struct EnsembleOptions {
  std::vector<std::string> submissions{};
  std::string kind = "mixture";
  std::string weights = "equal";
  std::string method = "mean";
  std::string truth{};
  std::string out{};
  std::string report{};
};

inline std::optional<std::vector<double>> explicit_weights(const std::string& spec) {
  if (spec.find_first_of("0123456789") == std::string::npos) return std::nullopt;
  std::vector<double> w;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_real(item);
    if (!v) throw Failure{kInvalid, "malformed weight '" + item + "'"};
    w.push_back(*v);
  }
  return w;
}

inline int cmd_ensemble(const EnsembleOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto kind = kind_or_fail(o.kind);
    if (kind == Kind::Bin) throw Failure{kInvalid, "ensembles of bin forecasts are not supported"};
    if (o.submissions.empty()) throw Failure{kInvalid, "no submissions given"};
    std::vector<SubmissionTable> tables;
    for (const auto& p : o.submissions) tables.push_back(load(p, kind, err));
    std::set<ForecastKey> keys;
    for (const auto& e : tables[0].entries) keys.insert(e.first);
    for (std::size_t t = 1; t < tables.size(); ++t) {
      std::set<ForecastKey> other;
      for (const auto& e : tables[t].entries) other.insert(e.first);
      if (other != keys) throw Failure{kInvalid, "key sets differ between '" + o.submissions[0] + "' and '" +
                                                     o.submissions[t] + "'"};
    }
    const std::size_t n_models = tables.size();
    const auto fixed = explicit_weights(o.weights);
    const std::set<std::string> schemes{"equal", "pmp", "pmp-cdf", "crps-min", "em"};
    if (!fixed && !schemes.contains(o.weights)) throw Failure{kInvalid, "unknown weight scheme '" + o.weights + "'"};
    if (fixed && fixed->size() != n_models) {
      throw Failure{kInvalid, "expected " + std::to_string(n_models) + " weights, got " + std::to_string(fixed->size())};
    }
    const bool needs_truth = !fixed && o.weights != "equal";
    if (needs_truth && kind == Kind::Quantile) {
      throw Failure{kInvalid, "weight scheme '" + o.weights + "' needs densities; quantile inputs take equal or explicit weights"};
    }
    std::optional<TruthTable> truth;
    if (needs_truth) {
      if (o.truth.empty()) throw Failure{kInvalid, "weight scheme '" + o.weights + "' requires --truth"};
      truth = load_truth(o.truth);
      for (const auto& k : keys) {
        if (!truth->find(k)) throw Failure{kInvalid, "no truth value for key [" + k.str() + "]"};
      }
    }

    auto models_for = [&](const ForecastKey& k) {
      std::vector<Mixture> ms;
      for (const auto& t : tables) ms.push_back(std::get<Mixture>(t.entries.at(k)));
      return ms;
    };
    std::map<ForecastKey, std::vector<double>> weights;
    const std::vector<double> equal(n_models, 1.0 / static_cast<double>(n_models));
    if (fixed || o.weights == "equal") {
      for (const auto& k : keys) weights[k] = fixed ? *fixed : equal;
    } else if (o.weights == "pmp" || o.weights == "pmp-cdf") {
      const auto mode = o.weights == "pmp" ? PmpMode::Density : PmpMode::Cdf;
      for (const auto& k : keys) weights[k] = pmp_weights(models_for(k), *truth->find(k), mode);
    } else {
      std::vector<std::vector<Mixture>> rounds;
      std::vector<double> obs;
      for (const auto& k : keys) {
        rounds.push_back(models_for(k));
        obs.push_back(*truth->find(k));
      }
      const auto fit = o.weights == "em" ? em_weights(rounds, obs) : crps_min_weights(rounds, obs);
      for (const auto& k : keys) weights[k] = fit.weights;
    }

    SubmissionTable result;
    result.kind = kind;
    for (const auto& k : keys) {
      if (kind == Kind::Mixture) {
        result.entries.emplace(k, ma_ensemble(models_for(k), weights[k]));
      } else {
        std::vector<QuantileForecast> qs;
        for (const auto& t : tables) qs.push_back(std::get<QuantileForecast>(t.entries.at(k)));
        const auto method = o.method == "median" ? QuantileAverage::Median : QuantileAverage::Mean;
        result.entries.emplace(k, quantile_average(qs, weights[k], method));
      }
    }
    Output sink(o.out, out);
    write_submission(*sink, result);
    if (!o.report.empty()) {
      Output rep(o.report, err);
      *rep << "location,target,unit,model,weight\n";
      for (const auto& [k, w] : weights) {
        for (std::size_t m = 0; m < w.size(); ++m) {
          write_key_cells(*rep, k);
          *rep << ',' << csv::quote(o.submissions[m]) << ',' << format_real(w[m]) << '\n';
        }
      }
    }
    return kOk;
  });
}

// ---- fit --------------------------------------------------------------------

struct FitOptions {
  std::string submission{};
  std::string kind = "bin";
  std::string components = "1";  // "C" or "1-C" for nested fits
  double rel_tol = 1e-3;
  int max_iter = 500;
  unsigned workers = 1;
  std::string out{};
  std::string report{};
};

inline int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto kind = kind_or_fail(o.kind);
    if (kind == Kind::Mixture) throw Failure{kInvalid, "fit needs a bin or quantile submission"};
    bool nested = false;
    std::string count = o.components;
    if (count.starts_with("1-")) {
      nested = true;
      count = count.substr(2);
    }
    const auto c = parse_real(count);
    if (!c || *c < 1 || *c != std::floor(*c)) throw Failure{kInvalid, "malformed --components '" + o.components + "'"};
    FitConfig cfg;
    cfg.components = static_cast<int>(*c);
    cfg.rel_tol = o.rel_tol;
    cfg.max_outer_iter = o.max_iter;
    const auto table = load(o.submission, kind, err);
    const auto result = convert(table, cfg, nested, o.workers);

    Output sink(o.out, out);
    write_submission(*sink, result.table);
    bool failed = false;
    {
      Output rep(o.report, err);
      *rep << "location,target,unit,components," << (kind == Kind::Bin ? "kld" : "ss")
           << ",iterations,converged,error\n";
      for (const auto& r : result.report) {
        write_key_cells(*rep, r.key);
        *rep << ',' << r.components << ',' << (r.error ? "NA" : format_real(r.objective)) << ',' << r.iterations
             << ',' << (r.converged ? "true" : "false") << ',' << csv::quote(r.error.value_or("")) << '\n';
        failed = failed || r.error.has_value();
      }
    }
    for (const auto& r : result.report) {
      if (r.error) err << "key [" << r.key.str() << "]: " << *r.error << '\n';
    }
    return failed ? kInvalid : kOk;
  });
}

// ---- grid -------------------------------------------------------------------

struct GridOptions {
  std::string submission{};
  std::optional<ForecastKey> key{};
  int points = 101;
  std::string out{};
};

inline int cmd_grid(const GridOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.points < 2) throw Failure{kInvalid, "--points must be at least 2"};
    const auto table = load(o.submission, Kind::Mixture, err);
    const Mixture* m = nullptr;
    if (o.key) {
      auto it = table.entries.find(*o.key);
      if (it == table.entries.end()) throw Failure{kInvalid, "key [" + o.key->str() + "] not in submission"};
      m = &std::get<Mixture>(it->second);
    } else if (table.size() == 1) {
      m = &std::get<Mixture>(table.entries.begin()->second);
    } else {
      throw Failure{kInvalid, "submission holds " + std::to_string(table.size()) +
                                  " forecasts; choose one with --location/--target/--unit"};
    }
    const double lo = m->quantile(1e-4);
    const double hi = m->quantile(1.0 - 1e-4);
    Output sink(o.out, out);
    *sink << "x,pdf,cdf\n";
    for (int i = 0; i < o.points; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(o.points - 1);
      *sink << format_real(x) << ',' << format_real(m->pdf(x)) << ',' << format_real(m->cdf(x)) << '\n';
    }
    return kOk;
  });
}

// ---- sample -----------------------------------------------------------------

struct SampleOptions {
  std::string submission{};
  std::string kind = "mixture";
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string out{};
};

/// Draws per key; each key gets its own stream seeded from (seed, key order).
inline int cmd_sample(const SampleOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto kind = kind_or_fail(o.kind);
    if (kind == Kind::Quantile) throw Failure{kInvalid, "sampling needs a mixture or bin submission"};
    if (o.n == 0) throw Failure{kInvalid, "-n must be positive"};
    const auto table = load(o.submission, kind, err);
    Output sink(o.out, out);
    *sink << "location,target,unit,draw\n";
    std::uint64_t index = 0;
    for (const auto& [k, f] : table.entries) {
      const std::uint64_t seed = o.seed * 0x9E3779B97F4A7C15ull + index++;
      std::vector<double> draws;
      if (kind == Kind::Mixture) {
        draws = std::get<Mixture>(f).sample(o.n, seed);
      } else {
        const auto s = bin_sample(std::get<BinForecast>(f), o.n, seed);
        draws.assign(s.draws().begin(), s.draws().end());
      }
      for (double x : draws) {
        write_key_cells(*sink, k);
        *sink << ',' << format_real(x) << '\n';
      }
    }
    return kOk;
  });
}

}  // namespace mixfc::cli
