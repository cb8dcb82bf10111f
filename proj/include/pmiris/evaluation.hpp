#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmiris/error.hpp"
#include "pmiris/iris_code.hpp"
#include "pmiris/match.hpp"

namespace pmiris {

struct MatchConfig {
  int max_shift = 16;
  int shift_step = 1;
  long min_bits = 256;
};

inline MatchScore match(const IrisCode& a, const IrisCode& b, const MatchConfig& cfg) {
  return match(a, b, cfg.max_shift, cfg.shift_step, cfg.min_bits);
}

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  double horizon_hours = 0.0;
  long failures_to_compare = 0;
};

struct PairRow {
  int a = 0, b = 0;  // indices into the scored code list
  double distance = std::numeric_limits<double>::quiet_NaN();
  int best_shift = 0;
  long effective_bits = 0;
  bool genuine = false;
  bool comparable = false;
};

// All unordered pairs whose captures both fall within the horizon. Left and
// right eyes of one subject count as impostor.
inline std::vector<PairRow> score_all_pairs(const std::vector<IrisCode>& codes,
                                            double horizon_hours, const MatchConfig& cfg = {}) {
  std::vector<int> in;
  for (int i = 0; i < int(codes.size()); ++i)
    if (codes[std::size_t(i)].meta.pmi_hours <= horizon_hours) in.push_back(i);
  if (in.size() < 2)
    throw InsufficientData("score_all_pairs: " + std::to_string(in.size()) +
                           " captures within horizon " + std::to_string(horizon_hours) + "h");
  std::vector<PairRow> rows;
  rows.reserve(in.size() * (in.size() - 1) / 2);
  for (std::size_t i = 0; i < in.size(); ++i)
    for (std::size_t j = i + 1; j < in.size(); ++j) {
      const IrisCode& ca = codes[std::size_t(in[i])];
      const IrisCode& cb = codes[std::size_t(in[j])];
      PairRow row;
      row.a = in[i];
      row.b = in[j];
      row.genuine = same_eye_identity(ca.meta, cb.meta);
      try {
        const MatchScore s = match(ca, cb, cfg);
        row.distance = s.distance;
        row.best_shift = s.best_shift;
        row.effective_bits = s.effective_bits;
        row.comparable = true;
      } catch (const InsufficientOverlap&) {
        row.comparable = false;
      }
      rows.push_back(row);
    }
  return rows;
}

inline ScoreSet scores_from_rows(const std::vector<PairRow>& rows, double horizon_hours) {
  ScoreSet s;
  s.horizon_hours = horizon_hours;
  for (const auto& r : rows) {
    if (!r.comparable) {
      ++s.failures_to_compare;
    } else if (r.genuine) {
      s.genuine.push_back(r.distance);
    } else {
      s.impostor.push_back(r.distance);
    }
  }
  return s;
}

inline ScoreSet build_scores(const std::vector<IrisCode>& codes, double horizon_hours,
                             const MatchConfig& cfg = {}) {
  return scores_from_rows(score_all_pairs(codes, horizon_hours, cfg), horizon_hours);
}

namespace detail {

// FMR(t) = fraction of impostor < t, FNMR(t) = fraction of genuine >= t,
// evaluated over sorted copies.
struct RateCurve {
  std::vector<double> genuine, impostor;

  explicit RateCurve(const ScoreSet& s) : genuine(s.genuine), impostor(s.impostor) {
    std::sort(genuine.begin(), genuine.end());
    std::sort(impostor.begin(), impostor.end());
  }

  double fmr(double t) const {
    const auto it = std::lower_bound(impostor.begin(), impostor.end(), t);
    return double(it - impostor.begin()) / double(impostor.size());
  }
  double fnmr(double t) const {
    const auto it = std::lower_bound(genuine.begin(), genuine.end(), t);
    return 1.0 - double(it - genuine.begin()) / double(genuine.size());
  }

  std::vector<double> union_thresholds() const {
    std::vector<double> u;
    u.reserve(genuine.size() + impostor.size());
    u.insert(u.end(), genuine.begin(), genuine.end());
    u.insert(u.end(), impostor.begin(), impostor.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
  }
};

}  // namespace detail

struct OperatingPoint {
  double rate = 0.0;
  double threshold = 0.0;
};

// Equal error rate: the FMR/FNMR crossing over the sorted union of scores,
// linearly interpolated between adjacent thresholds.
inline OperatingPoint eer(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty())
    throw EmptyScores("eer: both score lists must be non-empty");
  const detail::RateCurve rc(s);
  auto thresholds = rc.union_thresholds();
  thresholds.push_back(thresholds.back() + 1e-9);  // above max: FMR 1, FNMR 0

  double prev_t = thresholds.front(), prev_e = rc.fmr(prev_t) - rc.fnmr(prev_t);
  double prev_fmr = rc.fmr(prev_t);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    const double f = rc.fmr(t), n = rc.fnmr(t);
    const double e = f - n;
    if (e >= 0.0) {
      if (e == 0.0 || i == 0) return {f, t};
      const double u = -prev_e / (e - prev_e);
      return {prev_fmr + u * (f - prev_fmr), prev_t + u * (t - prev_t)};
    }
    prev_t = t;
    prev_e = e;
    prev_fmr = f;
  }
  return {1.0, thresholds.back()};  // unreachable: virtual end has e = 1
}

// FNMR at the largest threshold whose FMR stays within the cap.
inline OperatingPoint fnmr_at_fmr(const ScoreSet& s, double fmr_cap) {
  if (!(fmr_cap > 0.0 && fmr_cap < 1.0)) throw InvalidParam("fnmr_at_fmr: cap must be in (0,1)");
  if (s.genuine.empty() || s.impostor.empty())
    throw EmptyScores("fnmr_at_fmr: both score lists must be non-empty");
  const detail::RateCurve rc(s);
  const long n = long(rc.impostor.size());
  const long m = long(fmr_cap * double(n) + 1e-9);
  double t;
  if (m >= n) {
    const double top = std::max(rc.impostor.back(), rc.genuine.back());
    t = top + 1e-9;
  } else {
    t = rc.impostor[std::size_t(m)];
  }
  return {rc.fnmr(t), t};
}

struct RocPoint {
  double fmr = 0.0;
  double tpr = 0.0;  // 1 - FNMR
};

// One point per distinct union threshold plus the (1,1) endpoint.
inline std::vector<RocPoint> roc_points(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty())
    throw EmptyScores("roc_points: both score lists must be non-empty");
  const detail::RateCurve rc(s);
  std::vector<RocPoint> pts;
  for (double t : rc.union_thresholds()) pts.push_back({rc.fmr(t), 1.0 - rc.fnmr(t)});
  pts.push_back({1.0, 1.0});
  return pts;
}

inline std::string scores_csv(const std::vector<PairRow>& rows,
                              const std::vector<IrisCode>& codes) {
  std::string out =
      "capture_id_a,capture_id_b,subject_a,subject_b,pmi_a,pmi_b,distance,best_shift,"
      "effective_bits,label\n";
  for (const auto& r : rows) {
    const CaptureMeta& a = codes[std::size_t(r.a)].meta;
    const CaptureMeta& b = codes[std::size_t(r.b)].meta;
    out += a.capture_id + "," + b.capture_id + "," + a.subject_id + "," + b.subject_id + "," +
           format_real(a.pmi_hours) + "," + format_real(b.pmi_hours) + ",";
    if (r.comparable) {
      out += format_real(r.distance) + "," + std::to_string(r.best_shift) + "," +
             std::to_string(r.effective_bits);
    } else {
      out += "nan,0,0";
    }
    out += r.genuine ? ",genuine\n" : ",impostor\n";
  }
  return out;
}

inline std::string roc_csv(const std::vector<RocPoint>& pts) {
  std::string out = "fmr,tpr\n";
  for (const auto& p : pts) out += format_real(p.fmr) + "," + format_real(p.tpr) + "\n";
  return out;
}

// One scores-CSV row, self-contained so score files can be re-evaluated
// without the codes that produced them.
struct ScoredPair {
  std::string capture_id_a, capture_id_b;
  std::string subject_a, subject_b;
  double pmi_a = 0.0, pmi_b = 0.0;
  double distance = std::numeric_limits<double>::quiet_NaN();
  int best_shift = 0;
  long effective_bits = 0;
  bool genuine = false;
  bool comparable = false;
};

inline std::vector<ScoredPair> pairs_from_csv(const std::string& text) {
  const std::string header =
      "capture_id_a,capture_id_b,subject_a,subject_b,pmi_a,pmi_b,distance,best_shift,"
      "effective_bits,label";
  std::vector<ScoredPair> out;
  std::size_t pos = 0;
  int line = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string row = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (line == 1) {
      if (row != header) throw ParseError("scores CSV line 1: bad header");
      continue;
    }
    if (row.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = row.find(',', start);
      f.push_back(row.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 10)
      throw ParseError("scores CSV line " + std::to_string(line) + ": expected 10 fields, got " +
                       std::to_string(f.size()));
    ScoredPair p;
    p.capture_id_a = f[0];
    p.capture_id_b = f[1];
    p.subject_a = f[2];
    p.subject_b = f[3];
    try {
      p.pmi_a = std::stod(f[4]);
      p.pmi_b = std::stod(f[5]);
      p.distance = std::stod(f[6]);
      p.best_shift = std::stoi(f[7]);
      p.effective_bits = std::stol(f[8]);
    } catch (const std::exception&) {
      throw ParseError("scores CSV line " + std::to_string(line) + ": bad numeric field");
    }
    if (f[9] == "genuine") {
      p.genuine = true;
    } else if (f[9] == "impostor") {
      p.genuine = false;
    } else {
      throw ParseError("scores CSV line " + std::to_string(line) + ": bad label \"" + f[9] +
                       "\"");
    }
    p.comparable = !std::isnan(p.distance);
    out.push_back(std::move(p));
  }
  if (line == 0) throw ParseError("scores CSV: empty file");
  return out;
}

inline ScoreSet scores_from_pairs(const std::vector<ScoredPair>& pairs, double horizon_hours) {
  ScoreSet s;
  s.horizon_hours = horizon_hours;
  for (const auto& p : pairs) {
    if (p.pmi_a > horizon_hours || p.pmi_b > horizon_hours) continue;
    if (!p.comparable) {
      ++s.failures_to_compare;
    } else if (p.genuine) {
      s.genuine.push_back(p.distance);
    } else {
      s.impostor.push_back(p.distance);
    }
  }
  return s;
}

inline const std::vector<double> default_fmr_caps = {0.001, 0.01, 0.05};

// {horizon, n_genuine, n_impostor, eer, fnmr_at{...}, failures_to_compare}
inline nlohmann::ordered_json horizon_report(const ScoreSet& s,
                                             const std::vector<double>& caps = default_fmr_caps) {
  nlohmann::ordered_json j;
  j["horizon"] = s.horizon_hours;
  j["n_genuine"] = s.genuine.size();
  j["n_impostor"] = s.impostor.size();
  const OperatingPoint e = eer(s);
  j["eer"] = e.rate;
  j["eer_threshold"] = e.threshold;
  nlohmann::ordered_json jf;
  for (double cap : caps) {
    const OperatingPoint p = fnmr_at_fmr(s, cap);
    char key[32];
    std::snprintf(key, sizeof(key), "%g", cap);
    jf[key] = {{"fnmr", p.rate}, {"threshold", p.threshold}};
  }
  j["fnmr_at"] = std::move(jf);
  j["failures_to_compare"] = s.failures_to_compare;
  return j;
}

}  // namespace pmiris
