#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmiris/error.hpp"
#include "pmiris/evaluation.hpp"
#include "pmiris/filter_bank.hpp"
#include "pmiris/iris_code.hpp"
#include "pmiris/polar.hpp"

namespace pmiris {

// Drops kernels whose codes are nearly constant over the dataset (the mean
// code value falls outside [low, high]).
inline std::vector<Kernel2D> prune_degenerate(const std::vector<Kernel2D>& candidates,
                                              const std::vector<PolarIris>& dataset,
                                              double low = 0.05, double high = 0.95) {
  if (!(low >= 0.0 && low < high && high <= 1.0))
    throw InvalidParam("prune_degenerate: need 0 <= low < high <= 1");
  if (dataset.empty()) throw EmptyDataset("prune_degenerate: empty dataset");
  std::vector<Kernel2D> kept;
  for (const auto& k : candidates) {
    FilterBank one;
    one.kernels.push_back(k);
    std::vector<IrisCode> codes;
    codes.reserve(dataset.size());
    for (const auto& p : dataset) codes.push_back(encode(p, one));
    const double v = mean_code_value(codes, 0);
    if (v >= low && v <= high) kept.push_back(k);
  }
  return kept;
}

// Bank-subset EER on a tuning set: encode everything, score all pairs within
// the horizon, return the equal error rate.
inline double eer_objective(const FilterBank& bank, const std::vector<PolarIris>& tuning,
                            double horizon_hours, const MatchConfig& cfg = {}) {
  bank.validate();
  std::vector<IrisCode> codes;
  codes.reserve(tuning.size());
  for (const auto& p : tuning) codes.push_back(encode(p, bank));
  try {
    return eer(build_scores(codes, horizon_hours, cfg)).rate;
  } catch (const InsufficientData& e) {
    throw InsufficientPairs(std::string("eer_objective: ") + e.what());
  } catch (const EmptyScores& e) {
    throw InsufficientPairs(std::string("eer_objective: ") + e.what());
  }
}

// Same objective with per-kernel bit-plane memoization: a kernel's plane for a
// given capture never changes, so bank subsets reuse planes across the many
// SFS/SBS evaluations.
class CachedObjective {
 public:
  CachedObjective(std::vector<PolarIris> tuning, double horizon_hours, MatchConfig cfg = {})
      : tuning_(std::move(tuning)), horizon_(horizon_hours), cfg_(cfg) {
    canon_.reserve(tuning_.size());
    masks_.reserve(tuning_.size());
    for (const auto& p : tuning_) {
      RealGrid t = p.texture;
      for (std::size_t i = 0; i < t.size(); ++i)
        if (!p.mask.data()[i]) t.data()[i] = 0.5;
      canon_.push_back(std::move(t));
      masks_.push_back(p.mask);
    }
  }

  double operator()(const FilterBank& bank) {
    bank.validate();
    const int band = bank.max_rows() / 2;
    const auto& trimmed = trimmed_masks(band);
    std::vector<IrisCode> codes(tuning_.size());
    for (const auto& k : bank.kernels) {
      const auto& planes = kernel_planes(k);
      for (std::size_t i = 0; i < tuning_.size(); ++i)
        codes[i].planes.push_back(planes[i]);
    }
    for (std::size_t i = 0; i < tuning_.size(); ++i) {
      codes[i].mask = trimmed[i];
      codes[i].meta = tuning_[i].meta;
    }
    try {
      return eer(build_scores(codes, horizon_, cfg_)).rate;
    } catch (const InsufficientData& e) {
      throw InsufficientPairs(std::string("eer_objective: ") + e.what());
    } catch (const EmptyScores& e) {
      throw InsufficientPairs(std::string("eer_objective: ") + e.what());
    }
  }

 private:
  const std::vector<BitPlane>& kernel_planes(const Kernel2D& k) {
    auto it = plane_cache_.find(k.label);
    if (it != plane_cache_.end()) return it->second;
    std::vector<BitPlane> planes;
    planes.reserve(canon_.size());
    for (const auto& t : canon_) {
      const RealGrid resp = convolve2d_wrap_x(t, k);
      BitPlane plane(t.width(), t.height());
      for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x)
          if (resp.at(x, y) > 0.0) plane.set(x, y, true);
      planes.push_back(std::move(plane));
    }
    return plane_cache_.emplace(k.label, std::move(planes)).first->second;
  }

  const std::vector<BitPlane>& trimmed_masks(int band) {
    auto it = mask_cache_.find(band);
    if (it != mask_cache_.end()) return it->second;
    std::vector<BitPlane> planes;
    planes.reserve(masks_.size());
    for (const auto& m : masks_) {
      MaskGrid t = m;
      for (int y = 0; y < t.height(); ++y) {
        if (y >= band && y < t.height() - band) continue;
        for (int x = 0; x < t.width(); ++x) t.at(x, y) = 0;
      }
      planes.push_back(mask_to_plane(t));
    }
    return mask_cache_.emplace(band, std::move(planes)).first->second;
  }

  std::vector<PolarIris> tuning_;
  double horizon_;
  MatchConfig cfg_;
  std::vector<RealGrid> canon_;
  std::vector<MaskGrid> masks_;
  std::map<std::string, std::vector<BitPlane>> plane_cache_;
  std::map<int, std::vector<BitPlane>> mask_cache_;
};

struct SelectionStep {
  int step = 0;
  std::string action;  // add | remove | stop
  std::string filter_label;
  double eer = 0.0;
};

using Objective = std::function<double(const FilterBank&)>;

namespace detail {

inline double run_objective(const Objective& obj, const FilterBank& bank) {
  try {
    return obj(bank);
  } catch (const InsufficientPairs& e) {
    throw ObjectiveFailure(std::string("sfs_sbs: ") + e.what());
  } catch (const InsufficientData& e) {
    throw ObjectiveFailure(std::string("sfs_sbs: ") + e.what());
  } catch (const EmptyScores& e) {
    throw ObjectiveFailure(std::string("sfs_sbs: ") + e.what());
  }
}

}  // namespace detail

// Alternating wrapper selection: each round adds the most-contributing unused
// candidate if it strictly lowers the EER, then tries one removal among the
// original filters (accepted when the EER does not rise). Stops when no
// candidate improves.
inline std::pair<FilterBank, std::vector<SelectionStep>> sfs_sbs(
    const FilterBank& initial, const std::vector<Kernel2D>& candidates, const Objective& objective,
    int min_bank = 2) {
  initial.validate();
  if (min_bank < 1) throw InvalidParam("sfs_sbs: min_bank must be >= 1");
  std::set<std::string> initial_labels;
  for (const auto& k : initial.kernels) initial_labels.insert(k.label);
  for (const auto& c : candidates) {
    c.validate();
    if (initial_labels.count(c.label))
      throw InvalidParam("sfs_sbs: candidate label \"" + c.label + "\" already in bank");
  }
  for (std::size_t i = 0; i < candidates.size(); ++i)
    for (std::size_t j = i + 1; j < candidates.size(); ++j)
      if (candidates[i].label == candidates[j].label)
        throw InvalidParam("sfs_sbs: duplicate candidate label \"" + candidates[i].label + "\"");

  FilterBank bank = initial;
  std::vector<bool> used(candidates.size(), false);
  std::vector<SelectionStep> trace;
  int step = 0;
  double current = detail::run_objective(objective, bank);

  for (;;) {
    int best_c = -1;
    double best_e = 0.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (used[c]) continue;
      FilterBank trial = bank;
      trial.kernels.push_back(candidates[c]);
      const double e = detail::run_objective(objective, trial);
      if (best_c < 0 || e < best_e) {
        best_c = int(c);
        best_e = e;
      }
    }
    if (best_c < 0 || !(best_e < current)) {
      trace.push_back({++step, "stop", "", current});
      break;
    }
    bank.kernels.push_back(candidates[std::size_t(best_c)]);
    used[std::size_t(best_c)] = true;
    current = best_e;
    trace.push_back({++step, "add", candidates[std::size_t(best_c)].label, current});

    if (int(bank.kernels.size()) > min_bank) {
      int best_r = -1;
      double best_re = 0.0;
      for (std::size_t r = 0; r < bank.kernels.size(); ++r) {
        if (!initial_labels.count(bank.kernels[r].label)) continue;
        FilterBank trial;
        trial.version = bank.version;
        for (std::size_t k = 0; k < bank.kernels.size(); ++k)
          if (k != r) trial.kernels.push_back(bank.kernels[k]);
        const double e = detail::run_objective(objective, trial);
        if (best_r < 0 || e < best_re) {
          best_r = int(r);
          best_re = e;
        }
      }
      if (best_r >= 0 && best_re <= current) {
        const std::string label = bank.kernels[std::size_t(best_r)].label;
        bank.kernels.erase(bank.kernels.begin() + best_r);
        current = best_re;
        trace.push_back({++step, "remove", label, current});
      }
    }
  }
  return {std::move(bank), std::move(trace)};
}

inline nlohmann::ordered_json selection_trace_json(const std::vector<SelectionStep>& steps) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["action"] = s.action;
    j["filter_label"] = s.filter_label;
    j["eer"] = s.eer;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace pmiris
