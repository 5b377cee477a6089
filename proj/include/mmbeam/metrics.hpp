#pragma once

#include <array>
#include <map>
#include <span>
#include <string>

#include "mmbeam/common.hpp"

namespace mmbeam {

/// Beam id in 1..64. All external interfaces are 1-based.
class BeamLabel {
 public:
  BeamLabel() = default;
  explicit BeamLabel(int index);
  int index() const noexcept { return index_; }
  bool operator==(const BeamLabel&) const = default;

 private:
  int index_ = 1;
};

/// Top-3 beam ids, most likely first, with non-increasing confidences.
struct BeamPrediction {
  std::array<int, 3> topk{1, 2, 3};
  std::array<double, 3> scores{0.0, 0.0, 0.0};

  /// Throws ArgumentError on out-of-range or repeated ids, or increasing scores.
  void validate() const;
};

namespace metrics {

/// Normalisation distance of the distance-based accuracy (in beams).
inline constexpr double kDbaDelta = 5.0;

struct DbaReport {
  double overall = 0.0;
  double y1 = 0.0, y2 = 0.0, y3 = 0.0;
  std::map<int, double> per_scenario;
  std::map<int, int> per_scenario_count;
  int n_samples = 0;
};

/// Distance-based accuracy: mean over K = 1..3 of
///   Y_K = 1 - mean_n min_{k<=K} min(|pred_{n,k} - truth_n| / 5, 1),
/// overall and per scenario.
DbaReport dba_score(std::span<const BeamLabel> truths, std::span<const BeamPrediction> preds,
                    std::span<const int> scenario_ids);

/// Fraction of samples whose truth is among the first k candidates.
double topk_accuracy(std::span<const BeamLabel> truths, std::span<const BeamPrediction> preds, int k);

/// `key=value` lines: overall, y1..y3, n_samples, then scenario_<id>.
std::string to_key_value(const DbaReport& report);
/// `scope,dba,y1,y2,y3,n_samples` rows: overall first, then one per scenario.
std::string to_csv(const DbaReport& report);

}  // namespace metrics
}  // namespace mmbeam
