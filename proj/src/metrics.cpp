#include "mmbeam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

namespace mmbeam {

BeamLabel::BeamLabel(int index) : index_(index) {
  if (index < 1 || index > kNumBeams)
    throw ArgumentError("beam index " + std::to_string(index) + " outside 1.." + std::to_string(kNumBeams));
}

void BeamPrediction::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (topk[i] < 1 || topk[i] > kNumBeams) throw ArgumentError("predicted beam id out of range");
    for (int j = 0; j < i; ++j)
      if (topk[i] == topk[j]) throw ArgumentError("predicted beam ids must be distinct");
  }
  if (scores[1] > scores[0] || scores[2] > scores[1]) throw ArgumentError("prediction scores must be non-increasing");
}

namespace metrics {

namespace {

struct Partial {
  std::array<double, 3> err{0, 0, 0};
  int n = 0;
};

void accumulate(Partial& acc, int truth, const BeamPrediction& p) {
  double best = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = std::min(std::abs(p.topk[k] - truth) / kDbaDelta, 1.0);
    best = std::min(best, d);
    acc.err[k] += best;
  }
  ++acc.n;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

}  // namespace

DbaReport dba_score(std::span<const BeamLabel> truths, std::span<const BeamPrediction> preds,
                    std::span<const int> scenario_ids) {
  if (truths.size() != preds.size() || truths.size() != scenario_ids.size())
    throw ArgumentError("dba_score: truths, predictions and scenario ids must have equal length");
  if (truths.empty()) throw ArgumentError("dba_score: empty input");
  Partial all;
  std::map<int, Partial> by_scenario;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    preds[i].validate();
    accumulate(all, truths[i].index(), preds[i]);
    accumulate(by_scenario[scenario_ids[i]], truths[i].index(), preds[i]);
  }
  auto overall = [](const Partial& p) {
    return ((1.0 - p.err[0] / p.n) + (1.0 - p.err[1] / p.n) + (1.0 - p.err[2] / p.n)) / 3.0;
  };
  DbaReport r;
  r.n_samples = all.n;
  r.y1 = 1.0 - all.err[0] / all.n;
  r.y2 = 1.0 - all.err[1] / all.n;
  r.y3 = 1.0 - all.err[2] / all.n;
  r.overall = (r.y1 + r.y2 + r.y3) / 3.0;
  for (const auto& [sid, p] : by_scenario) {
    r.per_scenario[sid] = overall(p);
    r.per_scenario_count[sid] = p.n;
  }
  return r;
}

double topk_accuracy(std::span<const BeamLabel> truths, std::span<const BeamPrediction> preds, int k) {
  if (k < 1 || k > 3) throw ArgumentError("topk_accuracy: k must be in 1..3");
  if (truths.size() != preds.size()) throw ArgumentError("topk_accuracy: length mismatch");
  if (truths.empty()) throw ArgumentError("topk_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto& t = preds[i].topk;
    if (std::find(t.begin(), t.begin() + k, truths[i].index()) != t.begin() + k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

std::string to_key_value(const DbaReport& r) {
  std::ostringstream os;
  os << "overall=" << fmt(r.overall) << '\n'
     << "y1=" << fmt(r.y1) << '\n'
     << "y2=" << fmt(r.y2) << '\n'
     << "y3=" << fmt(r.y3) << '\n'
     << "n_samples=" << r.n_samples << '\n';
  for (const auto& [sid, v] : r.per_scenario) os << "scenario_" << sid << '=' << fmt(v) << '\n';
  return os.str();
}

std::string to_csv(const DbaReport& r) {
  std::ostringstream os;
  os << "scope,dba,y1,y2,y3,n_samples\n";
  os << "overall," << fmt(r.overall) << ',' << fmt(r.y1) << ',' << fmt(r.y2) << ',' << fmt(r.y3) << ','
     << r.n_samples << '\n';
  for (const auto& [sid, v] : r.per_scenario) {
    const auto it = r.per_scenario_count.find(sid);
    os << "scenario_" << sid << ',' << fmt(v) << ",,,," << (it == r.per_scenario_count.end() ? 0 : it->second) << '\n';
  }
  return os.str();
}

}  // namespace metrics
}  // namespace mmbeam
