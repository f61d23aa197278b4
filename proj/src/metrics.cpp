#include "aclseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

namespace aclseg {

namespace {

/// Neumaier compensated accumulator.
struct Accum {
  double sum = 0, comp = 0;
  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

template <typename T>
Var<T> bce_dice_loss(Var<T> probs, const Tensor<T>& target, LossParts* parts) {
  const Shape& ps = probs.shape();
  const Shape& ts = target.shape();
  if (ps.c != 1 && ps.c != 2) throw ShapeError("bce_dice_loss expects 1 or 2 probability channels");
  if (ts.n != ps.n || ts.h != ps.h || ts.w != ps.w || ts.c != 1)
    throw ShapeError("bce_dice_loss target " + ts.str() + " does not match probabilities " + ps.str());

  Tape<T>* tape = probs.tape;
  const Tensor<T>& p = probs.value();
  const std::size_t C = static_cast<std::size_t>(ps.c);
  const std::size_t ch = C - 1;
  const std::size_t M = target.size();
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;

  Accum a_bce, a_py, a_p, a_y;
  for (std::size_t i = 0; i < M; ++i) {
    const double pv = static_cast<double>(p[i * C + ch]);
    const double y = static_cast<double>(target[i]);
    const double pc = std::clamp(pv, lo, hi);
    a_bce.add(-(y * std::log(pc) + (1 - y) * std::log(1 - pc)));
    a_py.add(pv * y);
    a_p.add(pv);
    a_y.add(y);
  }
  const double bce = a_bce.value() / static_cast<double>(M);
  const double s_py = a_py.value(), s_p = a_p.value(), s_y = a_y.value();
  const double denom = s_p + s_y + kDiceSmooth;
  const double numer = 2 * s_py + kDiceSmooth;
  const double dice = 1 - numer / denom;
  if (parts) *parts = {bce, dice};

  const int pi = probs.id;
  return tape->record(
      Tensor<T>(Shape{}, static_cast<T>(bce + dice)), tape->requires_grad(probs),
      [tape, pi, target, C, ch, M, lo, hi, denom, numer](const Tensor<T>& g) {
        Tensor<T>* sink = tape->grad_sink(pi);
        if (!sink) return;
        const Tensor<T>& pv = tape->value({tape, pi});
        const double scale = static_cast<double>(g[0]);
        for (std::size_t i = 0; i < M; ++i) {
          const double p_i = static_cast<double>(pv[i * C + ch]);
          const double y = static_cast<double>(target[i]);
          double d = 0;
          if (p_i > lo && p_i < hi) d += -(y / p_i - (1 - y) / (1 - p_i)) / static_cast<double>(M);
          d += -(2 * y * denom - numer) / (denom * denom);
          (*sink)[i * C + ch] += static_cast<T>(scale * d);
        }
      });
}

template Var<float> bce_dice_loss(Var<float>, const Tensor<float>&, LossParts*);
template Var<double> bce_dice_loss(Var<double>, const Tensor<double>&, LossParts*);

ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size())
    throw ShapeError("confusion_counts: prediction has " + std::to_string(pred.size()) +
                     " pixels, truth has " + std::to_string(truth.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i], t = truth[i];
    if (p > 1 || t > 1) throw ArgumentError("confusion_counts: masks must be binary (0/1)");
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

namespace {

double ratio(double num, double den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0;
  }
  return num / den;
}

}  // namespace

BinaryMetrics binary_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("binary_metrics: empty confusion counts");
  BinaryMetrics m;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  m.precision = ratio(tp, tp + fp, m.precision_degenerate);
  m.recall = ratio(tp, tp + fn, m.recall_degenerate);
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall, m.f1_degenerate);
  m.error_rate = (fp + fn) / static_cast<double>(c.total());
  return m;
}

MiouResult miou(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("miou: empty confusion counts");
  MiouResult r;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  r.iou_cloud = ratio(tp, tp + fp + fn, r.degenerate);
  r.iou_sky = ratio(tn, tn + fn + fp, r.degenerate);
  r.miou = (r.iou_cloud + r.iou_sky) / 2;
  return r;
}

MiouResult miou(const std::vector<std::vector<std::uint8_t>>& preds,
                const std::vector<std::vector<std::uint8_t>>& truths) {
  if (preds.empty() || preds.size() != truths.size())
    throw ArgumentError("miou needs >= 1 sample and equal prediction/truth counts");
  ConfusionCounts total;
  for (std::size_t i = 0; i < preds.size(); ++i) total += confusion_counts(preds[i], truths[i]);
  return miou(total);
}

MccResult mcc(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("mcc: empty confusion counts");
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  MccResult r;
  if (prod == 0) {
    r.degenerate = true;
    return r;
  }
  r.value = std::clamp((tp * tn - fp * fn) / std::sqrt(prod), -1.0, 1.0);
  return r;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                   std::size_t max_thresholds) {
  if (scores.size() != truth.size()) throw ShapeError("roc_curve: scores/truth size mismatch");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ArgumentError("roc_curve: non-finite score");
    if (truth[i] > 1) throw ArgumentError("roc_curve: truth must be binary");
    pos += truth[i];
  }
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0)
    throw ArgumentError("roc_curve needs at least one positive and one negative pixel");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::pair<double, double>> full{{0.0, 0.0}};
  double auc = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (truth[order[i]] ? tp : fp)++;
    const double fpr = static_cast<double>(fp) / neg, tpr = static_cast<double>(tp) / pos;
    const auto& prev = full.back();
    auc += (fpr - prev.first) * (tpr + prev.second) / 2;
    full.emplace_back(fpr, tpr);
  }

  RocCurve roc;
  roc.auc = auc;
  const std::size_t thresholds = full.size() - 1;
  if (max_thresholds == 0 || thresholds <= max_thresholds) {
    roc.points = std::move(full);
  } else {
    roc.points.push_back(full.front());
    for (std::size_t k = 1; k <= max_thresholds; ++k)
      roc.points.push_back(full[(k * thresholds) / max_thresholds]);
  }
  return roc;
}

MetricReport make_report(const ConfusionCounts& c, const RocCurve& roc) {
  const BinaryMetrics b = binary_metrics(c);
  MetricReport r;
  r.precision = b.precision;
  r.recall = b.recall;
  r.f1 = b.f1;
  r.error_rate = b.error_rate;
  r.miou = miou(c).miou;
  r.mcc = mcc(c).value;
  r.auc = roc.auc;
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"error_rate", r.error_rate}, {"miou", r.miou}, {"mcc", r.mcc}, {"auc", r.auc}};
}

std::string roc_to_csv(const RocCurve& roc) {
  std::string out = "fpr,tpr\n";
  char line[64];
  for (const auto& [fpr, tpr] : roc.points) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", fpr, tpr);
    out += line;
  }
  return out;
}

}  // namespace aclseg
