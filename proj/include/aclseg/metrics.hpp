#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aclseg/autodiff.hpp"

namespace aclseg {

// ----------------------------------------------------------------------- loss

struct LossParts {
  double bce = 0;
  double dice = 0;
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

// BCE (mean over pixels, probabilities clamped to [1e-7, 1 - 1e-7]) plus
// Dice loss 1 - (2*sum(p*y) + 1) / (sum(p) + sum(y) + 1) over the whole batch.
// probs is N x H x W x 1, or N x H x W x 2 in which case channel 1 (cloud) is
// used. target is N x H x W x 1 with values in {0, 1}.
template <typename T>
Var<T> bce_dice_loss(Var<T> probs, const Tensor<T>& target, LossParts* parts = nullptr);

// -------------------------------------------------------------------- metrics

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Cloud (1) is the positive class. Inputs must be 0/1.
ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth);

// Ratios with a zero denominator are reported as 0 and flagged.
struct BinaryMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double error_rate = 0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

BinaryMetrics binary_metrics(const ConfusionCounts& c);

struct MiouResult {
  double miou = 0;
  double iou_cloud = 0;
  double iou_sky = 0;
  bool degenerate = false;
};

// Mean of the cloud and sky Jaccard indices from dataset-wide counts.
MiouResult miou(const ConfusionCounts& c);
MiouResult miou(const std::vector<std::vector<std::uint8_t>>& preds,
                const std::vector<std::vector<std::uint8_t>>& truths);

struct MccResult {
  double value = 0;
  bool degenerate = false;
};

MccResult mcc(const ConfusionCounts& c);

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) first, (1,1) last
  double auc = 0;
};

// Thresholds sweep every distinct score (predict positive when score >= t).
// AUC is the trapezoid area over the full sweep; the stored points are thinned
// evenly to at most max_thresholds + 1 when there are more distinct scores.
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                   std::size_t max_thresholds = 1000);

struct MetricReport {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double error_rate = 0;
  double miou = 0;
  double mcc = 0;
  double auc = 0;
};

MetricReport make_report(const ConfusionCounts& c, const RocCurve& roc);
// Exactly {precision, recall, f1, error_rate, miou, mcc, auc}.
nlohmann::json to_json(const MetricReport& r);
// "fpr,tpr" header then one point per line.
std::string roc_to_csv(const RocCurve& roc);

}  // namespace aclseg
