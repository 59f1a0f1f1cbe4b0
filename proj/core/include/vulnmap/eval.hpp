#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vulnmap/records.hpp"

namespace vulnmap::eval {

inline constexpr double kDefaultIouThreshold = 0.75;

/// Intersection over union of two axis-aligned boxes; 0 when disjoint.
double iou(const PixelRect& a, const PixelRect& b);

/// Intersection over union of two simple polygons (vertex order and closure
/// are normalized). Returns 0 when either polygon has no area.
double polygon_iou(const PixelPolygon& a, const PixelPolygon& b);

struct MatchPair {
  std::size_t prediction = 0;
  std::size_t truth = 0;
  double iou = 0.0;
};

struct MatchSet {
  std::vector<MatchPair> pairs;  // in matching order
  std::vector<std::size_t> unmatched_predictions;
  std::vector<std::size_t> unmatched_truths;
};

/// Dense predictions x truths IoU table, row-major.
struct IouTable {
  std::size_t predictions = 0;
  std::size_t truths = 0;
  std::vector<double> values;

  double at(std::size_t p, std::size_t t) const { return values[p * truths + t]; }
};

IouTable box_iou_table(std::span<const PixelRect> predictions, std::span<const PixelRect> truths);

/// Greedy one-to-one matching: pairs with IoU strictly above `threshold` are
/// taken in descending IoU order, ties by (truth index, prediction index),
/// skipping any pair whose prediction or truth is already used.
MatchSet match_instances(const IouTable& table, double threshold = kDefaultIouThreshold);
MatchSet match_instances(std::span<const PixelRect> predictions,
                         std::span<const PixelRect> truths,
                         double threshold = kDefaultIouThreshold);

/// Square count matrix, rows = ground truth class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes) {}

  std::size_t classes() const { return classes_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  void add(std::size_t truth, std::size_t predicted, std::size_t n = 1);
  std::size_t total() const;
  std::size_t trace() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

struct LabelPair {
  ClassId truth = 0;
  ClassId predicted = 0;
};

struct AttributeMetrics {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Accuracy = trace / total. Macro F1 averages per-class F1 over the classes
/// that occur as truth or prediction at least once. Throws
/// std::invalid_argument on an empty matrix.
AttributeMetrics attribute_metrics(const ConfusionMatrix& confusion);
AttributeMetrics attribute_metrics(std::span<const LabelPair> pairs, std::size_t class_count);

struct EvalOptions {
  double iou_threshold = kDefaultIouThreshold;
  bool mask_iou = false;  // polygon IoU when both sides carry a mask
};

struct EvalReport {
  double iou_threshold = kDefaultIouThreshold;
  bool mask_iou = false;
  std::size_t predictions = 0;
  std::size_t truths = 0;
  std::size_t matched = 0;
  double precision = 0.0;  // matched / predictions (0 when no predictions)
  double recall = 0.0;     // matched / truths (0 when no truths)
  PerAttribute<std::optional<AttributeMetrics>> attributes;  // nullopt when nothing matched
};

/// Matches per image_id, then scores each attribute over the matched pairs.
EvalReport evaluate(std::span<const DetectionRecord> predictions,
                    std::span<const AnnotatedInstance> truths, const EvalOptions& options = {});

}  // namespace vulnmap::eval
