#include "vulnmap/eval.hpp"

#include <algorithm>
#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

namespace vulnmap::eval {
namespace bg = boost::geometry;

double iou(const PixelRect& a, const PixelRect& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;

BgPolygon to_polygon(const PixelPolygon& pts) {
  BgPolygon poly;
  for (const auto& p : pts) bg::append(poly.outer(), BgPoint(p.x, p.y));
  bg::correct(poly);
  return poly;
}

void require_valid(const BgPolygon& poly) {
  std::string reason;
  if (!bg::is_valid(poly, reason)) throw std::invalid_argument("invalid mask polygon: " + reason);
}

}  // namespace

double polygon_iou(const PixelPolygon& a, const PixelPolygon& b) {
  const BgPolygon pa = to_polygon(a);
  const BgPolygon pb = to_polygon(b);
  const double area_a = bg::area(pa);
  const double area_b = bg::area(pb);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  require_valid(pa);
  require_valid(pb);
  std::vector<BgPolygon> inter;
  bg::intersection(pa, pb, inter);
  double inter_area = 0.0;
  for (const auto& p : inter) inter_area += bg::area(p);
  const double uni = area_a + area_b - inter_area;
  return uni > 0.0 ? std::clamp(inter_area / uni, 0.0, 1.0) : 0.0;
}

IouTable box_iou_table(std::span<const PixelRect> predictions, std::span<const PixelRect> truths) {
  IouTable t{predictions.size(), truths.size(), {}};
  t.values.reserve(predictions.size() * truths.size());
  for (const auto& p : predictions) {
    for (const auto& g : truths) t.values.push_back(iou(p, g));
  }
  return t;
}

MatchSet match_instances(const IouTable& table, double threshold) {
  struct Candidate {
    double iou;
    std::size_t truth;
    std::size_t prediction;
  };
  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < table.predictions; ++p) {
    for (std::size_t t = 0; t < table.truths; ++t) {
      const double v = table.at(p, t);
      if (v > threshold) candidates.push_back({v, t, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.truth, a.prediction) < std::tie(b.truth, b.prediction);
  });

  MatchSet out;
  std::vector<bool> pred_used(table.predictions, false);
  std::vector<bool> truth_used(table.truths, false);
  for (const auto& c : candidates) {
    if (pred_used[c.prediction] || truth_used[c.truth]) continue;
    pred_used[c.prediction] = true;
    truth_used[c.truth] = true;
    out.pairs.push_back({c.prediction, c.truth, c.iou});
  }
  for (std::size_t p = 0; p < table.predictions; ++p) {
    if (!pred_used[p]) out.unmatched_predictions.push_back(p);
  }
  for (std::size_t t = 0; t < table.truths; ++t) {
    if (!truth_used[t]) out.unmatched_truths.push_back(t);
  }
  return out;
}

MatchSet match_instances(std::span<const PixelRect> predictions,
                         std::span<const PixelRect> truths, double threshold) {
  return match_instances(box_iou_table(predictions, truths), threshold);
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::size_t n) {
  if (truth >= classes_ || predicted >= classes_) {
    throw std::out_of_range("confusion matrix class out of range");
  }
  counts_[truth * classes_ + predicted] += n;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t sum = 0;
  for (std::size_t i = 0; i < classes_; ++i) sum += at(i, i);
  return sum;
}

AttributeMetrics attribute_metrics(const ConfusionMatrix& confusion) {
  const std::size_t total = confusion.total();
  if (total == 0) throw std::invalid_argument("attribute_metrics: no matched pairs");
  AttributeMetrics m{confusion, 0.0, 0.0};
  m.accuracy = static_cast<double>(confusion.trace()) / static_cast<double>(total);

  double f1_sum = 0.0;
  std::size_t present = 0;
  const std::size_t k = confusion.classes();
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0;
    std::size_t col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion.at(c, j);
      col += confusion.at(j, c);
    }
    if (row == 0 && col == 0) continue;
    ++present;
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (row + col); 0 when TP = 0.
    f1_sum += 2.0 * static_cast<double>(confusion.at(c, c)) / static_cast<double>(row + col);
  }
  m.macro_f1 = f1_sum / static_cast<double>(present);
  return m;
}

AttributeMetrics attribute_metrics(std::span<const LabelPair> pairs, std::size_t class_count) {
  ConfusionMatrix cm(class_count);
  for (const auto& p : pairs) cm.add(p.truth, p.predicted);
  return attribute_metrics(cm);
}

EvalReport evaluate(std::span<const DetectionRecord> predictions,
                    std::span<const AnnotatedInstance> truths, const EvalOptions& options) {
  struct ImageGroup {
    std::vector<std::size_t> predictions;
    std::vector<std::size_t> truths;
  };
  std::map<std::string, ImageGroup> images;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    images[predictions[i].image_id].predictions.push_back(i);
  }
  for (std::size_t i = 0; i < truths.size(); ++i) images[truths[i].image_id].truths.push_back(i);

  EvalReport report;
  report.iou_threshold = options.iou_threshold;
  report.mask_iou = options.mask_iou;
  report.predictions = predictions.size();
  report.truths = truths.size();

  PerAttribute<ConfusionMatrix> confusion;
  for (Attribute a : kAllAttributes) confusion[index_of(a)] = ConfusionMatrix(class_count(a));

  for (const auto& [image, group] : images) {
    IouTable table{group.predictions.size(), group.truths.size(), {}};
    table.values.reserve(table.predictions * table.truths);
    for (std::size_t p : group.predictions) {
      for (std::size_t t : group.truths) {
        const auto& pred = predictions[p];
        const auto& truth = truths[t];
        double v = iou(pred.bbox, truth.bbox);
        if (options.mask_iou && pred.mask && truth.mask) {
          try {
            v = polygon_iou(*pred.mask, *truth.mask);
          } catch (const std::invalid_argument&) {
            // Unusable mask geometry: keep the box IoU for this pair.
          }
        }
        table.values.push_back(v);
      }
    }
    const MatchSet matches = match_instances(table, options.iou_threshold);
    for (const auto& m : matches.pairs) {
      const auto& pred = predictions[group.predictions[m.prediction]];
      const auto& truth = truths[group.truths[m.truth]];
      for (Attribute a : kAllAttributes) {
        const std::size_t ai = index_of(a);
        confusion[ai].add(truth.labels[ai], pred.attributes[ai].class_id);
      }
    }
    report.matched += matches.pairs.size();
  }

  if (report.predictions) {
    report.precision = static_cast<double>(report.matched) / static_cast<double>(report.predictions);
  }
  if (report.truths) {
    report.recall = static_cast<double>(report.matched) / static_cast<double>(report.truths);
  }
  if (report.matched) {
    for (Attribute a : kAllAttributes) {
      report.attributes[index_of(a)] = attribute_metrics(confusion[index_of(a)]);
    }
  }
  return report;
}

}  // namespace vulnmap::eval
