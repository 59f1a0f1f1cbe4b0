#include "vulnmap/correlate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "detail/parallel.hpp"
#include "vulnmap/error.hpp"

namespace vulnmap::correlate {

std::vector<BlockProfile> block_profiles(std::span<const geocode::BuildingAttributeRecord> buildings) {
  std::map<std::string, PerAttribute<std::vector<std::size_t>>> counts;
  for (const auto& b : buildings) {
    auto [it, inserted] = counts.try_emplace(b.block_id);
    if (inserted) {
      for (Attribute a : kAllAttributes) it->second[index_of(a)].assign(class_count(a), 0);
    }
    for (Attribute a : kAllAttributes) ++it->second[index_of(a)].at(b.consensus[index_of(a)]);
  }

  std::vector<BlockProfile> out;
  out.reserve(counts.size());
  for (const auto& [block, per_attr] : counts) {
    BlockProfile p;
    p.block_id = block;
    for (auto c : per_attr[0]) p.n_buildings += c;
    for (Attribute a : kAllAttributes) {
      auto& props = p.proportions[index_of(a)];
      for (auto c : per_attr[index_of(a)]) {
        props.push_back(static_cast<double>(c) / static_cast<double>(p.n_buildings));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: needs at least 2 values");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // Constant inputs can leave rounding residue in the centered sums.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  if (sxx == 0.0 || syy == 0.0 || constant(x) || constant(y)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

JoinedTable join_k3_profiles(std::span<const k3::BlockK3> blocks,
                             std::span<const BlockProfile> profiles) {
  std::map<std::string, const BlockProfile*> by_block;
  for (const auto& p : profiles) by_block[p.block_id] = &p;
  std::map<std::string, double> k3_by_block;
  for (const auto& b : blocks) k3_by_block[b.block_id] = b.k3;

  JoinedTable t;
  t.columns.push_back("k3");
  for (Attribute a : kAllAttributes) {
    for (auto name : class_names(a)) {
      t.columns.push_back(std::string(attribute_name(a)) + ":" + std::string(name));
    }
  }
  t.values.resize(t.columns.size());
  for (const auto& [block, k3] : k3_by_block) {
    auto it = by_block.find(block);
    if (it == by_block.end()) continue;
    t.block_ids.push_back(block);
    std::size_t col = 0;
    t.values[col++].push_back(k3);
    for (Attribute a : kAllAttributes) {
      for (double v : it->second->proportions[index_of(a)]) t.values[col++].push_back(v);
    }
  }
  return t;
}

CorrelationMatrix correlation_matrix(const JoinedTable& table, std::size_t threads) {
  if (table.rows() < 2) throw std::invalid_argument("correlation_matrix: needs at least 2 rows");
  const std::size_t k = table.columns.size();
  CorrelationMatrix m{table.columns, std::vector<std::optional<double>>(k * k)};
  detail::parallel_for(k, threads, [&](std::size_t i) {
    m.cells[i * k + i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) m.cells[i * k + j] = pearson(table.values[i], table.values[j]);
  });
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) m.cells[i * k + j] = m.cells[j * k + i];
  }
  return m;
}

std::optional<LineFit> least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("least_squares: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

std::vector<ClassId> default_class_order(Attribute a) {
  switch (a) {
    case Attribute::construction_type:
      return {class_id(ConstructionType::unconfined), class_id(ConstructionType::confined)};
    case Attribute::material:
      return {class_id(Material::wood_polished),    class_id(Material::wood_crude_plank),
              class_id(Material::corrugated_metal), class_id(Material::brick_or_concrete_block),
              class_id(Material::plaster),          class_id(Material::mix_other_unclear)};
    case Attribute::use:
      return {class_id(Use::residential), class_id(Use::non_residential), class_id(Use::mixed)};
    case Attribute::condition:
      return {class_id(Condition::poor), class_id(Condition::fair), class_id(Condition::good)};
  }
  throw std::logic_error("unknown attribute");
}

TrendSummary class_k3_trend(std::span<const geocode::BuildingAttributeRecord> buildings,
                            std::span<const k3::BlockK3> blocks, Attribute attribute,
                            std::span<const ClassId> class_order) {
  std::map<std::string, double> k3_by_block;
  for (const auto& b : blocks) k3_by_block[b.block_id] = b.k3;

  // Collect each class's K3 values and sum them sorted, so the means do not
  // depend on building order.
  std::vector<std::vector<double>> values(class_count(attribute));
  for (const auto& b : buildings) {
    auto it = k3_by_block.find(b.block_id);
    if (it == k3_by_block.end()) {
      throw InputError("building '" + b.footprint_id + "' lies in block '" + b.block_id +
                       "' which has no K3 value");
    }
    values[b.consensus[index_of(attribute)]].push_back(it->second);
  }

  TrendSummary out;
  out.attribute = attribute;
  std::vector<double> xs, ys;
  for (std::size_t rank = 0; rank < class_order.size(); ++rank) {
    const ClassId c = class_order[rank];
    if (c >= values.size()) throw std::invalid_argument("class_k3_trend: class out of range");
    auto& v = values[c];
    ClassTrend ct{c, rank, std::nullopt, v.size()};
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (double e : v) sum += e;
      ct.mean_k3 = sum / static_cast<double>(v.size());
      xs.push_back(static_cast<double>(rank));
      ys.push_back(*ct.mean_k3);
    }
    out.classes.push_back(ct);
  }
  out.fit = least_squares(xs, ys);
  return out;
}

double Histogram::bin_lo(std::size_t b) const {
  return lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(counts.size());
}

double Histogram::bin_hi(std::size_t b) const {
  return b + 1 == counts.size() ? hi : bin_lo(b + 1);
}

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  if (!(lo < hi)) throw std::invalid_argument("histogram: requires lo < hi");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0, 0};
  for (double v : values) {
    if (v < lo) {
      ++h.underflow;
    } else if (!(v <= hi)) {
      ++h.overflow;
    } else {
      auto b = static_cast<std::size_t>(std::floor((v - lo) * static_cast<double>(bins) / (hi - lo)));
      // Rounding can land just below an edge the value sits on.
      while (b + 1 < bins && v >= h.bin_lo(b + 1)) ++b;
      while (b > 0 && v < h.bin_lo(b)) --b;
      ++h.counts[std::min(b, bins - 1)];
    }
  }
  return h;
}

}  // namespace vulnmap::correlate
