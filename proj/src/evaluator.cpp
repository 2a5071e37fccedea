#include "storytag/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace storytag {

TagSet make_tag_set(std::vector<std::size_t> tags) {
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  return tags;
}

TagSet tag_set_of(std::span<const std::string> tags, const TagVocabulary& vocab) {
  std::vector<std::size_t> out;
  for (const auto& t : tags) {
    auto idx = vocab.index_of(t);
    if (!idx) throw std::invalid_argument("unknown tag '" + t + "'");
    out.push_back(*idx);
  }
  return make_tag_set(std::move(out));
}

std::vector<std::size_t> top_k(const Eigen::VectorXd& distribution, int k) {
  const auto n = static_cast<std::size_t>(distribution.size());
  if (k < 1 || static_cast<std::size_t>(k) > n) throw std::invalid_argument("k must be in [1, number of tags]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](std::size_t a, std::size_t b) {
    const double pa = distribution(static_cast<Eigen::Index>(a));
    const double pb = distribution(static_cast<Eigen::Index>(b));
    return pa != pb ? pa > pb : a < b;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts pooled_counts(std::span<const TagSet> predictions, std::span<const TagSet> golds) {
  Counts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = golds[i];
    std::vector<std::size_t> both;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
    c.tp += both.size();
    c.fp += p.size() - both.size();
    c.fn += g.size() - both.size();
  }
  return c;
}

double f1_from(const Counts& c) {
  const double precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  const double recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double micro_f1(std::span<const TagSet> predictions, std::span<const TagSet> golds) {
  if (predictions.size() != golds.size()) throw std::invalid_argument("prediction and gold lists differ in length");
  return f1_from(pooled_counts(predictions, golds));
}

std::size_t tags_learned(std::span<const TagSet> predictions) {
  std::set<std::size_t> seen;
  for (const auto& p : predictions) seen.insert(p.begin(), p.end());
  return seen.size();
}

std::vector<std::size_t> most_frequent_baseline(std::span<const MovieRecord> train_records,
                                                const TagVocabulary& vocab, int k) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  bool any = false;
  for (const auto& r : train_records) {
    if (r.split != Split::train) continue;
    any = true;
    for (auto t : tag_set_of(r.gold_tags, vocab)) counts(static_cast<Eigen::Index>(t)) += 1.0;
  }
  if (!any) throw std::invalid_argument("most frequent baseline needs training records");
  return top_k(counts, k);
}

int review_bin_index(std::size_t review_count) {
  if (review_count == 0) return -1;
  if (review_count >= 100) return 10;
  return static_cast<int>((review_count - 1) / 10);
}

std::vector<ReviewBin> review_bins() {
  std::vector<ReviewBin> bins;
  for (int b = 0; b < 10; ++b) bins.push_back({10 * b + 1, b == 9 ? 99 : 10 * b + 10});
  bins.push_back({100, 100});
  return bins;
}

std::vector<ReviewBin> analyze_by_review_count(std::span<const TagSet> multi_view,
                                               std::span<const TagSet> synopsis_only,
                                               std::span<const TagSet> golds,
                                               std::span<const std::size_t> review_counts) {
  const auto n = golds.size();
  if (multi_view.size() != n || synopsis_only.size() != n || review_counts.size() != n) {
    throw std::invalid_argument("review-count analysis needs aligned lists");
  }
  auto bins = review_bins();
  std::vector<std::vector<std::size_t>> members(bins.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int b = review_bin_index(review_counts[i]);
    if (b >= 0) members[static_cast<std::size_t>(b)].push_back(i);
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (members[b].empty()) continue;
    std::vector<TagSet> mv, so, g;
    for (auto i : members[b]) {
      mv.push_back(multi_view[i]);
      so.push_back(synopsis_only[i]);
      g.push_back(golds[i]);
    }
    bins[b].instances = members[b].size();
    bins[b].f1_multi_view = micro_f1(mv, g);
    bins[b].f1_synopsis_only = micro_f1(so, g);
    bins[b].delta = bins[b].f1_multi_view - bins[b].f1_synopsis_only;
  }
  return bins;
}

EvalReport evaluate_rankings(std::span<const std::vector<std::size_t>> rankings, std::span<const TagSet> golds,
                             std::span<const int> ks) {
  static constexpr int kDefaultKs[] = {3, 5};
  if (ks.empty()) ks = kDefaultKs;
  if (rankings.size() != golds.size()) throw std::invalid_argument("ranking and gold lists differ in length");
  EvalReport report;
  for (int k : ks) {
    std::vector<TagSet> preds;
    preds.reserve(rankings.size());
    for (const auto& r : rankings) {
      if (r.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("ranking shorter than k");
      preds.push_back(make_tag_set({r.begin(), r.begin() + k}));
    }
    report.f1_at_k[k] = micro_f1(preds, golds);
    report.tl_at_k[k] = tags_learned(preds);
    report.predictions[k] = std::move(preds);
  }
  return report;
}

std::string report_to_json(const EvalReport& report, const TagVocabulary& vocab, bool include_predictions) {
  using nlohmann::json;
  auto round2 = [](double x) { return std::round(x * 100.0) / 100.0; };
  json j;
  for (const auto& [k, f1] : report.f1_at_k) j["f1_at_k"][std::to_string(k)] = round2(f1);
  for (const auto& [k, tl] : report.tl_at_k) j["tl_at_k"][std::to_string(k)] = tl;
  if (!report.review_bins.empty()) {
    j["review_bins"] = json::array();
    for (const auto& b : report.review_bins) {
      j["review_bins"].push_back({{"low", b.low},
                                  {"high", b.high},
                                  {"instances", b.instances},
                                  {"f1_multi_view", round2(b.f1_multi_view)},
                                  {"f1_synopsis_only", round2(b.f1_synopsis_only)},
                                  {"delta", round2(b.delta)}});
    }
  }
  if (report.gate) {
    j["gate"] = {{"synopsis_fraction", report.gate->synopsis_fraction},
                 {"review_fraction", report.gate->review_fraction},
                 {"instances", report.gate->instances}};
  }
  if (include_predictions) {
    for (const auto& [k, preds] : report.predictions) {
      json rows = json::array();
      for (const auto& p : preds) {
        json tags = json::array();
        for (auto t : p) tags.push_back(vocab.tag(t));
        rows.push_back(tags);
      }
      j["predictions"][std::to_string(k)] = rows;
    }
  }
  return j.dump(2);
}

}  // namespace storytag
