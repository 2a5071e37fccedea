#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "storytag/corpus.hpp"
#include "storytag/multiview.hpp"

namespace storytag {

/// A set of tag indices, sorted ascending without duplicates.
using TagSet = std::vector<std::size_t>;

TagSet make_tag_set(std::vector<std::size_t> tags);
TagSet tag_set_of(std::span<const std::string> tags, const TagVocabulary& vocab);

/// Indices of the k largest probabilities, best first; ties go to the
/// lower index.
std::vector<std::size_t> top_k(const Eigen::VectorXd& distribution, int k);

/// Pooled micro-F1 over all instances and tags, as a percentage.
double micro_f1(std::span<const TagSet> predictions, std::span<const TagSet> golds);

/// Number of distinct tags predicted over the whole set.
std::size_t tags_learned(std::span<const TagSet> predictions);

/// The k most frequent tags over train-split records (ties by tag index),
/// best first. Records from other splits are ignored.
std::vector<std::size_t> most_frequent_baseline(std::span<const MovieRecord> train_records,
                                                const TagVocabulary& vocab, int k);

struct ReviewBin {
  int low = 0;   // inclusive
  int high = 0;  // inclusive
  std::size_t instances = 0;
  double f1_multi_view = 0.0;
  double f1_synopsis_only = 0.0;
  double delta = 0.0;
};

/// Bin edges 1-10, 11-20, ..., 81-90, 91-99 and 100 (counts above 100 fall
/// in the last bin). Movies without reviews are not binned.
int review_bin_index(std::size_t review_count);
std::vector<ReviewBin> review_bins();

/// Per-bin F1(multi-view) - F1(synopsis-only). Empty bins report zeros.
std::vector<ReviewBin> analyze_by_review_count(std::span<const TagSet> multi_view,
                                               std::span<const TagSet> synopsis_only,
                                               std::span<const TagSet> golds,
                                               std::span<const std::size_t> review_counts);

struct EvalReport {
  std::map<int, double> f1_at_k;
  std::map<int, std::size_t> tl_at_k;
  std::map<int, std::vector<TagSet>> predictions;  // per k, per instance
  std::vector<ReviewBin> review_bins;
  std::optional<GateStats> gate;
};

/// Scores ranked predictions at every k in `ks`.
EvalReport evaluate_rankings(std::span<const std::vector<std::size_t>> rankings, std::span<const TagSet> golds,
                             std::span<const int> ks = std::span<const int>());

/// Structured text form: one JSON object.
std::string report_to_json(const EvalReport& report, const TagVocabulary& vocab, bool include_predictions);

}  // namespace storytag
