#include "storytag/summarizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "storytag/text.hpp"

namespace storytag {

void SummaryConfig::validate() const {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw std::invalid_argument("target_ratio must be in (0, 1]");
  if (max_sentences < 1) throw std::invalid_argument("max_sentences must be >= 1");
  if (!(damping > 0.0 && damping < 1.0)) throw std::invalid_argument("damping must be in (0, 1)");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
}

double sentence_similarity(const std::vector<std::string>& s1, const std::vector<std::string>& s2) {
  if (s1.empty() || s2.empty()) return 0.0;
  const double denom = std::log(static_cast<double>(s1.size())) + std::log(static_cast<double>(s2.size()));
  if (denom <= 0.0) return 0.0;
  std::set<std::string_view> a(s1.begin(), s1.end());
  std::set<std::string_view> b(s2.begin(), s2.end());
  std::size_t shared = 0;
  for (auto t : a) shared += b.count(t);
  return static_cast<double>(shared) / denom;
}

SentenceGraph::SentenceGraph(std::vector<std::vector<std::string>> nodes) : nodes_(std::move(nodes)) {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  weights_ = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = sentence_similarity(nodes_[static_cast<std::size_t>(i)], nodes_[static_cast<std::size_t>(j)]);
      weights_(i, j) = w;
      weights_(j, i) = w;
    }
  }
}

SentenceGraph::SentenceGraph(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols()) throw std::invalid_argument("weight matrix must be square");
  if ((weights_.array() < 0.0).any()) throw std::invalid_argument("weights must be non-negative");
  const double scale = std::max(1.0, weights_.size() > 0 ? weights_.cwiseAbs().maxCoeff() : 0.0);
  if (weights_.size() > 0 && (weights_ - weights_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("weight matrix must be symmetric");
  }
  weights_.diagonal().setZero();
}

Eigen::VectorXd pagerank(const SentenceGraph& graph, const SummaryConfig& config) {
  const Eigen::Index n = graph.size();
  if (n == 0) throw std::invalid_argument("pagerank needs a non-empty graph");
  if (n == 1) return Eigen::VectorXd::Ones(1);

  // Column j of `transition` spreads node j's score along its out-weights.
  const Eigen::VectorXd out = graph.weights().rowwise().sum();
  Eigen::MatrixXd transition = graph.weights().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (out(j) > 0.0) {
      transition.col(j) /= out(j);
    } else {
      transition.col(j).setZero();
    }
  }

  const double base = (1.0 - config.damping) / static_cast<double>(n);
  Eigen::VectorXd scores = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < config.max_iter; ++it) {
    Eigen::VectorXd next = (config.damping * (transition * scores)).array() + base;
    const double change = (next - scores).cwiseAbs().maxCoeff();
    scores = std::move(next);
    if (change < config.tol) break;
  }
  return scores;
}

std::vector<std::size_t> select_summary_sentences(const std::vector<std::vector<std::string>>& sentences,
                                                  const SummaryConfig& config) {
  config.validate();
  // Collapse duplicates onto the first occurrence.
  std::map<std::vector<std::string>, std::size_t> first_seen;
  std::vector<std::size_t> node_position;
  std::vector<std::vector<std::string>> nodes;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) continue;
    if (first_seen.emplace(sentences[i], i).second) {
      node_position.push_back(i);
      nodes.push_back(sentences[i]);
    }
  }
  if (nodes.empty()) return {};

  const SentenceGraph graph(std::move(nodes));
  const Eigen::VectorXd scores = pagerank(graph, config);

  const auto n = node_position.size();
  const auto wanted = static_cast<std::size_t>(std::ceil(config.target_ratio * static_cast<double>(n) - 1e-9));
  const auto keep = std::min({std::max<std::size_t>(wanted, 1), static_cast<std::size_t>(config.max_sentences), n});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> picked;
  picked.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) picked.push_back(node_position[order[r]]);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

std::vector<std::string> similarity_tokens(std::string_view sentence) {
  auto toks = normalize_text(sentence);
  std::erase_if(toks, [](const std::string& t) { return is_punctuation_token(t); });
  return toks;
}

}  // namespace

std::string summarize_reviews(const std::vector<std::string>& reviews, const SummaryConfig& config) {
  std::vector<std::string> raw;
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& review : reviews) {
    for (auto& s : split_sentences(review)) {
      tokenized.push_back(similarity_tokens(s));
      raw.push_back(std::move(s));
    }
  }
  std::string summary;
  for (auto idx : select_summary_sentences(tokenized, config)) {
    if (!summary.empty()) summary.push_back('\n');
    summary += raw[idx];
  }
  return summary;
}

}  // namespace storytag
