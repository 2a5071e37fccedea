#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "storytag/miner.hpp"
#include "storytag/multiview.hpp"

using namespace storytag;
using nn::Matrix;
using nn::Vector;

namespace {

// Document plus hand-set attention over the given token rows.
struct Fixture {
  HierDocument doc;
  ModelOutput output;
};

Fixture fixture(const std::vector<std::vector<std::string>>& rows, const std::vector<std::vector<double>>& word_w,
                const std::vector<double>& sent_w) {
  Fixture f;
  std::size_t longest = 0;
  for (const auto& r : rows) longest = std::max(longest, r.size());
  AttentionMap att;
  att.word_weights = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(longest));
  att.sentence_weights = Vector(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<int> ids;
    for (const auto& t : rows[i]) ids.push_back(t == "<unk>" ? 0 : 2 + static_cast<int>(ids.size()));
    f.doc.sentences.push_back(ids);
    f.doc.tokens.push_back(rows[i]);
    f.doc.lengths.push_back(static_cast<int>(rows[i].size()));
    att.lengths.push_back(static_cast<int>(rows[i].size()));
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      att.word_weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = word_w[i][j];
    att.sentence_weights(static_cast<Eigen::Index>(i)) = sent_w[i];
  }
  DocumentEncoding enc;
  enc.attention = att;
  f.output.review = enc;
  f.output.mode = FusionMode::gated;
  return f;
}

AttentionMap random_map(std::mt19937_64& rng, HierDocument& doc) {
  std::uniform_int_distribution<int> nl(1, 6), nt(1, 8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const int l = nl(rng);
  AttentionMap att;
  std::vector<int> lengths;
  int longest = 0;
  for (int i = 0; i < l; ++i) {
    lengths.push_back(nt(rng));
    longest = std::max(longest, lengths.back());
  }
  att.word_weights = Matrix::Zero(l, longest);
  att.sentence_weights = Vector(l);
  doc = {};
  for (int i = 0; i < l; ++i) {
    double row = 0;
    for (int j = 0; j < lengths[static_cast<std::size_t>(i)]; ++j) row += (att.word_weights(i, j) = u(rng));
    att.word_weights.row(i) /= row;
    att.sentence_weights(i) = u(rng);
    doc.sentences.emplace_back(static_cast<std::size_t>(lengths[static_cast<std::size_t>(i)]), 5);
    doc.tokens.emplace_back(static_cast<std::size_t>(lengths[static_cast<std::size_t>(i)]), "w");
  }
  att.sentence_weights /= att.sentence_weights.sum();
  att.lengths = lengths;
  doc.lengths = lengths;
  return att;
}

}  // namespace

TEST_CASE("importance score is the Eq-1 product") {
  auto f = fixture({std::vector<std::string>(10, "x")}, {std::vector<double>(10, 0.2)}, {0.1});
  auto c = importance_scores(f.output.review->attention, f.doc);
  REQUIRE(c.size() == 10);
  CHECK(c[0].gamma == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("uniform attention gives equal scores of 1/L") {
  std::vector<std::vector<std::string>> rows{{"a", "b"}, {"c", "d", "e", "f"}, {"g"}};
  auto f = fixture(rows, {{0.5, 0.5}, {0.25, 0.25, 0.25, 0.25}, {1.0}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  for (const auto& c : importance_scores(f.output.review->attention, f.doc))
    CHECK(c.gamma == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("importance scores equal a nested-loop oracle exactly") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    HierDocument doc;
    auto att = random_map(rng, doc);
    auto got = importance_scores(att, doc);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < att.word_weights.rows(); ++i)
      for (Eigen::Index j = 0; j < att.lengths[static_cast<std::size_t>(i)]; ++j) {
        REQUIRE(k < got.size());
        const double expected = att.word_weights(i, j) * att.sentence_weights(i) *
                                static_cast<double>(doc.lengths[static_cast<std::size_t>(i)]);
        CHECK(got[k].gamma == expected);
        CHECK(got[k].sentence_index == static_cast<std::size_t>(i));
        CHECK(got[k].word_index == static_cast<std::size_t>(j));
        ++k;
      }
    CHECK(k == got.size());
  }
}

TEST_CASE("importance scores reject mismatched shapes") {
  auto f = fixture({{"a", "b"}}, {{0.5, 0.5}}, {1.0});
  auto att = f.output.review->attention;
  auto doc = f.doc;
  doc.lengths[0] = 1;
  doc.sentences[0].pop_back();
  CHECK_THROWS(importance_scores(att, doc));
  auto two = f.doc;
  two.sentences.push_back({3});
  two.lengths.push_back(1);
  CHECK_THROWS(importance_scores(att, two));
}

TEST_CASE("cutoff index examples") {
  CHECK(cutoff_index(std::vector<double>(8, 0.3)) == 2);
  std::vector<double> linear;
  for (int i = 0; i < 12; ++i) linear.push_back(2.0 - 0.1 * i);
  CHECK(cutoff_index(linear) == linear.size());
  // Frozen from an independent numpy least-squares fit: slopes at p = 2..7
  // are -0.108, -0.0604, -0.0288, -0.009, -0.00095, -0.00054.
  const std::vector<double> knee{0.50, 0.30, 0.18, 0.10, 0.06, 0.058, 0.057, 0.0565, 0.056, 0.0558};
  CHECK(cutoff_index(knee) == 6);
  CHECK(testing::cutoff_oracle(knee, kSlopeThreshold) == 6);
  CHECK(local_slope(knee, 2) == doctest::Approx(-0.108).epsilon(1e-9));
  CHECK(cutoff_index(std::vector<double>{0.9, 0.5, 0.1}) == 3);
  CHECK(cutoff_index(std::vector<double>{}) == 0);
  CHECK_THROWS_AS(cutoff_index(std::vector<double>{0.1, 0.5, 0.4, 0.3, 0.2}), std::invalid_argument);
}

TEST_CASE("cutoff index matches the least-squares oracle and scales with the threshold") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(5 + rng() % 30);
    double level = 1.0;
    const double decay = 0.3 + 0.6 * u(rng);
    for (auto& x : s) {
      x = level;
      level *= decay;
    }
    CHECK(cutoff_index(s) == testing::cutoff_oracle(s, kSlopeThreshold));
    std::vector<double> doubled = s;
    for (auto& x : doubled) x *= 2;
    CHECK(cutoff_index(doubled, 2 * kSlopeThreshold) == cutoff_index(s));
  }
}

TEST_CASE("mine_tags filters and dedupes") {
  // Sentence 0 gets most of the mass; "violence" is a predefined tag.
  std::vector<std::vector<std::string>> rows{
      {"mafia", "violence", "the", "loyalty", ",", "mafia", "cc", "<unk>", "greed", "plot", "film", "scene"}};
  std::vector<double> w{0.30, 0.25, 0.15, 0.10, 0.06, 0.05, 0.03, 0.02, 0.015, 0.012, 0.008, 0.005};
  auto f = fixture(rows, {w}, {1.0});
  auto mined = mine_tags(f.output, f.doc, TagVocabulary::standard());
  CHECK(std::find(mined.tags.begin(), mined.tags.end(), "violence") == mined.tags.end());
  CHECK(std::count(mined.tags.begin(), mined.tags.end(), "mafia") == 1);
  REQUIRE(!mined.tags.empty());
  CHECK(mined.tags[0] == "mafia");
  CHECK(mined.provenance[0].word_index == 0);
  for (const auto& t : mined.tags) {
    CHECK(t != "the");
    CHECK(t != "cc");
    CHECK(t != ",");
    CHECK(t != "<unk>");
  }
  for (std::size_t i = 1; i < mined.provenance.size(); ++i)
    CHECK(mined.provenance[i - 1].gamma >= mined.provenance[i].gamma);
  CHECK(mined.cutoff <= rows[0].size());
}

TEST_CASE("mine_tags accounting when nothing is filtered") {
  std::vector<std::string> words{"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"};
  std::vector<double> w{0.4, 0.25, 0.15, 0.08, 0.05, 0.04, 0.02, 0.01};
  auto f = fixture({words}, {w}, {1.0});
  auto mined = mine_tags(f.output, f.doc, TagVocabulary::standard());
  CHECK(mined.tags.size() == mined.cutoff);
  for (std::size_t i = 0; i < mined.tags.size(); ++i) CHECK(mined.tags[i] == words[i]);
}

TEST_CASE("mine_tags on an empty review") {
  HierDocument empty;
  empty.sentences = {{0}};
  empty.tokens = {{"<unk>"}};
  empty.lengths = {1};
  auto f = fixture({{"<unk>"}}, {{1.0}}, {1.0});
  CHECK(mine_tags(f.output, empty, TagVocabulary::standard()).tags.empty());
  ModelOutput no_review;
  CHECK_THROWS(mine_tags(no_review, f.doc, TagVocabulary::standard()));
}

TEST_CASE("raising a word's attention never lowers its rank") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    HierDocument doc;
    auto att = random_map(rng, doc);
    const std::size_t i = rng() % static_cast<std::size_t>(att.word_weights.rows());
    const int len = att.lengths[i];
    const int j = static_cast<int>(rng() % static_cast<std::size_t>(len));
    auto rank_of = [&](const AttentionMap& a) {
      auto c = importance_scores(a, doc);
      double target = 0;
      for (const auto& x : c)
        if (x.sentence_index == i && x.word_index == static_cast<std::size_t>(j)) target = x.gamma;
      std::size_t rank = 0;
      for (const auto& x : c)
        if (x.sentence_index != i && x.gamma > target) ++rank;
      return rank;
    };
    auto raised = att;
    const auto ri = static_cast<Eigen::Index>(i);
    raised.word_weights(ri, j) += u(rng);
    raised.word_weights.row(ri) /= raised.word_weights.row(ri).sum();
    CHECK(rank_of(raised) <= rank_of(att));
  }
}

TEST_CASE("stoplist covers common function words") {
  const auto& stop = default_stoplist();
  for (const char* w : {"the", "and", "of", "is", "was", "not"}) CHECK(stop.contains(w));
  CHECK_FALSE(stop.contains("mafia"));
}
