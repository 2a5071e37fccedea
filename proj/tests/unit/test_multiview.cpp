#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "storytag/evaluator.hpp"
#include "storytag/multiview.hpp"
#include "synthetic.hpp"

using namespace storytag;
using nn::Matrix;
using nn::Vector;
using testing::lstm_oracle;

namespace {

Vector softmax(const Vector& x) {
  Vector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

// Additive attention pooling written out from the equations.
std::pair<Vector, Vector> attention_oracle(const Matrix& states, const Matrix& w, const Matrix& b, const Matrix& v) {
  Vector scores(states.cols());
  for (Eigen::Index t = 0; t < states.cols(); ++t) {
    Vector u = (w * states.col(t) + b).array().tanh();
    scores(t) = (v * u)(0, 0);
  }
  Vector alpha = softmax(scores);
  return {states * alpha, alpha};
}

Vector batch_norm_oracle(const Vector& x, const ParameterStore& p, const std::string& name) {
  const auto& mean = p.at(name + ".mean").value;
  const auto& var = p.at(name + ".var").value;
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out(i) = (x(i) - mean(i, 0)) / std::sqrt(var(i, 0) + 1e-5) * p.at(name + ".gamma").value(i, 0) +
             p.at(name + ".beta").value(i, 0);
  return out;
}

Vector view_oracle(const HierDocument& doc, const ParameterStore& p, const std::string& view) {
  auto m = [&](const std::string& n) -> const Matrix& { return p.at(view + "." + n).value; };
  const Matrix& emb = p.at("embedding").value;
  const auto l = static_cast<Eigen::Index>(doc.num_sentences());
  const Eigen::Index h2 = m("word.fwd.wh").cols() * 2;
  Matrix sentence_vectors(h2, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    const auto& ids = doc.sentences[static_cast<std::size_t>(i)];
    Matrix x(emb.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t t = 0; t < ids.size(); ++t) x.col(static_cast<Eigen::Index>(t)) = emb.col(ids[t]);
    Matrix states(h2, x.cols());
    states << lstm_oracle(x, m("word.fwd.wx"), m("word.fwd.wh"), m("word.fwd.b"), false),
        lstm_oracle(x, m("word.bwd.wx"), m("word.bwd.wh"), m("word.bwd.b"), true);
    auto [sh, alpha] = attention_oracle(states, m("word.att.w"), m("word.att.b"), m("word.att.v"));
    sentence_vectors.col(i) = batch_norm_oracle(sh, p, view + ".word.bn");
  }
  Matrix states(h2, l);
  states << lstm_oracle(sentence_vectors, m("sent.fwd.wx"), m("sent.fwd.wh"), m("sent.fwd.b"), false),
      lstm_oracle(sentence_vectors, m("sent.bwd.wx"), m("sent.bwd.wh"), m("sent.bwd.b"), true);
  auto [context, alpha_s] = attention_oracle(states, m("sent.att.w"), m("sent.att.b"), m("sent.att.v"));
  Vector mil = Vector::Zero(m("sent.pred.w").rows());
  for (Eigen::Index i = 0; i < l; ++i) mil += alpha_s(i) * softmax(m("sent.pred.w") * states.col(i) + m("sent.pred.b"));
  Vector doc_vector(h2 + mil.size());
  doc_vector << batch_norm_oracle(context, p, view + ".sent.bn"), mil;
  return doc_vector;
}

Vector forward_oracle(const StoryTagger& model, const HierDocument& syn, const HierDocument& rev) {
  const auto& p = model.parameters();
  Vector d_ps = view_oracle(syn, p, "synopsis");
  Vector d_r = view_oracle(rev, p, "review");
  Vector h_ps = (p.at("fusion.w_ps").value * d_ps).array().tanh();
  Vector h_r = (p.at("fusion.w_r").value * d_r).array().tanh();
  Vector both(d_ps.size() + d_r.size());
  both << d_ps, d_r;
  Vector z = (p.at("fusion.w_z").value * both).unaryExpr([](double x) { return testing::sigmoid_oracle(x); });
  Vector h = z.cwiseProduct(h_ps) + (Vector::Ones(z.size()) - z).cwiseProduct(h_r);
  return softmax(p.at("output.w").value * h + p.at("output.b").value);
}

HierDocument placeholder() {
  HierDocument d;
  d.sentences = {{TokenVocabulary::kUnkId}};
  d.tokens = {{std::string(TokenVocabulary::kUnkToken)}};
  d.lengths = {1};
  return d;
}

}  // namespace

TEST_CASE("fusion mode names") {
  for (auto m : {FusionMode::synopsis_only, FusionMode::merge_texts, FusionMode::concat, FusionMode::gated})
    CHECK(parse_fusion_mode(to_string(m)) == m);
  CHECK_FALSE(parse_fusion_mode("sum").has_value());
}

TEST_CASE("fuse_concat") {
  Vector a = Vector::LinSpaced(3, 1, 3), b = Vector::LinSpaced(2, 5, 6);
  auto f = fuse_concat(a, b);
  CHECK(f.size() == 5);
  CHECK(f.head(3) == a);
  CHECK(fuse_concat(a, Vector::Zero(4)).tail(4).isZero());
  CHECK(fuse_concat(a, b) != fuse_concat(b, a));
}

TEST_CASE("fuse_gated limits and fixpoint") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    Vector d_ps = Vector::Random(4), d_r = Vector::Random(3);
    Matrix w_ps = Matrix::Random(2, 4), w_r = Matrix::Random(2, 3);
    // Gate logits of exactly +20 / -20: a constant input column drives them.
    Vector d_ps1 = d_ps, d_r1 = d_r;
    d_ps1(0) = 1.0;
    Matrix w_z = Matrix::Zero(2, 7);
    w_z.col(0).setConstant(20.0);
    Vector h_ps = (w_ps * d_ps1).array().tanh();
    Vector h_r = (w_r * d_r1).array().tanh();
    auto hi = fuse_gated(d_ps1, d_r1, w_ps, w_r, w_z);
    CHECK((hi.fused - h_ps).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((hi.gate.array() < 1.0).all());
    auto lo = fuse_gated(d_ps1, d_r1, w_ps, w_r, -w_z);
    CHECK((lo.fused - h_r).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((lo.gate.array() > 0.0).all());

    // Same projected vector from both views.
    Matrix same_w = Matrix::Random(2, 4);
    auto fix = fuse_gated(d_ps, d_ps, same_w, same_w, Matrix::Random(2, 8) * 5);
    Vector u = (same_w * d_ps).array().tanh();
    CHECK((fix.fused - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fix.fused.array().abs() < 1.0).all());
  }
  CHECK_THROWS(fuse_gated(Vector::Zero(2), Vector::Zero(2), Matrix::Zero(2, 3), Matrix::Zero(2, 2), Matrix::Zero(2, 4)));
}

TEST_CASE("predict matches a straight-line oracle") {
  auto config = testing::tiny_model_config(FusionMode::gated);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    StoryTagger model(config, static_cast<std::uint64_t>(100 + trial));
    // Non-default running statistics and biases so every term matters.
    for (auto& [name, p] : model.parameters().items()) {
      if (name.ends_with(".mean") || name.ends_with(".b") || name.ends_with(".beta"))
        p.value = Matrix::Random(p.value.rows(), p.value.cols()) * 0.3;
      if (name.ends_with(".var") || name.ends_with(".gamma"))
        p.value = Matrix::Random(p.value.rows(), p.value.cols()).array().abs() + 0.5;
    }
    auto syn = testing::random_document(rng, config.vocab_size, 3, 4);
    auto rev = testing::random_document(rng, config.vocab_size, 3, 4);
    auto out = model.predict(syn, rev);
    auto expected = forward_oracle(model, syn, rev);
    CHECK((out.tag_distribution - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.synopsis.doc_vector - view_oracle(syn, model.parameters(), "synopsis")).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("outputs are distributions in every mode, with or without reviews") {
  std::mt19937_64 rng(3);
  for (auto mode : {FusionMode::synopsis_only, FusionMode::merge_texts, FusionMode::concat, FusionMode::gated}) {
    auto config = testing::tiny_model_config(mode, 71);
    StoryTagger model(config, 4);
    auto syn = testing::random_document(rng, config.vocab_size, 4, 5);
    for (const auto& rev : {testing::random_document(rng, config.vocab_size, 4, 5), placeholder()}) {
      auto out = model.predict(syn, rev);
      CHECK(out.tag_distribution.size() == 71);
      CHECK(std::abs(out.tag_distribution.sum() - 1.0) < 1e-6);
      CHECK(out.review.has_value() == has_review_view(mode));
      CHECK(out.gate.has_value() == (mode == FusionMode::gated));
      if (out.gate) CHECK(((out.gate->array() > 0) && (out.gate->array() < 1)).all());
    }
  }
}

TEST_CASE("merge_texts encodes synopsis followed by review") {
  auto config = testing::tiny_model_config(FusionMode::merge_texts);
  StoryTagger model(config, 5);
  std::mt19937_64 rng(6);
  auto syn = testing::random_document(rng, config.vocab_size, 2, 3);
  auto rev = testing::random_document(rng, config.vocab_size, 2, 3);
  auto out = model.predict(syn, rev);
  CHECK(out.synopsis.sentence_vectors.cols() == static_cast<Eigen::Index>(syn.num_sentences() + rev.num_sentences()));
  auto merged = merge_documents(syn, rev);
  auto direct = model.predict(merged, placeholder());
  CHECK((out.tag_distribution - direct.tag_distribution).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(merge_documents(syn, placeholder()).sentences == syn.sentences);
}

TEST_CASE("gated inference is deterministic and ranking is shift invariant") {
  auto config = testing::tiny_model_config(FusionMode::gated);
  StoryTagger model(config, 7);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto syn = testing::random_document(rng, config.vocab_size, 3, 4);
    auto rev = testing::random_document(rng, config.vocab_size, 3, 4);
    auto a = model.predict(syn, rev);
    auto b = model.predict(syn, rev);
    CHECK(a.tag_distribution == b.tag_distribution);
    CHECK(*a.gate == *b.gate);

    StoryTagger shifted = model;
    shifted.parameters().at("output.b").value.array() += 3.7;
    auto c = shifted.predict(syn, rev);
    for (int k : {1, 3, 5}) CHECK(top_k(a.tag_distribution, k) == top_k(c.tag_distribution, k));
  }
}

TEST_CASE("copies of a tagger are independent") {
  auto config = testing::tiny_model_config(FusionMode::concat);
  StoryTagger a(config, 9);
  StoryTagger b = a;
  b.parameters().at("output.w").value.setZero();
  CHECK_FALSE(a.parameters().at("output.w").value.isZero());
  std::mt19937_64 rng(1);
  auto doc = testing::random_document(rng, config.vocab_size, 2, 2);
  auto out = b.predict(doc, doc);
  CHECK((out.tag_distribution.array() - 1.0 / config.encoder.num_tags).abs().maxCoeff() < 1e-12);
}

TEST_CASE("gate activation statistics") {
  auto make = [](std::initializer_list<double> z) {
    ModelOutput o;
    o.gate = Vector(static_cast<Eigen::Index>(z.size()));
    Eigen::Index i = 0;
    for (double v : z) (*o.gate)(i++) = v;
    return o;
  };
  auto all = [](std::size_t) { return true; };
  std::vector<ModelOutput> high{make({0.7, 0.7, 0.7})};
  CHECK(gate_activation_stats(high, all).synopsis_fraction == 1.0);
  std::vector<ModelOutput> half{make({0.5, 0.5})};
  CHECK(gate_activation_stats(half, all).synopsis_fraction == 0.0);
  CHECK(gate_activation_stats(half, all).review_fraction == 1.0);

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ModelOutput> mixed;
  for (int i = 0; i < 40; ++i) mixed.push_back(make({u(rng), u(rng), 0.5, u(rng)}));
  auto even = [](std::size_t i) { return i % 2 == 0; };
  std::size_t active = 0, total = 0;
  for (std::size_t i = 0; i < mixed.size(); i += 2)
    for (Eigen::Index k = 0; k < 4; ++k) {
      ++total;
      if ((*mixed[i].gate)(k) > 0.5) ++active;
    }
  auto stats = gate_activation_stats(mixed, even);
  CHECK(stats.instances == 20);
  CHECK(stats.components == total);
  CHECK(stats.synopsis_fraction == static_cast<double>(active) / static_cast<double>(total));

  CHECK_THROWS(gate_activation_stats(mixed, [](std::size_t) { return false; }));
  std::vector<ModelOutput> no_gate(1);
  CHECK_THROWS(gate_activation_stats(no_gate, all));
}

TEST_CASE("pretrained embeddings overwrite matching columns") {
  auto config = testing::tiny_model_config(FusionMode::synopsis_only);
  config.vocab_size = 4;
  StoryTagger model(config, 11);
  TokenVocabulary vocab({"<unk>", "cc", "hero", "ship"}, 1);
  auto path = std::filesystem::temp_directory_path() / "storytag_emb.txt";
  {
    std::ofstream out(path);
    out << "hero 1 2 3 4\nnothere 1 1 1 1\nship 0.5 0.5\n";
  }
  CHECK(model.load_pretrained_embeddings(path, vocab) == 1);
  CHECK(model.embedding().value.col(2) == Vector::LinSpaced(4, 1, 4));
}
