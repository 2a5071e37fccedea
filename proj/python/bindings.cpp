#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "storytag/attention_export.hpp"
#include "storytag/corpus.hpp"
#include "storytag/evaluator.hpp"
#include "storytag/miner.hpp"
#include "storytag/summarizer.hpp"
#include "storytag/trainer.hpp"

namespace py = pybind11;
using namespace storytag;

namespace {

// A trained model plus everything needed to feed it raw text.
class Tagger {
 public:
  explicit Tagger(Checkpoint ckpt) : ckpt_(std::move(ckpt)), model_(ckpt_.model()) {}

  ModelOutput run(const std::string& synopsis, const std::vector<std::string>& reviews,
                  HierDocument* review_doc = nullptr) const {
    const auto syn = segment_and_index(synopsis, ckpt_.vocab, ckpt_.config.synopsis_caps);
    auto rev = segment_and_index(reviews.empty() ? std::string() : summarize_reviews(reviews), ckpt_.vocab,
                                 ckpt_.config.summary_caps);
    auto out = model_.predict(syn, rev);
    if (review_doc) *review_doc = std::move(rev);
    return out;
  }

  std::vector<std::pair<std::string, double>> predict(const std::string& synopsis,
                                                      const std::vector<std::string>& reviews, int k) const {
    const auto out = run(synopsis, reviews);
    std::vector<std::pair<std::string, double>> ranked;
    for (auto t : top_k(out.tag_distribution, k))
      ranked.emplace_back(ckpt_.tags.tag(t), out.tag_distribution(static_cast<Eigen::Index>(t)));
    return ranked;
  }

  Eigen::VectorXd distribution(const std::string& synopsis, const std::vector<std::string>& reviews) const {
    return run(synopsis, reviews).tag_distribution;
  }

  std::vector<std::string> mine(const std::string& synopsis, const std::vector<std::string>& reviews) const {
    if (reviews.empty()) throw std::invalid_argument("complementary tags require reviews");
    if (!has_review_view(ckpt_.config.model.mode))
      throw std::invalid_argument("mining reads review attention; use a concat or gated checkpoint");
    HierDocument review;
    const auto out = run(synopsis, reviews, &review);
    return mine_tags(out, review, ckpt_.tags).tags;
  }

  std::string export_attention(const std::string& id, const std::string& synopsis,
                               const std::vector<std::string>& reviews) const {
    HierDocument review;
    const auto out = run(synopsis, reviews, &review);
    const auto syn = segment_and_index(synopsis, ckpt_.vocab, ckpt_.config.synopsis_caps);
    return to_json(build_attention_export(id, out, syn, review, ckpt_.tags)).dump();
  }

  void save(const std::filesystem::path& path) const { save_checkpoint(ckpt_, path); }
  std::string mode() const { return std::string(to_string(ckpt_.config.model.mode)); }
  int epoch() const { return ckpt_.epoch; }
  std::vector<std::string> tags() const { return ckpt_.tags.tags(); }

 private:
  Checkpoint ckpt_;
  StoryTagger model_;
};

Tagger train_tagger(const std::filesystem::path& corpus, const std::string& config_json,
                    const std::map<std::string, std::string>& summaries, int min_doc_freq) {
  auto loaded = load_dataset(corpus);
  TrainingConfig config = training_config_from_json(nlohmann::json::parse(config_json));
  const auto& tags = TagVocabulary::standard();
  const auto vocab = build_token_vocab(loaded.records, summaries, min_doc_freq);
  config.model.vocab_size = static_cast<int>(vocab.size());
  config.model.encoder.num_tags = static_cast<int>(tags.size());
  const auto train_set = prepare_examples(loaded.records, summaries, vocab, tags, config, Split::train);
  const auto val_set = prepare_examples(loaded.records, summaries, vocab, tags, config, Split::val);
  py::gil_scoped_release release;
  return Tagger(train(train_set, val_set, config, vocab, tags).best);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-view story tagging";

  py::class_<MovieRecord>(m, "MovieRecord")
      .def_readonly("id", &MovieRecord::id)
      .def_readonly("synopsis", &MovieRecord::synopsis)
      .def_readonly("reviews", &MovieRecord::reviews)
      .def_readonly("tags", &MovieRecord::gold_tags)
      .def_property_readonly("split", [](const MovieRecord& r) { return std::string(to_string(r.split)); });

  m.def(
      "load_dataset",
      [](const std::filesystem::path& path) {
        auto loaded = load_dataset(path);
        return py::make_tuple(loaded.records, loaded.report.errors);
      },
      py::arg("path"), "Records and per-line rejection messages.");

  m.def("standard_tags", [] { return TagVocabulary::standard().tags(); });

  m.def("summarize_reviews",
        [](const std::vector<std::string>& reviews, double ratio, int max_sentences) {
          SummaryConfig config;
          config.target_ratio = ratio;
          config.max_sentences = max_sentences;
          config.validate();
          return summarize_reviews(reviews, config);
        },
        py::arg("reviews"), py::arg("ratio") = 0.2, py::arg("max_sentences") = 120);
  m.def("sentence_similarity", &sentence_similarity, py::arg("s1"), py::arg("s2"));
  m.def(
      "pagerank",
      [](const Eigen::MatrixXd& weights, double damping, double tol, int max_iter) {
        SummaryConfig config;
        config.damping = damping;
        config.tol = tol;
        config.max_iter = max_iter;
        return pagerank(SentenceGraph(weights), config);
      },
      py::arg("weights"), py::arg("damping") = 0.85, py::arg("tol") = 1e-6, py::arg("max_iter") = 100);

  m.def(
      "micro_f1",
      [](const std::vector<TagSet>& predictions, const std::vector<TagSet>& golds) {
        return micro_f1(predictions, golds);
      },
      py::arg("predictions"), py::arg("golds"));
  m.def(
      "tags_learned", [](const std::vector<TagSet>& predictions) { return tags_learned(predictions); },
      py::arg("predictions"));
  m.def("top_k", &top_k, py::arg("distribution"), py::arg("k"));

  m.def(
      "cutoff_index",
      [](const std::vector<double>& scores, double threshold) { return cutoff_index(scores, threshold); },
      py::arg("sorted_scores"), py::arg("threshold") = kSlopeThreshold);
  m.def(
      "local_slope", [](const std::vector<double>& scores, std::size_t p) { return local_slope(scores, p); },
      py::arg("sorted_scores"), py::arg("p"));

  py::class_<Tagger>(m, "Tagger")
      .def_static(
          "load", [](const std::filesystem::path& path) { return Tagger(load_checkpoint(path)); }, py::arg("path"))
      .def("save", &Tagger::save, py::arg("path"))
      .def("predict", &Tagger::predict, py::arg("synopsis"), py::arg("reviews") = std::vector<std::string>{},
           py::arg("k") = 5)
      .def("distribution", &Tagger::distribution, py::arg("synopsis"),
           py::arg("reviews") = std::vector<std::string>{})
      .def("mine", &Tagger::mine, py::arg("synopsis"), py::arg("reviews"))
      .def("export_attention", &Tagger::export_attention, py::arg("id"), py::arg("synopsis"),
           py::arg("reviews") = std::vector<std::string>{})
      .def_property_readonly("mode", &Tagger::mode)
      .def_property_readonly("epoch", &Tagger::epoch)
      .def_property_readonly("tags", &Tagger::tags);

  m.def("train", &train_tagger, py::arg("corpus"), py::arg("config_json"),
        py::arg("summaries") = std::map<std::string, std::string>{}, py::arg("min_doc_freq") = 10,
        "Trains on the train split, selects on val, and returns the best model.");

  py::register_exception<CorpusError>(m, "CorpusError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
}
