#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/config.hpp"
#include "senti/corpus.hpp"
#include "senti/ensemble.hpp"
#include "senti/error.hpp"
#include "senti/explain.hpp"
#include "senti/external_probs.hpp"
#include "senti/features.hpp"
#include "senti/hashing.hpp"
#include "senti/linear_models.hpp"
#include "senti/metrics.hpp"
#include "senti/textprep.hpp"
#include "senti/version.hpp"

namespace senti::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Granularity { review, sentence };

struct RunConfig {
  fs::path corpus_path;  // one CSV, re-split by `split`
  fs::path train_path;   // or an existing train/test pair
  fs::path test_path;
  corpus::SplitSpec split;
  textprep::PrepConfig prep;
  features::VectorizerConfig vectorizer;
  models::TrainConfig train;
  Granularity granularity = Granularity::review;
  ensemble::Aggregation aggregation = ensemble::Aggregation::mean;
  std::vector<std::string> ensemble_models;  // empty: every available model
  std::vector<double> ensemble_weights;      // empty: equal weights
  std::vector<fs::path> external_files;
  explain::MaskingConfig masking;
  bool explain_train_mean = false;
  fs::path output_dir = "senti_out";
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "corpus.path",          "corpus.train_path",       "corpus.test_path",     "split.train_fraction",
      "split.seed",           "split.stratified",        "prep.stem",            "prep.mark_negation",
      "prep.negation_cues",   "prep.negation_scope",     "pipeline.granularity", "pipeline.aggregation",
      "vectorizer.max_features", "vectorizer.ngram_min", "vectorizer.ngram_max", "vectorizer.sublinear_tf",
      "train.lr_iterations",  "train.svm_iterations",    "train.learning_rate",  "train.l2",
      "train.nb_alpha",       "train.seed",              "train.tolerance",      "train.calibration_folds",
      "ensemble.models",      "ensemble.weights",        "external.files",       "explain.mask_token",
      "explain.max_evaluations", "explain.seed",         "explain.background",   "output.dir"};
  return keys;
}

/// Builds a RunConfig from key/value settings. Relative paths resolve
/// against `base_dir`, or the working directory when it is empty. Unknown
/// keys are rejected.
inline RunConfig from_key_values(const config::KeyValues& kv, const fs::path& base_dir = {}) {
  const auto& keys = known_keys();
  for (const auto& [k, v] : kv) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw usage_error("unknown config key: " + k);
  }
  auto path = [&](const std::string& v) {
    fs::path p(v);
    if (!p.is_relative() || p.empty()) return p;
    return base_dir.empty() ? fs::absolute(p) : base_dir / p;
  };
  using namespace config;
  RunConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "corpus.path") c.corpus_path = path(v);
    else if (k == "corpus.train_path") c.train_path = path(v);
    else if (k == "corpus.test_path") c.test_path = path(v);
    else if (k == "split.train_fraction") c.split.train_fraction = parse_double(k, v);
    else if (k == "split.seed") c.split.seed = parse_unsigned(k, v);
    else if (k == "split.stratified") c.split.stratified = parse_bool(k, v);
    else if (k == "prep.stem") c.prep.stem = parse_bool(k, v);
    else if (k == "prep.mark_negation") c.prep.mark_negation = parse_bool(k, v);
    else if (k == "prep.negation_cues") c.prep.negation_cues = parse_list(v);
    else if (k == "prep.negation_scope") c.prep.negation_scope = parse_unsigned(k, v);
    else if (k == "pipeline.granularity") {
      if (v == "review") c.granularity = Granularity::review;
      else if (v == "sentence") c.granularity = Granularity::sentence;
      else throw usage_error(k + ": expected review or sentence");
    } else if (k == "pipeline.aggregation") {
      if (v == "mean") c.aggregation = ensemble::Aggregation::mean;
      else if (v == "max_confidence") c.aggregation = ensemble::Aggregation::max_confidence;
      else throw usage_error(k + ": expected mean or max_confidence");
    }
    else if (k == "vectorizer.max_features") c.vectorizer.max_features = parse_unsigned(k, v);
    else if (k == "vectorizer.ngram_min") c.vectorizer.ngram_min = parse_unsigned(k, v);
    else if (k == "vectorizer.ngram_max") c.vectorizer.ngram_max = parse_unsigned(k, v);
    else if (k == "vectorizer.sublinear_tf") c.vectorizer.sublinear_tf = parse_bool(k, v);
    else if (k == "train.lr_iterations") c.train.lr_iterations = parse_unsigned(k, v);
    else if (k == "train.svm_iterations") c.train.svm_iterations = parse_unsigned(k, v);
    else if (k == "train.learning_rate") c.train.learning_rate = parse_double(k, v);
    else if (k == "train.l2") c.train.l2 = parse_double(k, v);
    else if (k == "train.nb_alpha") c.train.nb_alpha = parse_double(k, v);
    else if (k == "train.seed") c.train.seed = parse_unsigned(k, v);
    else if (k == "train.tolerance") c.train.tolerance = parse_double(k, v);
    else if (k == "train.calibration_folds") c.train.calibration_folds = parse_unsigned(k, v);
    else if (k == "ensemble.models") c.ensemble_models = parse_list(v);
    else if (k == "ensemble.weights") {
      c.ensemble_weights.clear();
      for (const auto& w : parse_list(v)) c.ensemble_weights.push_back(parse_double(k, w));
    } else if (k == "external.files") {
      c.external_files.clear();
      for (const auto& f : parse_list(v)) c.external_files.push_back(path(f));
    }
    else if (k == "explain.mask_token") c.masking.mask_token = v;
    else if (k == "explain.max_evaluations") c.masking.max_evaluations = parse_unsigned(k, v);
    else if (k == "explain.seed") c.masking.seed = parse_unsigned(k, v);
    else if (k == "explain.background") {
      if (v == "zero") c.explain_train_mean = false;
      else if (v == "train_mean") c.explain_train_mean = true;
      else throw usage_error(k + ": expected zero or train_mean");
    }
    else if (k == "output.dir") c.output_dir = path(v);
  }
  features::validate(c.vectorizer);
  models::validate(c.train);
  if (c.prep.mark_negation && c.prep.negation_scope < 1) throw usage_error("prep.negation_scope must be >= 1");
  return c;
}

/// Canonical key/value echo of a config (recorded in the run manifest).
inline config::KeyValues to_key_values(const RunConfig& c) {
  auto num = [](double d) {
    std::ostringstream s;
    s.precision(17);
    s << d;
    return s.str();
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  config::KeyValues kv;
  kv["corpus.path"] = c.corpus_path.string();
  kv["corpus.train_path"] = c.train_path.string();
  kv["corpus.test_path"] = c.test_path.string();
  kv["split.train_fraction"] = num(c.split.train_fraction);
  kv["split.seed"] = std::to_string(c.split.seed);
  kv["split.stratified"] = b(c.split.stratified);
  kv["prep.stem"] = b(c.prep.stem);
  kv["prep.mark_negation"] = b(c.prep.mark_negation);
  kv["prep.negation_cues"] = config::format_list(c.prep.negation_cues);
  kv["prep.negation_scope"] = std::to_string(c.prep.negation_scope);
  kv["pipeline.granularity"] = c.granularity == Granularity::review ? "review" : "sentence";
  kv["pipeline.aggregation"] = c.aggregation == ensemble::Aggregation::mean ? "mean" : "max_confidence";
  kv["vectorizer.max_features"] = std::to_string(c.vectorizer.max_features);
  kv["vectorizer.ngram_min"] = std::to_string(c.vectorizer.ngram_min);
  kv["vectorizer.ngram_max"] = std::to_string(c.vectorizer.ngram_max);
  kv["vectorizer.sublinear_tf"] = b(c.vectorizer.sublinear_tf);
  kv["train.lr_iterations"] = std::to_string(c.train.lr_iterations);
  kv["train.svm_iterations"] = std::to_string(c.train.svm_iterations);
  kv["train.learning_rate"] = num(c.train.learning_rate);
  kv["train.l2"] = num(c.train.l2);
  kv["train.nb_alpha"] = num(c.train.nb_alpha);
  kv["train.seed"] = std::to_string(c.train.seed);
  kv["train.tolerance"] = num(c.train.tolerance);
  kv["train.calibration_folds"] = std::to_string(c.train.calibration_folds);
  kv["ensemble.models"] = config::format_list(c.ensemble_models);
  std::vector<std::string> ws;
  for (double w : c.ensemble_weights) ws.push_back(num(w));
  kv["ensemble.weights"] = config::format_list(ws);
  std::vector<std::string> files;
  for (const auto& f : c.external_files) files.push_back(f.string());
  kv["external.files"] = config::format_list(files);
  kv["explain.mask_token"] = c.masking.mask_token;
  kv["explain.max_evaluations"] = std::to_string(c.masking.max_evaluations);
  kv["explain.seed"] = std::to_string(c.masking.seed);
  kv["explain.background"] = c.explain_train_mean ? "train_mean" : "zero";
  kv["output.dir"] = c.output_dir.string();
  return kv;
}

/// File settings, then environment (`SENTI_<KEY>` with dots as `__`), then
/// explicit overrides.
inline RunConfig load_run_config(const fs::path& file, const config::KeyValues& overrides = {}) {
  config::KeyValues kv;
  fs::path base;
  if (!file.empty()) {
    kv = config::load(file);
    base = fs::absolute(file).parent_path();
  }
  config::apply_env_overrides(kv, known_keys());
  for (const auto& [k, v] : overrides) kv[k] = v;
  return from_key_values(kv, base);
}

/// Fails fast, before any work, when a referenced input is missing.
inline void check_inputs(const RunConfig& c) {
  const bool single = !c.corpus_path.empty();
  const bool pair = !c.train_path.empty() || !c.test_path.empty();
  if (single == pair) {
    throw usage_error("configure either corpus.path or both corpus.train_path and corpus.test_path");
  }
  auto need = [](const fs::path& p, const char* key) {
    if (p.empty()) throw usage_error(std::string(key) + " is not set");
    if (!fs::exists(p)) throw usage_error(std::string(key) + " does not exist: " + p.string());
  };
  if (single) {
    need(c.corpus_path, "corpus.path");
  } else {
    need(c.train_path, "corpus.train_path");
    need(c.test_path, "corpus.test_path");
  }
  for (const auto& f : c.external_files) need(f, "external.files entry");
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedCorpus {
  std::vector<corpus::LabeledDocument> train;
  std::vector<corpus::LabeledDocument> test;
  corpus::DatasetSummary summary;
};

/// Loads and splits the corpus. With a pre-split pair, test-file ids continue
/// after the train file's rows so ids stay unique.
inline PreparedCorpus prepare_corpus(const RunConfig& c) {
  PreparedCorpus out;
  if (!c.corpus_path.empty()) {
    auto loaded = corpus::load_csv(c.corpus_path);
    auto parts = corpus::split(loaded.documents, c.split);
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
    out.summary = loaded.summary;
    return out;
  }
  auto tr = corpus::load_csv(c.train_path);
  auto te = corpus::load_csv(c.test_path);
  const DocId offset = tr.summary.total + tr.summary.missing + tr.summary.mismatched;
  for (auto& d : te.documents) d.id += offset;
  out.train = std::move(tr.documents);
  out.test = std::move(te.documents);
  std::vector<corpus::LabeledDocument> all = out.train;
  all.insert(all.end(), out.test.begin(), out.test.end());
  out.summary = corpus::summarize(all);
  out.summary.missing = tr.summary.missing + te.summary.missing;
  out.summary.mismatched = tr.summary.mismatched + te.summary.mismatched;
  return out;
}

/// Token units for one review: the whole review, or one unit per sentence.
inline std::vector<textprep::TokenSequence> review_units(const std::string& text, const RunConfig& c) {
  if (c.granularity == Granularity::review) return {textprep::preprocess(text, c.prep)};
  std::vector<textprep::TokenSequence> units;
  for (const auto& s : textprep::split_sentences(text)) units.push_back(textprep::preprocess(s, c.prep));
  if (units.empty()) units.push_back(textprep::preprocess(text, c.prep));
  return units;
}

/// Preprocesses clause-grouped raw tokens in which some positions hold the
/// mask token. A masked position still occupies its slot in a negation
/// scope but stays a literal token, so no n-gram can match across it.
inline textprep::TokenSequence preprocess_masked(const std::vector<textprep::TokenSequence>& clauses,
                                                 const std::string& mask, const textprep::PrepConfig& prep) {
  textprep::TokenSequence out;
  for (const auto& clause : clauses) {
    auto marked = prep.mark_negation ? textprep::mark_negation(clause, prep) : clause;
    if (prep.stem) marked = textprep::stem(marked);
    for (std::size_t i = 0; i < clause.size(); ++i) out.push_back(clause[i] == mask ? mask : std::move(marked[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and prediction

struct NativeModel {
  std::string id;
  models::AnyModel model;
};

struct TrainedSystem {
  features::Vocabulary vocab;
  std::vector<NativeModel> natives;  // naive_bayes, logistic_regression, svm
  models::TrainTrace lr_trace, svm_trace;
};

inline TrainedSystem train_system(const RunConfig& c, const std::vector<corpus::LabeledDocument>& train_docs) {
  std::vector<textprep::TokenSequence> units;
  std::vector<Label> labels;
  for (const auto& d : train_docs) {
    for (auto& u : review_units(d.text, c)) {
      units.push_back(std::move(u));
      labels.push_back(d.label);
    }
  }
  TrainedSystem sys;
  sys.vocab = features::fit(units, c.vectorizer);
  std::vector<Example> examples;
  examples.reserve(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) examples.push_back({features::transform(units[i], sys.vocab), labels[i]});
  const auto dim = sys.vocab.size();
  sys.natives.push_back({"naive_bayes", models::train_nb(examples, c.train, dim)});
  sys.natives.push_back({"logistic_regression", models::train_logistic(examples, c.train, dim, &sys.lr_trace)});
  sys.natives.push_back({"svm", models::train_svm(examples, c.train, dim, &sys.svm_trace)});
  return sys;
}

using ReviewVectors = std::vector<SparseVector>;  // one per unit

inline ReviewVectors featurize(const std::string& text, const features::Vocabulary& vocab, const RunConfig& c) {
  ReviewVectors v;
  for (const auto& u : review_units(text, c)) v.push_back(features::transform(u, vocab));
  return v;
}

inline ProbabilityDistribution predict_review(const models::AnyModel& m, const ReviewVectors& units,
                                              ensemble::Aggregation agg) {
  std::vector<ProbabilityDistribution> per_unit;
  per_unit.reserve(units.size());
  for (const auto& u : units) per_unit.push_back(models::predict_proba(m, u));
  return per_unit.size() == 1 ? per_unit.front() : ensemble::aggregate_sentences(per_unit, agg);
}

inline external::PredictionTable predict_table(const NativeModel& m, const std::vector<DocId>& ids,
                                               const std::vector<ReviewVectors>& vectors, ensemble::Aggregation agg) {
  external::PredictionTable t;
  t.model = m.id;
  for (std::size_t i = 0; i < ids.size(); ++i) t.by_id.emplace(ids[i], predict_review(m.model, vectors[i], agg));
  return t;
}

/// Ensemble membership and weights drawn from `available` model ids.
inline ensemble::EnsembleConfig make_ensemble(const RunConfig& c, const std::vector<std::string>& available) {
  if (c.ensemble_models.empty()) {
    if (!c.ensemble_weights.empty() && c.ensemble_weights.size() != available.size()) {
      throw usage_error("ensemble.weights has " + std::to_string(c.ensemble_weights.size()) + " entries for " +
                        std::to_string(available.size()) + " models; list ensemble.models explicitly");
    }
    return ensemble::EnsembleConfig(available, c.ensemble_weights);
  }
  for (const auto& m : c.ensemble_models) {
    if (std::find(available.begin(), available.end(), m) == available.end()) {
      throw usage_error("ensemble.models names unknown model '" + m + "'");
    }
  }
  return ensemble::EnsembleConfig(c.ensemble_models, c.ensemble_weights);
}

struct EvaluationOutput {
  std::vector<metrics::EvaluationReport> reports;  // each model, then "ensemble"
  std::vector<DocId> ids;
  std::vector<ensemble::Verdict> verdicts;
  ensemble::EnsembleConfig ensemble;
  std::vector<external::PredictionTable> tables;  // natives then externals
};

inline EvaluationOutput evaluate_system(const RunConfig& c, const features::Vocabulary& vocab,
                                        const std::vector<NativeModel>& natives,
                                        const std::vector<corpus::LabeledDocument>& test_docs,
                                        const std::vector<external::PredictionTable>& externals) {
  EvaluationOutput out;
  std::vector<Label> truth;
  std::vector<ReviewVectors> vectors;
  for (const auto& d : test_docs) {
    out.ids.push_back(d.id);
    truth.push_back(d.label);
    vectors.push_back(featurize(d.text, vocab, c));
  }
  for (const auto& m : natives) out.tables.push_back(predict_table(m, out.ids, vectors, c.aggregation));
  std::set<std::string> seen;
  for (const auto& t : out.tables) seen.insert(t.model);
  for (const auto& t : externals) {
    if (!seen.insert(t.model).second) throw data_error("two probability tables claim model id '" + t.model + "'");
    out.tables.push_back(t);
  }
  const auto matrix = external::align(out.tables, out.ids);
  std::vector<std::string> available;
  for (const auto& t : out.tables) available.push_back(t.model);
  for (std::size_t k = 0; k < out.tables.size(); ++k) {
    std::vector<ProbabilityDistribution> col;
    col.reserve(matrix.size());
    for (const auto& row : matrix) col.push_back(row[k]);
    out.reports.push_back(metrics::evaluate(out.tables[k].model, col, truth));
  }
  out.ensemble = make_ensemble(c, available);
  external::ProbabilityMatrix members;
  members.reserve(matrix.size());
  for (const auto& row : matrix) {
    std::vector<ProbabilityDistribution> picked;
    for (const auto& id : out.ensemble.model_ids()) {
      const auto k = static_cast<std::size_t>(std::find(available.begin(), available.end(), id) - available.begin());
      picked.push_back(row[k]);
    }
    members.push_back(std::move(picked));
  }
  out.verdicts = ensemble::batch_vote(members, out.ensemble);
  std::vector<ProbabilityDistribution> combined;
  for (const auto& v : out.verdicts) combined.push_back(v.combined);
  out.reports.push_back(metrics::evaluate("ensemble", combined, truth));
  return out;
}

inline json bundle_json(const std::vector<metrics::EvaluationReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(metrics::to_json(r));
  return {{"format", "senti.report_bundle"}, {"version", 1}, {"reports", arr}};
}

inline std::vector<metrics::EvaluationReport> parse_bundle(const json& j) {
  if (j.value("format", "") != "senti.report_bundle") throw data_error("not a senti.report_bundle file");
  std::vector<metrics::EvaluationReport> out;
  for (const auto& r : j.at("reports")) out.push_back(metrics::report_from_json(r));
  return out;
}

// ---------------------------------------------------------------------------
// Run directory handling

/// Exclusive ownership of an output directory for the lifetime of a run.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".senti.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw usage_error("output directory is locked by another run (remove " + path_.string() + " if stale)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

/// Records every file a run writes; unless committed, they are deleted when
/// the writer goes away.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}
  ~ArtifactWriter() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& [name, _] : written_) fs::remove(dir_ / name, ec);
  }
  ArtifactWriter(const ArtifactWriter&) = delete;
  ArtifactWriter& operator=(const ArtifactWriter&) = delete;

  void write(const std::string& name, const std::string& bytes) {
    write_file(dir_ / name, bytes);
    written_.emplace_back(name, sha256_hex(bytes));
  }
  const std::vector<std::pair<std::string, std::string>>& written() const noexcept { return written_; }
  void commit() noexcept { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> written_;
  bool committed_ = false;
};

class StageTimer {
 public:
  template <typename F>
  auto run(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        f();
        record(name, start);
      } else {
        auto r = f();
        record(name, start);
        return r;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "stage '" + name + "' failed: " + e.what());
    } catch (const std::exception& e) {
      throw internal_error("stage '" + name + "' failed: " + e.what());
    }
  }
  const json& timings() const noexcept { return timings_; }

 private:
  void record(const std::string& name, std::chrono::steady_clock::time_point start) {
    timings_[name] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  json timings_ = json::object();
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kVocabularyFile = "vocabulary.json";
inline std::string model_file(const std::string& id) { return "model_" + id + ".json"; }

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

// ---------------------------------------------------------------------------
// Runs

/// Prepares data, fits the vocabulary and trains the three native models.
/// Writes vocabulary, model artifacts, the summary, sparse feature exports
/// and a manifest with content hashes and per-stage timings.
inline json run_train(const RunConfig& c) {
  check_inputs(c);
  OutputLock lock(c.output_dir);
  ArtifactWriter writer(c.output_dir);
  StageTimer timer;

  auto data = timer.run("prepare", [&] { return prepare_corpus(c); });
  auto sys = timer.run("train", [&] { return train_system(c, data.train); });
  timer.run("write", [&] {
    writer.write("summary.json", dump(corpus::to_json(data.summary)));
    writer.write(kVocabularyFile, dump(sys.vocab.to_json()));
    const auto vh = sys.vocab.hash();
    for (const auto& m : sys.natives) writer.write(model_file(m.id), dump(models::to_json(m.model, vh)));
    for (const auto* part : {&data.train, &data.test}) {
      std::vector<std::pair<DocId, SparseVector>> rows;
      for (const auto& d : *part) rows.emplace_back(d.id, features::transform(textprep::preprocess(d.text, c.prep), sys.vocab));
      std::ostringstream s;
      features::write_sparse_triplets(s, rows, sys.vocab.size());
      writer.write(part == &data.train ? "features_train.sparse" : "features_test.sparse", s.str());
    }
  });

  json manifest;
  manifest["format"] = "senti.manifest";
  manifest["version"] = 1;
  manifest["senti_version"] = kVersion;
  manifest["config"] = to_key_values(c);
  manifest["vocab_hash"] = sys.vocab.hash();
  json ids_train = json::array(), ids_test = json::array();
  for (const auto& d : data.train) ids_train.push_back(d.id);
  for (const auto& d : data.test) ids_test.push_back(d.id);
  manifest["split"] = {{"train_ids", ids_train}, {"test_ids", ids_test}};
  json artifacts = json::object();
  for (const auto& [name, hash] : writer.written()) artifacts[name] = {{"sha256", hash}};
  manifest["artifacts"] = artifacts;
  manifest["training"] = {{"logistic_regression", {{"epochs", sys.lr_trace.epochs},
                                                    {"final_objective", sys.lr_trace.objective.back()}}},
                          {"svm", {{"epochs", sys.svm_trace.epochs},
                                   {"final_objective", sys.svm_trace.objective.back()}}}};
  manifest["timings_ms"] = timer.timings();
  writer.write(kManifestFile, dump(manifest));
  writer.commit();
  return manifest;
}

inline json read_manifest(const fs::path& dir) {
  const auto p = dir / kManifestFile;
  if (!fs::exists(p)) throw data_error("no trained run in " + dir.string() + " (missing manifest.json); run `senti train` first");
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw data_error("malformed manifest " + p.string() + ": " + e.what());
  }
}

/// Compares every artifact listed in the manifest with its recorded hash.
inline void verify_artifacts(const fs::path& dir, const json& manifest) {
  for (const auto& [name, info] : manifest.at("artifacts").items()) {
    const auto p = dir / name;
    if (!fs::exists(p)) throw data_error("integrity check failed: missing artifact " + p.string());
    if (file_sha256(p) != info.at("sha256").get<std::string>()) {
      throw data_error("integrity check failed: " + p.string() + " does not match its manifest hash");
    }
  }
}

/// A trained run reloaded from disk.
struct LoadedRun {
  json manifest;
  RunConfig trained_with;  // settings echoed at training time
  features::Vocabulary vocab;
  std::vector<NativeModel> natives;
};

inline LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.manifest = read_manifest(dir);
  verify_artifacts(dir, run.manifest);
  run.trained_with = from_key_values(run.manifest.at("config").get<config::KeyValues>());
  try {
    run.vocab = features::Vocabulary::from_json(json::parse(read_file(dir / kVocabularyFile)));
    const auto vh = run.vocab.hash();
    for (const char* id : {"naive_bayes", "logistic_regression", "svm"}) {
      const auto p = dir / model_file(id);
      try {
        run.natives.push_back({id, models::from_json(json::parse(read_file(p)), vh)});
      } catch (const std::exception& e) {
        throw data_error(p.string() + ": " + e.what());
      }
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed artifact in ") + dir.string() + ": " + e.what());
  }
  return run;
}

/// Test documents named by the manifest, reloaded from the corpus.
inline std::vector<corpus::LabeledDocument> manifest_documents(const LoadedRun& run, const char* which) {
  const auto data = prepare_corpus(run.trained_with);
  std::map<DocId, const corpus::LabeledDocument*> by_id;
  for (const auto* part : {&data.train, &data.test}) {
    for (const auto& d : *part) by_id[d.id] = &d;
  }
  std::vector<corpus::LabeledDocument> out;
  for (const auto& id : run.manifest.at("split").at(which)) {
    const auto it = by_id.find(id.get<DocId>());
    if (it == by_id.end()) throw data_error("manifest id " + id.dump() + " is not in the corpus");
    out.push_back(*it->second);
  }
  return out;
}

/// Scores every native and external model plus the ensemble on the test
/// split. Writes reports.json, verdicts.jsonl and one probability file per
/// native model; training artifacts are hash-checked before and after.
inline json run_evaluate(const RunConfig& c) {
  for (const auto& f : c.external_files) {
    if (!fs::exists(f)) throw usage_error("external.files entry does not exist: " + f.string());
  }
  OutputLock lock(c.output_dir);
  StageTimer timer;
  auto run = timer.run("load", [&] { return load_run(c.output_dir); });
  auto test = timer.run("prepare", [&] { return manifest_documents(run, "test_ids"); });
  std::vector<external::PredictionTable> externals;
  timer.run("ingest", [&] {
    for (const auto& f : c.external_files) externals.push_back(external::load_probability_file(f));
  });
  // Prediction follows the preprocessing the models were trained with;
  // ensemble membership and weights follow the current config.
  RunConfig eval_cfg = run.trained_with;
  eval_cfg.ensemble_models = c.ensemble_models;
  eval_cfg.ensemble_weights = c.ensemble_weights;
  eval_cfg.aggregation = c.aggregation;
  auto out = timer.run("evaluate", [&] { return evaluate_system(eval_cfg, run.vocab, run.natives, test, externals); });

  ArtifactWriter writer(c.output_dir);
  const auto bundle = bundle_json(out.reports);
  timer.run("write", [&] {
    writer.write("reports.json", dump(bundle));
    std::ostringstream verdicts;
    for (std::size_t i = 0; i < out.verdicts.size(); ++i) {
      verdicts << ensemble::to_json(out.verdicts[i], out.ids[i], out.ensemble).dump() << '\n';
    }
    writer.write("verdicts.jsonl", verdicts.str());
    for (std::size_t k = 0; k < run.natives.size(); ++k) {
      std::ostringstream s;
      external::write_probability_lines(s, out.tables[k]);
      writer.write("probs_" + out.tables[k].model + ".jsonl", s.str());
    }
  });
  verify_artifacts(c.output_dir, run.manifest);
  writer.commit();
  return bundle;
}

enum class AblationToggle { negation, ngrams };

inline const char* to_string(AblationToggle t) { return t == AblationToggle::negation ? "negation" : "ngrams"; }

/// Retrains the native models with each component switched off and reports
/// baseline minus ablated accuracy and F1 per model (positive delta: the
/// component helps).
inline json run_ablation(const RunConfig& c, const std::vector<AblationToggle>& toggles) {
  check_inputs(c);
  const auto data = prepare_corpus(c);
  auto score = [&](const RunConfig& cfg) {
    const auto sys = train_system(cfg, data.train);
    auto out = evaluate_system(cfg, sys.vocab, sys.natives, data.test, {});
    out.reports.pop_back();  // natives only
    return out.reports;
  };
  const auto baseline = score(c);
  json result;
  result["format"] = "senti.ablation";
  result["version"] = 1;
  json base = json::array();
  for (const auto& r : baseline) base.push_back(metrics::to_json(r));
  result["baseline"] = base;
  json rows = json::array();
  for (const auto t : toggles) {
    RunConfig off = c;
    if (t == AblationToggle::negation) {
      off.prep.mark_negation = false;
    } else {
      off.vectorizer.ngram_min = 1;
      off.vectorizer.ngram_max = 1;
    }
    const auto ablated = score(off);
    json models = json::array();
    for (std::size_t k = 0; k < baseline.size(); ++k) {
      models.push_back({{"model", baseline[k].model},
                        {"baseline_accuracy", baseline[k].scalars.accuracy},
                        {"ablated_accuracy", ablated[k].scalars.accuracy},
                        {"accuracy_delta", baseline[k].scalars.accuracy - ablated[k].scalars.accuracy},
                        {"baseline_f1", baseline[k].scalars.f1},
                        {"ablated_f1", ablated[k].scalars.f1},
                        {"f1_delta", baseline[k].scalars.f1 - ablated[k].scalars.f1}});
    }
    rows.push_back({{"component", to_string(t)}, {"models", models}});
  }
  result["components"] = rows;
  return result;
}

// ---------------------------------------------------------------------------
// Single-text prediction and explanation

/// Ensemble over the native models only, keeping configured weights for
/// those that appear in ensemble.models.
inline ensemble::EnsembleConfig native_ensemble(const RunConfig& c, const std::vector<NativeModel>& natives) {
  std::vector<std::string> ids;
  std::vector<double> weights;
  for (std::size_t i = 0; i < c.ensemble_models.size(); ++i) {
    const auto& id = c.ensemble_models[i];
    const bool native = std::any_of(natives.begin(), natives.end(), [&](const auto& n) { return n.id == id; });
    if (native) {
      ids.push_back(id);
      if (i < c.ensemble_weights.size()) weights.push_back(c.ensemble_weights[i]);
    }
  }
  if (ids.empty()) {
    for (const auto& n : natives) ids.push_back(n.id);
    weights.clear();
  }
  if (weights.size() != ids.size()) weights.clear();
  return ensemble::EnsembleConfig(ids, weights);
}

inline ensemble::Verdict predict_text(const LoadedRun& run, const RunConfig& c, const std::string& text) {
  if (textprep::tokenize(textprep::normalize(text)).empty()) throw usage_error("input text has no tokens");
  const auto ens = native_ensemble(c, run.natives);
  const auto units = featurize(text, run.vocab, run.trained_with);
  std::vector<ProbabilityDistribution> dists;
  for (const auto& id : ens.model_ids()) {
    const auto it = std::find_if(run.natives.begin(), run.natives.end(), [&](const auto& n) { return n.id == id; });
    dists.push_back(predict_review(it->model, units, c.aggregation));
  }
  return ensemble::soft_vote(dists, ens);
}

/// Masking attribution of the native ensemble's P(positive) over the raw
/// tokens of `text`.
inline explain::Attribution explain_text_masking(const LoadedRun& run, const RunConfig& c, const std::string& text) {
  const auto groups = textprep::clauses(text);
  textprep::TokenSequence raw;
  for (const auto& g : groups) raw.insert(raw.end(), g.begin(), g.end());
  if (raw.empty()) throw usage_error("input text has no tokens");
  const auto ens = native_ensemble(c, run.natives);
  auto cfg = c.masking;
  cfg.max_evaluations = std::max(cfg.max_evaluations, raw.size());
  const explain::ProbabilityFunction predict = [&](const textprep::TokenSequence& tokens) {
    std::vector<textprep::TokenSequence> masked;
    std::size_t at = 0;
    for (const auto& g : groups) {
      masked.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                          tokens.begin() + static_cast<std::ptrdiff_t>(at + g.size()));
      at += g.size();
    }
    const auto x = features::transform(preprocess_masked(masked, cfg.mask_token, run.trained_with.prep), run.vocab);
    std::vector<ProbabilityDistribution> dists;
    for (const auto& id : ens.model_ids()) {
      const auto it = std::find_if(run.natives.begin(), run.natives.end(), [&](const auto& n) { return n.id == id; });
      dists.push_back(models::predict_proba(it->model, x));
    }
    return ensemble::soft_vote(dists, ens).combined.positive();
  };
  return explain::explain_by_masking(predict, raw, cfg);
}

/// Exact linear attribution of a native linear model's margin.
inline explain::Attribution explain_text_linear(const LoadedRun& run, const RunConfig& c, const std::string& text,
                                                const std::string& model_id) {
  const auto it = std::find_if(run.natives.begin(), run.natives.end(), [&](const auto& n) { return n.id == model_id; });
  if (it == run.natives.end()) throw usage_error("unknown model: " + model_id);
  const models::LinearModel* lin = nullptr;
  if (const auto* svm = std::get_if<models::CalibratedSvm>(&it->model)) lin = &svm->linear;
  if (const auto* lr = std::get_if<models::LinearModel>(&it->model)) lin = lr;
  if (!lin) throw usage_error("linear attribution needs logistic_regression or svm, not " + model_id);
  const auto x = features::transform(textprep::preprocess(text, run.trained_with.prep), run.vocab);
  SparseVector background;
  if (c.explain_train_mean) {
    std::vector<SparseVector> rows;
    for (const auto& d : manifest_documents(run, "train_ids")) {
      rows.push_back(features::transform(textprep::preprocess(d.text, run.trained_with.prep), run.vocab));
    }
    background = explain::mean_vector(rows, run.vocab.size());
  }
  return explain::explain_linear(*lin, x, background, &run.vocab);
}

}  // namespace senti::pipeline
