#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "senti/pipeline.hpp"

namespace senti::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::internal: return 3;
  }
  return 3;
}

/// Settings shared by every subcommand.
struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool json = false;
  std::vector<std::string> sets;  // key=value
};

inline pipeline::RunConfig resolve_config(const GlobalOptions& g) {
  config::KeyValues overrides;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw usage_error("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (g.seed) {
    for (const char* k : {"split.seed", "train.seed", "explain.seed"}) overrides[k] = std::to_string(*g.seed);
  }
  if (!g.output_dir.empty()) overrides["output.dir"] = fs::absolute(g.output_dir).string();
  return pipeline::load_run_config(g.config_path, overrides);
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string read_input(const std::string& text, const std::string& input) {
  if (!text.empty() && !input.empty()) throw usage_error("give either TEXT or --input, not both");
  if (!input.empty()) {
    if (!fs::exists(input)) throw usage_error("input file not found: " + input);
    return read_file(input);
  }
  return text;
}

inline void require_text(const std::string& text) {
  if (textprep::tokenize(textprep::normalize(text)).empty()) throw usage_error("input text is empty");
}

inline void print_verdict(std::ostream& out, const ensemble::Verdict& v, const ensemble::EnsembleConfig& cfg) {
  out << "label: " << to_string(v.label) << '\n';
  out << "combined: negative=" << fixed(v.combined.negative()) << " positive=" << fixed(v.combined.positive()) << '\n';
  for (std::size_t i = 0; i < v.per_model.size(); ++i) {
    out << "  " << cfg.model_ids()[i] << " (w=" << fixed(cfg.weights()[i], 3)
        << "): negative=" << fixed(v.per_model[i].negative()) << " positive=" << fixed(v.per_model[i].positive())
        << '\n';
  }
}

/// Text table sorted by accuracy, best first.
inline std::string render_table(std::vector<metrics::EvaluationReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const auto& a, const auto& b) { return a.scalars.accuracy > b.scalars.accuracy; });
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(width)) << "model"
    << "  accuracy  precision  recall  f1      roc_auc\n";
  for (const auto& r : reports) {
    s << std::left << std::setw(static_cast<int>(width)) << r.model << "  " << fixed(r.scalars.accuracy) << "    "
      << fixed(r.scalars.precision) << "     " << fixed(r.scalars.recall) << "  " << fixed(r.scalars.f1) << "  "
      << fixed(r.roc_auc) << '\n';
  }
  return s.str();
}

inline std::string render_csv(std::vector<metrics::EvaluationReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const auto& a, const auto& b) { return a.scalars.accuracy > b.scalars.accuracy; });
  std::ostringstream s;
  s << "model,accuracy,f1,roc_auc\n";
  s << std::setprecision(10);
  for (const auto& r : reports) s << r.model << ',' << r.scalars.accuracy << ',' << r.scalars.f1 << ',' << r.roc_auc << '\n';
  return s.str();
}

inline explain::RenderFormat parse_format(const std::string& f) {
  if (f == "text") return explain::RenderFormat::text;
  if (f == "json") return explain::RenderFormat::json;
  if (f == "svg") return explain::RenderFormat::svg_bar;
  throw usage_error("--format must be text, json or svg");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"senti: sentiment classification with a soft-voting ensemble"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Key/value config file");
  app.add_option("--seed", g.seed, "Seed for split, training and explanation sampling");
  app.add_option("--output-dir", g.output_dir, "Run directory (overrides output.dir)");
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_option("--set", g.sets, "Override a config key: --set key=value")->allow_extra_args(false);

  auto* prepare = app.add_subcommand("prepare", "Load and split the corpus; print its summary");
  std::string prepare_out;
  prepare->add_option("--out", prepare_out, "Also write the summary JSON here");

  auto* train = app.add_subcommand("train", "Fit the vocabulary and the three native models");

  auto* predict = app.add_subcommand("predict", "Classify one review with the trained models");
  std::string predict_text, predict_input;
  bool predict_explain = false;
  predict->add_option("text", predict_text, "Review text");
  predict->add_option("--input", predict_input, "Read the review from a file");
  predict->add_flag("--explain", predict_explain, "Attach a masking attribution");

  auto* evaluate = app.add_subcommand("evaluate", "Score every model and the ensemble on the test split");
  std::vector<std::string> evaluate_probs;
  evaluate->add_option("--probs", evaluate_probs, "Extra external probability files");

  auto* ens = app.add_subcommand("ensemble", "Soft-vote external probability files");
  std::vector<std::string> ens_probs;
  std::vector<double> ens_weights;
  std::string ens_ids_from, ens_out;
  ens->add_option("--probs", ens_probs, "Probability files, one per model")->required();
  ens->add_option("--weights", ens_weights, "One weight per file (normalized)")->delimiter(',');
  ens->add_option("--ids-from", ens_ids_from, "Take the id set from this file (default: the first)");
  ens->add_option("--out", ens_out, "Write verdict lines here instead of stdout");

  auto* expl = app.add_subcommand("explain", "Attribute a prediction to tokens or features");
  std::string expl_text, expl_input, expl_method = "masking", expl_model = "logistic_regression",
                                      expl_format = "text", expl_svg_out;
  expl->add_option("text", expl_text, "Review text");
  expl->add_option("--input", expl_input, "Read the review from a file");
  expl->add_option("--method", expl_method, "masking (ensemble probability) or linear (exact, one model)")
      ->check(CLI::IsMember({"masking", "linear"}));
  expl->add_option("--model", expl_model, "Model for --method linear: logistic_regression or svm");
  expl->add_option("--format", expl_format, "text, json or svg")->check(CLI::IsMember({"text", "json", "svg"}));
  expl->add_option("--svg-out", expl_svg_out, "Also write an SVG bar chart here");

  auto* ablate = app.add_subcommand("ablate", "Retrain with components disabled and report deltas");
  std::vector<std::string> toggles;
  ablate->add_option("--toggle", toggles, "negation and/or ngrams")->check(CLI::IsMember({"negation", "ngrams"}));

  auto* report = app.add_subcommand("report", "Render a report bundle as a table and CSV series");
  std::string report_bundle, report_csv;
  report->add_option("bundle", report_bundle, "reports.json (default: <output-dir>/reports.json)");
  report->add_option("--csv", report_csv, "Write the CSV series here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prepare->parsed()) {
      const auto cfg = resolve_config(g);
      pipeline::check_inputs(cfg);
      const auto data = pipeline::prepare_corpus(cfg);
      auto j = corpus::to_json(data.summary);
      j["train"] = data.train.size();
      j["test"] = data.test.size();
      if (!prepare_out.empty()) write_file(prepare_out, pipeline::dump(j));
      if (g.json) {
        out << j.dump() << '\n';
      } else {
        out << "documents: " << data.summary.total << " (positive " << data.summary.positive << ", negative "
            << data.summary.negative << ")\n"
            << "unique texts: " << data.summary.unique_texts << '\n'
            << "rejected: missing " << data.summary.missing << ", mismatched " << data.summary.mismatched << '\n'
            << "split: train " << data.train.size() << ", test " << data.test.size() << '\n';
      }
    } else if (train->parsed()) {
      const auto cfg = resolve_config(g);
      const auto manifest = pipeline::run_train(cfg);
      if (g.json) {
        out << manifest.dump() << '\n';
      } else {
        out << "trained into " << cfg.output_dir.string() << '\n'
            << "vocabulary: " << manifest["vocab_hash"].get<std::string>().substr(0, 12) << '\n';
        for (const auto& [name, info] : manifest["artifacts"].items()) out << "  " << name << '\n';
      }
    } else if (predict->parsed()) {
      const auto cfg = resolve_config(g);
      const auto text = read_input(predict_text, predict_input);
      require_text(text);
      const auto run = pipeline::load_run(cfg.output_dir);
      const auto verdict = pipeline::predict_text(run, cfg, text);
      const auto ens_cfg = pipeline::native_ensemble(cfg, run.natives);
      std::optional<explain::Attribution> attribution;
      if (predict_explain) attribution = pipeline::explain_text_masking(run, cfg, text);
      if (g.json) {
        auto j = ensemble::to_json(verdict, 0, ens_cfg);
        j.erase("id");
        if (attribution) j["attribution"] = explain::to_json(*attribution);
        out << j.dump() << '\n';
      } else {
        print_verdict(out, verdict, ens_cfg);
        if (attribution) out << explain::render_attribution(*attribution, explain::RenderFormat::text);
      }
    } else if (evaluate->parsed()) {
      auto cfg = resolve_config(g);
      for (const auto& p : evaluate_probs) cfg.external_files.push_back(fs::absolute(p));
      const auto bundle = pipeline::run_evaluate(cfg);
      if (g.json) {
        out << bundle.dump() << '\n';
      } else {
        out << render_table(pipeline::parse_bundle(bundle));
      }
    } else if (ens->parsed()) {
      std::vector<external::PredictionTable> tables;
      std::vector<std::string> ids_for_cfg;
      for (const auto& p : ens_probs) {
        tables.push_back(external::load_probability_file(p));
        ids_for_cfg.push_back(tables.back().model);
      }
      const auto ids_table = ens_ids_from.empty() ? tables.front() : external::load_probability_file(ens_ids_from);
      std::vector<DocId> ids;
      for (const auto& [id, _] : ids_table.by_id) ids.push_back(id);
      const ensemble::EnsembleConfig cfg(ids_for_cfg, ens_weights);
      const auto verdicts = ensemble::batch_vote(external::align(tables, ids), cfg);
      std::ostringstream lines;
      for (std::size_t i = 0; i < ids.size(); ++i) lines << ensemble::to_json(verdicts[i], ids[i], cfg).dump() << '\n';
      if (ens_out.empty()) {
        out << lines.str();
      } else {
        write_file(ens_out, lines.str());
        if (!g.json) out << "wrote " << ids.size() << " verdicts to " << ens_out << '\n';
      }
    } else if (expl->parsed()) {
      const auto cfg = resolve_config(g);
      const auto text = read_input(expl_text, expl_input);
      require_text(text);
      const auto run = pipeline::load_run(cfg.output_dir);
      const auto a = expl_method == "linear" ? pipeline::explain_text_linear(run, cfg, text, expl_model)
                                             : pipeline::explain_text_masking(run, cfg, text);
      if (!expl_svg_out.empty()) write_file(expl_svg_out, explain::render_attribution(a, explain::RenderFormat::svg_bar));
      const auto format = g.json ? explain::RenderFormat::json : parse_format(expl_format);
      out << explain::render_attribution(a, format);
      if (format == explain::RenderFormat::json) out << '\n';
    } else if (ablate->parsed()) {
      const auto cfg = resolve_config(g);
      std::vector<pipeline::AblationToggle> ts;
      for (const auto& t : toggles) {
        ts.push_back(t == "negation" ? pipeline::AblationToggle::negation : pipeline::AblationToggle::ngrams);
      }
      const auto result = pipeline::run_ablation(cfg, ts);
      fs::create_directories(cfg.output_dir);
      write_file(cfg.output_dir / "ablation.json", pipeline::dump(result));
      if (g.json) {
        out << result.dump() << '\n';
      } else {
        out << "baseline\n";
        for (const auto& r : result["baseline"]) {
          out << "  " << r["model"].get<std::string>() << ": accuracy " << fixed(r["accuracy"].get<double>())
              << ", f1 " << fixed(r["f1"].get<double>()) << '\n';
        }
        for (const auto& c : result["components"]) {
          out << "without " << c["component"].get<std::string>() << '\n';
          for (const auto& m : c["models"]) {
            out << "  " << m["model"].get<std::string>() << ": accuracy delta "
                << fixed(m["accuracy_delta"].get<double>()) << ", f1 delta " << fixed(m["f1_delta"].get<double>())
                << '\n';
          }
        }
      }
    } else if (report->parsed()) {
      fs::path path = report_bundle;
      if (path.empty()) path = resolve_config(g).output_dir / "reports.json";
      if (!fs::exists(path)) throw usage_error("report bundle not found: " + path.string());
      json j;
      try {
        j = json::parse(read_file(path));
      } catch (const json::parse_error& e) {
        throw data_error("malformed report bundle " + path.string() + ": " + e.what());
      }
      std::vector<metrics::EvaluationReport> reports;
      try {
        reports = pipeline::parse_bundle(j);
      } catch (const json::exception& e) {
        throw data_error("malformed report bundle " + path.string() + ": " + e.what());
      }
      if (reports.empty()) throw data_error("report bundle " + path.string() + " has no reports");
      if (!report_csv.empty()) write_file(report_csv, render_csv(reports));
      if (g.json) {
        std::stable_sort(reports.begin(), reports.end(),
                         [](const auto& a, const auto& b) { return a.scalars.accuracy > b.scalars.accuracy; });
        out << pipeline::bundle_json(reports).dump() << '\n';
      } else {
        out << render_table(reports);
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace senti::cli
