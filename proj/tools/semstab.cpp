// semstab command-line interface.

#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semstab/semstab.hpp"

namespace fs = std::filesystem;
using namespace semstab;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

int report_error(bool json, std::string_view kind, int code, const std::string& stage, const std::string& message) {
  if (json) {
    nlohmann::ordered_json j;
    j["error"] = {{"kind", kind}, {"exit_code", code}, {"stage", stage}, {"message", message}};
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << "semstab: " << kind << " error";
    if (!stage.empty()) std::cerr << " in " << stage;
    std::cerr << ": " << message << "\n";
  }
  return code;
}

template <class T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

struct SgnsFlags {
  std::optional<int> dimension, window, negatives, epochs, threads;
  std::optional<double> learning_rate, subsample;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--dimension", dimension, "embedding dimension");
    app->add_option("--window", window, "maximum context window");
    app->add_option("--negatives", negatives, "negative samples per pair");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--learning-rate", learning_rate, "initial learning rate");
    app->add_option("--subsample", subsample, "subsampling threshold (0 disables)");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--threads", threads, "training threads (1 = deterministic)");
  }

  void apply_to(SgnsConfig& c) const {
    set_if(dimension, c.dimension);
    set_if(window, c.window);
    set_if(negatives, c.negatives);
    set_if(epochs, c.epochs);
    set_if(learning_rate, c.initial_learning_rate);
    set_if(subsample, c.subsample_threshold);
    set_if(seed, c.seed);
    set_if(threads, c.threads);
  }
};

std::vector<EmbeddingMatrix> load_any(const SeriesManifest& m, const std::string& keyword_file) {
  if (m.provenance == Provenance::static_trained) return load_series(m);
  if (keyword_file.empty()) fail(ErrorKind::config, "contextual series '" + m.name + "' needs --keywords");
  auto averaged = ingest_series(m, load_keywords(keyword_file));
  for (const auto& g : averaged.gaps)
    std::cerr << "warning: no occurrences of '" << g.keyword << "' in " << g.year << "\n";
  return std::move(averaged.matrices);
}

}  // namespace

int main(int argc, char** argv) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--json-errors") == 0) json_errors = true;

  CLI::App app{"semstab: semantic stability of words across yearly embeddings"};
  app.require_subcommand(0, 1);
  app.add_flag("--json-errors", json_errors, "print errors as JSON on stderr");
  bool explain = false;
  app.add_flag("--explain-config", explain, "print every config default as TOML and exit");
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic, "force single-threaded training and resampling");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one SGNS model per year of a corpus");
  std::string corpus, years_text, train_out, train_name = "static", train_config;
  std::optional<std::uint64_t> min_count;
  SgnsFlags sgns_flags;
  train_cmd->add_option("--corpus", corpus, "corpus directory (<year>.txt files)");
  train_cmd->add_option("--years", years_text, "year range, e.g. 2019-2023");
  train_cmd->add_option("--out", train_out, "output series directory")->required();
  train_cmd->add_option("--name", train_name, "series name");
  train_cmd->add_option("--config", train_config, "take corpus, span, sgns and min_count from a pipeline config");
  train_cmd->add_option("--min-count", min_count, "minimum token count per year");
  sgns_flags.add(train_cmd);

  // align
  auto* align_cmd = app.add_subcommand("align", "rotate every year onto a base year, then z-score");
  std::string align_manifest, align_out, align_mode = "per_dimension";
  std::optional<int> align_base;
  bool no_standardize = false, normalize_rows = false;
  align_cmd->add_option("--manifest", align_manifest, "static series manifest")->required();
  align_cmd->add_option("--base-year", align_base, "base year (default: first year)");
  align_cmd->add_option("--out", align_out, "output series directory")->required();
  align_cmd->add_flag("--no-standardize", no_standardize, "skip z-scoring");
  align_cmd->add_option("--zscore-mode", align_mode, "per_dimension or whole_matrix");
  align_cmd->add_flag("--normalize-rows", normalize_rows, "unit-normalize rows before alignment");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "SD, MTS, RSC and LNS with bootstrap margins");
  std::string metrics_manifest, metrics_keywords, metrics_out, metrics_years, lns_mode = "endpoints",
                                                                              universe = "automatic",
                                                                              metrics_mode = "per_dimension";
  std::optional<std::string> model;
  int k = 10;
  BootstrapOptions boot;
  bool metrics_standardize = false;
  metrics_cmd->add_option("--manifest", metrics_manifest, "series manifest")->required();
  metrics_cmd->add_option("--keywords", metrics_keywords, "keyword JSON file")->required();
  metrics_cmd->add_option("--out", metrics_out, "output stem (writes <stem>.json and <stem>.csv)")->required();
  metrics_cmd->add_option("--years", metrics_years, "restrict to a year range");
  metrics_cmd->add_option("--k", k, "neighbours for LNS");
  metrics_cmd->add_option("--lns-mode", lns_mode, "endpoints or mean_consecutive");
  metrics_cmd->add_option("--universe", universe, "automatic, vocabulary or keywords");
  metrics_cmd->add_option("--resamples", boot.resamples, "bootstrap resamples");
  metrics_cmd->add_option("--confidence", boot.confidence, "bootstrap confidence level");
  metrics_cmd->add_option("--seed", boot.seed, "bootstrap seed");
  metrics_cmd->add_option("--threads", boot.threads, "bootstrap threads");
  metrics_cmd->add_option("--model", model, "model name in the report (default: series name)");
  metrics_cmd->add_flag("--standardize", metrics_standardize, "z-score each year first (contextual series)");
  metrics_cmd->add_option("--zscore-mode", metrics_mode, "per_dimension or whole_matrix");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus with a planted drift");
  std::string synth_out, synth_years = "2019-2023", target = "target";
  std::uint64_t synth_seed = 1;
  bool no_drift = false, contextual = false;
  std::optional<int> documents, tokens;
  SgnsFlags synth_sgns;
  std::uint64_t synth_min_count = 5;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--years", synth_years, "year range");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--target", target, "planted word");
  synth_cmd->add_flag("--no-drift", no_drift, "hold the planted word's contexts fixed");
  synth_cmd->add_flag("--contextual", contextual, "also write a contextual occurrence series");
  synth_cmd->add_option("--documents", documents, "documents per year");
  synth_cmd->add_option("--tokens", tokens, "tokens per document");
  synth_cmd->add_option("--min-count", synth_min_count, "min_count written to pipeline.toml");
  synth_cmd->add_option("--dimension", synth_sgns.dimension, "sgns.dimension written to pipeline.toml");
  synth_cmd->add_option("--epochs", synth_sgns.epochs, "sgns.epochs written to pipeline.toml");

  // bullseye
  auto* bullseye_cmd = app.add_subcommand("bullseye", "bullseye coordinates and SVG for one word");
  std::string bull_manifest, bull_word, bull_out, bull_keywords, bull_mode = "per_dimension";
  std::optional<int> bull_base;
  bool bull_standardize = false;
  bullseye_cmd->add_option("--manifest", bull_manifest, "aligned series manifest")->required();
  bullseye_cmd->add_option("--word", bull_word, "word to plot")->required();
  bullseye_cmd->add_option("--out", bull_out, "output stem (writes <stem>.svg and <stem>.csv)")->required();
  bullseye_cmd->add_option("--base-year", bull_base, "base year (default: first year)");
  bullseye_cmd->add_option("--keywords", bull_keywords, "keyword JSON file (contextual series)");
  bullseye_cmd->add_flag("--standardize", bull_standardize, "z-score each year first (contextual series)");
  bullseye_cmd->add_option("--zscore-mode", bull_mode, "per_dimension or whole_matrix");

  // validate-manifest
  auto* validate_cmd = app.add_subcommand("validate-manifest", "check a series manifest and its files");
  std::string validate_path;
  validate_cmd->add_option("manifest", validate_path, "manifest.json")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "run the whole pipeline from a config file");
  std::string run_config;
  std::optional<std::string> run_out;
  run_cmd->add_option("config", run_config, "pipeline config (.toml or .json; a run_manifest.json also works)")->required();
  run_cmd->add_option("--output-dir", run_out, "override output_dir");
  run_cmd->add_flag("--deterministic", deterministic, "force single-threaded training and resampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(json_errors, "config", 2, "arguments", e.what());
  }

  try {
    if (explain) {
      std::cout << explain_config();
      return 0;
    }

    if (*train_cmd) {
      PipelineConfig cfg;
      if (!train_config.empty()) cfg = load_config(train_config);
      if (!corpus.empty()) cfg.corpus_path = corpus;
      if (!years_text.empty()) cfg.span = parse_year_range(years_text);
      if (cfg.corpus_path.empty() || cfg.span.first <= 0)
        fail(ErrorKind::config, "train needs --corpus and --years (or --config)");
      set_if(min_count, cfg.min_count);
      sgns_flags.apply_to(cfg.sgns);
      if (deterministic) cfg.sgns.threads = 1;
      cfg.sgns.validate();
      auto slices = load_slices(cfg.corpus_path, cfg.span);
      auto matrices = train_series(slices, cfg.min_count, cfg.sgns, nullptr, &std::cerr);
      write_series(matrices, train_name, train_out);
      std::cout << "wrote " << (fs::path(train_out) / "manifest.json").string() << "\n";
      return 0;
    }

    if (*align_cmd) {
      auto manifest = load_manifest(align_manifest);
      const int base = align_base.value_or(manifest.years.front());
      auto prep = align_and_standardize(load_series(manifest), base, !no_standardize, zscore_mode_from_string(align_mode),
                                        normalize_rows);
      write_series(prep.matrices, manifest.name, align_out);
      nlohmann::ordered_json maps = nlohmann::ordered_json::array();
      for (const auto& m : prep.maps) {
        maps.push_back(to_json(m));
        if (m.warning) std::cerr << "warning: " << m.source_year << ": " << *m.warning << "\n";
      }
      write_text(fs::path(align_out) / "alignment.json", maps.dump(2) + "\n");
      std::cout << "wrote " << (fs::path(align_out) / "manifest.json").string() << "\n";
      return 0;
    }

    if (*metrics_cmd) {
      auto manifest = load_manifest(metrics_manifest);
      if (!metrics_years.empty()) manifest = restrict_manifest(manifest, parse_year_range(metrics_years));
      auto keywords = load_keywords(metrics_keywords);
      ReportOptions opts;
      opts.k = k;
      opts.lns_mode = lns_mode_from_string(lns_mode);
      opts.universe = universe_from_string(universe);
      opts.bootstrap = boot;
      if (deterministic) opts.bootstrap.threads = 1;
      opts.model_name = model.value_or(manifest.name);
      auto matrices = load_any(manifest, metrics_keywords);
      if (metrics_standardize) matrices = standardize_all(std::move(matrices), zscore_mode_from_string(metrics_mode));
      auto rep = report(matrices, keywords, opts);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      write_report(rep, metrics_out);
      std::cout << to_csv(std::span<const MetricReport>(&rep, 1));
      return 0;
    }

    if (*synth_cmd) {
      SynthJob job;
      job.years = parse_year_range(synth_years);
      job.spec = no_drift ? DriftSpec::no_drift(job.years, synth_seed, target) : DriftSpec::planted(job.years, synth_seed, target);
      set_if(documents, job.spec.documents_per_year);
      set_if(tokens, job.spec.tokens_per_document);
      if (contextual) job.contextual = OccurrenceModel{};
      synth_sgns.apply_to(job.sgns);
      job.min_count = synth_min_count;
      write_synthetic(job, synth_out);
      std::cout << "wrote " << (fs::path(synth_out) / "pipeline.toml").string() << "\n";
      return 0;
    }

    if (*bullseye_cmd) {
      auto manifest = load_manifest(bull_manifest);
      auto matrices = load_any(manifest, bull_keywords);
      if (bull_standardize) matrices = standardize_all(std::move(matrices), zscore_mode_from_string(bull_mode));
      const int base = bull_base.value_or(manifest.years.front());
      auto frame = bullseye(trajectory(keyword_token(bull_word), matrices), base);
      render(frame, bull_out);
      std::cout << bullseye_csv(frame);
      return 0;
    }

    if (*validate_cmd) {
      auto m = load_manifest(validate_path);
      std::cout << "ok: " << m.name << " (" << to_string(m.provenance) << ", " << m.years.size() << " years, dimension "
                << m.dimension << ")\n";
      for (const auto& kw : m.unextractable) std::cout << "unextractable: " << kw << "\n";
      return 0;
    }

    if (*run_cmd) {
      auto cfg = load_config(run_config);
      if (run_out) cfg.output_dir = fs::absolute(*run_out);
      if (deterministic) cfg.deterministic = true;
      auto result = run(cfg, &std::cerr);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& f : result.files) std::cout << (result.output_dir / f).string() << "\n";
      return 0;
    }

    std::cout << app.help();
    return 0;
  } catch (const Error& e) {
    return report_error(json_errors, to_string(e.kind()), exit_code(e.kind()), e.stage(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(json_errors, "data", 3, "", e.what());
  } catch (const std::exception& e) {
    return report_error(json_errors, "internal", 1, "", e.what());
  }
}
