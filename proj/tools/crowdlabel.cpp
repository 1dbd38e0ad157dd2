// crowdlabel command-line entry point.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdlabel/error.hpp"
#include "crowdlabel/pipeline.hpp"

namespace cl = crowdlabel;

namespace {

void print_result(const cl::StageResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << r.stage << ": " << w << '\n';
  std::cout << r.summary << '\n';
}

int stage_failure(const std::string& stage, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json err;
  err["error"]["stage"] = stage;
  err["error"]["kind"] = kind;
  err["error"]["message"] = message;
  std::cerr << err.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  return 1;
}

std::optional<cl::AnnotatorKind> parse_kind(const std::string& s) {
  if (s.empty() || s == "any") return std::nullopt;
  return cl::annotator_kind_from_name(s);
}

std::set<std::size_t> parse_sizes(const std::string& s) {
  std::set<std::size_t> out;
  for (const auto& part : cl::split_list(s)) {
    if (part.find_first_not_of("0123456789") != std::string::npos) {
      throw cl::ConfigError("subset size '" + part + "' is not a positive integer");
    }
    out.insert(std::stoul(part));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-annotator labeling pipeline: cleaning, LLM annotation, consensus, reliability and evaluation."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cl::kToolVersion));

  std::uint64_t seed = 0;
  auto add_seed = [&seed](CLI::App* sub) { sub->add_option("--seed", seed, "Seed recorded in output headers"); };

  // clean
  cl::CleanStage clean;
  std::string clean_dedupe = "clean_text";
  std::string clean_stats;
  bool keep_hashtag_words = false, drop_hashtag_words = false, keep_hashmarks = false, keep_urls = false,
       keep_mentions = false, keep_punct = false, no_lower = false;
  auto* c_clean = app.add_subcommand("clean", "Clean and filter a post corpus");
  c_clean->add_option("--input", clean.input, "Posts, one JSON object per line")->required();
  c_clean->add_option("--output", clean.output, "Cleaned posts")->required();
  c_clean->add_option("--min-words", clean.cleaning.min_words, "Drop posts with fewer cleaned words")->capture_default_str();
  c_clean->add_option("--stats", clean_stats, "Also write corpus statistics as CSV");
  auto* khw = c_clean->add_flag("--keep-hashtag-words", keep_hashtag_words, "Strip '#' but keep the word (default)");
  c_clean->add_flag("--drop-hashtag-words", drop_hashtag_words, "Remove hashtag tokens entirely")->excludes(khw);
  c_clean->add_flag("--keep-hashmarks", keep_hashmarks, "Leave '#' on hashtag words");
  c_clean->add_flag("--keep-urls", keep_urls, "Do not remove URL tokens");
  c_clean->add_flag("--keep-mentions", keep_mentions, "Do not remove @mentions");
  c_clean->add_flag("--keep-punctuation", keep_punct, "Do not remove punctuation");
  c_clean->add_flag("--no-lowercase", no_lower, "Preserve letter case");
  c_clean->add_option("--dedupe-on", clean_dedupe, "Duplicate key")->check(CLI::IsMember({"clean_text", "raw_text"}));
  add_seed(c_clean);

  // sample
  cl::SampleStage sample;
  auto* c_sample = app.add_subcommand("sample", "Draw a reproducible random sample of posts");
  c_sample->add_option("--input", sample.input)->required();
  c_sample->add_option("--output", sample.output)->required();
  c_sample->add_option("-n,--count", sample.n, "Sample size")->required();
  add_seed(c_sample);

  // annotate
  cl::AnnotateStage annotate;
  std::string mock_rules;
  bool no_rate_limit = false;
  auto* c_annotate = app.add_subcommand("annotate", "Label posts with every backend in the roster");
  c_annotate->add_option("--posts,--input", annotate.posts, "Cleaned posts")->required();
  c_annotate->add_option("--backends", annotate.backends, "Backend roster (JSON)")->required();
  c_annotate->add_option("--output", annotate.output, "Annotations file")->required();
  c_annotate->add_option("--mock", mock_rules, "Use offline keyword backends configured by this rules file");
  c_annotate->add_flag("--resume", annotate.resume, "Reuse cells already present in the output file");
  c_annotate->add_flag("--no-rate-limit", no_rate_limit, "Ignore requests_per_minute");
  add_seed(c_annotate);

  // consensus
  cl::ConsensusStage consensus;
  std::string cons_annotations, cons_assignments, cons_sizes, cons_kind, cons_tie = "mark_missing";
  std::vector<std::string> cons_subsets;
  auto* c_consensus = app.add_subcommand("consensus", "Majority-vote consensus for rater subsets");
  auto* ca = c_consensus->add_option("--annotations", cons_annotations, "Annotations file");
  c_consensus->add_option("--assignments", cons_assignments, "Human assignments file")->excludes(ca);
  c_consensus->add_option("--output", consensus.output)->required();
  c_consensus->add_option("--subset", cons_subsets, "Comma-separated annotator ids; repeatable");
  c_consensus->add_option("--all-combinations", cons_sizes, "Every subset of these sizes, e.g. 1,3,5");
  c_consensus->add_flag("--all-raters", consensus.all_raters, "One subset holding every rater");
  c_consensus->add_option("--kind", cons_kind, "Restrict raters to llm or human")->check(CLI::IsMember({"llm", "human", "any"}));
  c_consensus->add_option("--min-valid-votes", consensus.policy.min_valid_votes)->capture_default_str();
  c_consensus->add_option("--tie-break", cons_tie)->check(CLI::IsMember({"mark_missing", "negative"}));
  add_seed(c_consensus);

  // irr
  cl::IrrStage irr;
  std::string irr_annotations, irr_assignments, irr_raters, irr_groups, irr_kind;
  bool irr_pairs = false;
  auto* c_irr = app.add_subcommand("irr", "Inter-rater reliability reports");
  auto* ia = c_irr->add_option("--annotations", irr_annotations);
  c_irr->add_option("--assignments", irr_assignments)->excludes(ia);
  c_irr->add_option("--raters", irr_raters, "Comma-separated annotator ids (default: all)");
  c_irr->add_flag("--pairs", irr_pairs, "Pairwise percent agreement and kappa");
  c_irr->add_flag("--triples", irr.triples, "Alpha for every three-rater combination");
  c_irr->add_option("--groups", irr_groups, "Alpha per group from a groups file");
  c_irr->add_option("--kind", irr_kind)->check(CLI::IsMember({"llm", "human", "any"}));
  c_irr->add_option("--output", irr.output_dir, "Report directory")->required();
  add_seed(c_irr);

  // eval
  cl::EvalStage eval;
  std::string eval_output;
  auto* c_eval = app.add_subcommand("eval", "Evaluate predictions against consensus truth");
  c_eval->add_option("--pred", eval.pred, "Consensus or annotations file")->required();
  c_eval->add_option("--truth", eval.truth, "Consensus file")->required();
  c_eval->add_option("--truth-subset", eval.truth_subset, "Subset name inside the truth file");
  c_eval->add_option("--output", eval_output, "Report directory");
  add_seed(c_eval);

  // demographics
  cl::DemographicsStage demo;
  auto* c_demo = app.add_subcommand("demographics", "Association of worker demographics with labels");
  c_demo->add_option("--assignments", demo.assignments)->required();
  c_demo->add_option("--output", demo.output_dir)->required();
  add_seed(c_demo);

  // report
  cl::ReportStage report;
  std::string report_output;
  auto* c_report = app.add_subcommand("report", "Render all CSV reports under a directory as text");
  c_report->add_option("--all", report.dir, "Report directory")->required();
  c_report->add_option("--output", report_output, "Text output (default: <dir>/report.txt)");
  add_seed(c_report);

  // pipeline
  std::string config_path;
  auto* c_pipeline = app.add_subcommand("pipeline", "Run every stage from a config file");
  c_pipeline->add_option("--config", config_path, "key = value config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();
  try {
    if (sub == c_clean) {
      clean.seed = seed;
      if (!clean_stats.empty()) clean.stats = clean_stats;
      clean.cleaning.drop_hashtag_words = drop_hashtag_words;
      clean.cleaning.strip_hashmarks = !keep_hashmarks;
      clean.cleaning.strip_urls = !keep_urls;
      clean.cleaning.strip_mentions = !keep_mentions;
      clean.cleaning.strip_punctuation = !keep_punct;
      clean.cleaning.lowercase = !no_lower;
      clean.cleaning.dedupe_on = clean_dedupe == "raw_text" ? cl::DedupeKey::RawText : cl::DedupeKey::CleanText;
      print_result(cl::run_clean(clean));
    } else if (sub == c_sample) {
      sample.seed = seed;
      print_result(cl::run_sample(sample));
    } else if (sub == c_annotate) {
      annotate.seed = seed;
      if (!mock_rules.empty()) annotate.mock_rules = mock_rules;
      annotate.rate_limit = !no_rate_limit;
      print_result(cl::run_annotate(annotate));
    } else if (sub == c_consensus) {
      consensus.seed = seed;
      if (!cons_annotations.empty()) consensus.annotations = cons_annotations;
      if (!cons_assignments.empty()) consensus.assignments = cons_assignments;
      for (const auto& s : cons_subsets) consensus.subsets.push_back(cl::split_list(s));
      if (!cons_sizes.empty()) consensus.combination_sizes = parse_sizes(cons_sizes);
      consensus.kind = parse_kind(cons_kind);
      consensus.policy.tie_break = cl::tie_break_from_name(cons_tie);
      print_result(cl::run_consensus(consensus));
    } else if (sub == c_irr) {
      irr.seed = seed;
      if (!irr_annotations.empty()) irr.annotations = irr_annotations;
      if (!irr_assignments.empty()) irr.assignments = irr_assignments;
      if (!irr_groups.empty()) irr.groups = irr_groups;
      irr.raters = cl::split_list(irr_raters);
      irr.kind = parse_kind(irr_kind);
      irr.pairs = irr_pairs || (!irr.triples && !irr.groups);
      print_result(cl::run_irr(irr));
    } else if (sub == c_eval) {
      eval.seed = seed;
      if (!eval_output.empty()) eval.output_dir = eval_output;
      print_result(cl::run_eval(eval, eval.output_dir ? nullptr : &std::cout));
    } else if (sub == c_demo) {
      demo.seed = seed;
      print_result(cl::run_demographics(demo));
    } else if (sub == c_report) {
      report.seed = seed;
      if (!report_output.empty()) report.output = report_output;
      print_result(cl::run_report(report));
    } else if (sub == c_pipeline) {
      const auto config = cl::load_pipeline_config(config_path);
      cl::run_pipeline(config, print_result);
    }
  } catch (const cl::Error& e) {
    return stage_failure(stage, e.kind(), e.what());
  } catch (const std::exception& e) {
    return stage_failure(stage, "internal", e.what());
  }
  return 0;
}
