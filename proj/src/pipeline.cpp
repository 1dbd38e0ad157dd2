#include "crowdlabel/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "crowdlabel/analytics.hpp"
#include "crowdlabel/annotation_set.hpp"
#include "crowdlabel/demographics.hpp"
#include "crowdlabel/error.hpp"
#include "crowdlabel/gateway.hpp"
#include "crowdlabel/reliability.hpp"

namespace crowdlabel {

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string join_sizes(const std::set<std::size_t>& sizes) {
  std::vector<std::string> parts;
  for (auto s : sizes) parts.push_back(std::to_string(s));
  return join(parts, ",");
}

std::string fmt(double v, int precision = 4) { return format_number(v, precision); }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void add_line_warnings(StageResult& r, const std::vector<LineError>& errors, const fs::path& source) {
  constexpr std::size_t kShown = 10;
  for (std::size_t i = 0; i < errors.size() && i < kShown; ++i) {
    r.warnings.push_back(source.string() + " line " + std::to_string(errors[i].line_number) + ": " + errors[i].message);
  }
  if (errors.size() > kShown) {
    r.warnings.push_back(std::to_string(errors.size() - kShown) + " more malformed lines in " + source.string());
  }
}

std::string dedupe_name(DedupeKey k) { return k == DedupeKey::RawText ? "raw_text" : "clean_text"; }

std::string kind_name(const std::optional<AnnotatorKind>& k) { return k ? std::string(annotator_kind_name(*k)) : "any"; }

AnnotationSet load_set(const std::optional<fs::path>& annotations, const std::optional<fs::path>& assignments) {
  if (annotations.has_value() == assignments.has_value()) {
    throw ConfigError("give exactly one of an annotations file or an assignments file");
  }
  if (annotations) return read_annotations_file(*annotations);
  return human_annotation_set(read_assignments_file(*assignments));
}

std::vector<std::string> rater_pool(const AnnotationSet& set, const std::vector<std::string>& requested,
                                    const std::optional<AnnotatorKind>& kind) {
  std::vector<std::string> pool;
  if (!requested.empty()) {
    for (const auto& r : requested) {
      const auto idx = set.require_annotator(r);
      if (kind && set.kind(idx) != *kind) {
        throw InvalidArgument("annotator '" + r + "' is not of kind " + std::string(annotator_kind_name(*kind)));
      }
      pool.push_back(r);
    }
    return pool;
  }
  for (std::size_t i = 0; i < set.annotators().size(); ++i) {
    if (!kind || set.kind(i) == *kind) pool.push_back(set.annotators()[i]);
  }
  return pool;
}

std::vector<fs::path> optional_paths(std::initializer_list<std::optional<fs::path>> paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (p) out.push_back(*p);
  }
  return out;
}

}  // namespace

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string config_hash(const ConfigItems& items) {
  std::string text;
  for (const auto& [k, v] : items) text += k + "=" + v + "\n";
  return hex_digest(text);
}

OutputHeader make_header(const std::string& stage, const ConfigItems& items, std::uint64_t seed,
                         const std::vector<fs::path>& inputs) {
  return OutputHeader{stage, config_hash(items), seed, file_digest(inputs)};
}

bool outputs_current(const std::vector<fs::path>& outputs, const OutputHeader& header) {
  for (const auto& p : outputs) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return false;
    const auto h = read_header(p);
    if (!h || !(*h == header)) return false;
  }
  return !outputs.empty();
}

// ---- clean ----

ConfigItems CleanStage::items() const {
  return {{"min_words", std::to_string(cleaning.min_words)},
          {"lowercase", bool_str(cleaning.lowercase)},
          {"strip_urls", bool_str(cleaning.strip_urls)},
          {"strip_mentions", bool_str(cleaning.strip_mentions)},
          {"strip_hashmarks", bool_str(cleaning.strip_hashmarks)},
          {"drop_hashtag_words", bool_str(cleaning.drop_hashtag_words)},
          {"strip_punctuation", bool_str(cleaning.strip_punctuation)},
          {"dedupe_on", dedupe_name(cleaning.dedupe_on)},
          {"stats", bool_str(stats.has_value())}};
}

std::vector<fs::path> CleanStage::outputs() const {
  std::vector<fs::path> out{output};
  if (stats) out.push_back(*stats);
  return out;
}

StageResult run_clean(const CleanStage& stage) {
  stage.cleaning.validate();
  StageResult r{"clean", {}, {}, stage.outputs(), false};
  auto parsed = parse_posts_file(stage.input);
  add_line_warnings(r, parsed.errors, stage.input);
  const std::size_t n_in = parsed.posts.size();
  const auto kept = filter_corpus(std::move(parsed.posts), stage.cleaning);
  const auto header = make_header("clean", stage.items(), stage.seed, stage.inputs());

  std::ostringstream os;
  os << header_json_line(header) << '\n';
  for (const auto& p : kept) os << post_to_json_line(p) << '\n';
  ensure_parent(stage.output);
  write_file_atomically(stage.output, os.str());

  const auto stats = corpus_stats(kept);
  if (stage.stats) {
    std::ostringstream cs;
    cs << header_csv_line(header) << '\n';
    CsvWriter w(cs);
    w.row({"metric", "value"});
    w.row({"total_posts", std::to_string(stats.total_posts)});
    w.row({"sensitive_count", std::to_string(stats.sensitive_count)});
    w.row({"verified_count", std::to_string(stats.verified_count)});
    w.row({"unique_users", std::to_string(stats.unique_users)});
    auto ms = [&w](const std::string& name, const std::optional<MeanSd>& v) {
      w.row({name + "_mean", v ? format_number(v->mean) : ""});
      w.row({name + "_sd_population", v ? format_number(v->sd) : ""});
    };
    ms("repost_count", stats.repost_count);
    ms("like_count", stats.like_count);
    ms("impressions", stats.impressions);
    ms("word_count", stats.word_count);
    ensure_parent(*stage.stats);
    write_file_atomically(*stage.stats, cs.str());
  }

  std::ostringstream s;
  s << "clean: read " << n_in << " posts from " << stage.input.string();
  if (!parsed.errors.empty()) s << " (" << parsed.errors.size() << " malformed lines skipped)";
  s << " and kept " << kept.size() << " after dropping " << (n_in - kept.size())
    << " duplicates or posts with fewer than " << stage.cleaning.min_words << " words; wrote "
    << stage.output.string() << ".";
  if (stats.word_count) {
    s << " Words per post " << fmt(stats.word_count->mean, 3) << " +/- " << fmt(stats.word_count->sd, 3)
      << " (population SD).";
  }
  r.summary = s.str();
  return r;
}

// ---- sample ----

ConfigItems SampleStage::items() const { return {{"n", std::to_string(n)}}; }

StageResult run_sample(const SampleStage& stage) {
  StageResult r{"sample", {}, {}, stage.outputs(), false};
  auto parsed = parse_posts_file(stage.input);
  add_line_warnings(r, parsed.errors, stage.input);
  const auto picked = sample_posts(parsed.posts, stage.n, stage.seed);
  const auto header = make_header("sample", stage.items(), stage.seed, stage.inputs());
  std::ostringstream os;
  os << header_json_line(header) << '\n';
  for (const auto& p : picked) os << post_to_json_line(p) << '\n';
  ensure_parent(stage.output);
  write_file_atomically(stage.output, os.str());
  r.summary = "sample: drew " + std::to_string(picked.size()) + " of " + std::to_string(parsed.posts.size()) +
              " posts without replacement using seed " + std::to_string(stage.seed) + "; wrote " +
              stage.output.string() + ".";
  return r;
}

// ---- annotate ----

ConfigItems AnnotateStage::items() const {
  std::string defs;
  for (const auto& d : default_definitions()) defs += std::string(category_key(d.category)) + ":" + d.definition_text + "\n";
  return {{"backend_mode", mock_rules ? "mock" : "http"}, {"definitions", hex_digest(defs)}};
}

std::vector<fs::path> AnnotateStage::inputs() const {
  auto in = std::vector<fs::path>{posts, backends};
  if (mock_rules) in.push_back(*mock_rules);
  return in;
}

StageResult run_annotate(const AnnotateStage& stage) {
  StageResult r{"annotate", {}, {}, stage.outputs(), false};
  auto parsed = parse_posts_file(stage.posts);
  add_line_warnings(r, parsed.errors, stage.posts);
  const auto roster = load_backend_roster(stage.backends);
  if (roster.empty()) throw ConfigError("backend roster " + stage.backends.string() + " is empty");

  std::vector<Annotator> annotators;
  std::optional<MockRulesFile> rules;
  if (stage.mock_rules) rules = load_mock_rules(*stage.mock_rules);
  for (const auto& b : roster) {
    std::shared_ptr<ChatBackend> backend;
    if (rules) {
      backend = std::make_shared<KeywordMockBackend>(rules->options_for(b.name));
    } else {
      backend = std::make_shared<HttpChatBackend>(b);
    }
    annotators.push_back({b, std::move(backend)});
  }

  std::optional<AnnotationSet> existing;
  std::size_t reused = 0;
  if (stage.resume && fs::exists(stage.output)) {
    existing = read_annotations_file(stage.output);
    for (const auto& a : existing->annotations()) {
      if (!a.error || a.error->find("last transport:") == std::string::npos) ++reused;
    }
  }

  AnnotateOptions opts;
  opts.existing = existing ? &*existing : nullptr;
  opts.rate_limit = stage.rate_limit;
  const auto set = annotate_corpus(annotators, parsed.posts, opts);

  const auto header = make_header("annotate", stage.items(), stage.seed, stage.inputs());
  std::ostringstream os;
  write_annotations(os, set, header);
  ensure_parent(stage.output);
  write_file_atomically(stage.output, os.str());

  std::size_t failed = 0;
  for (const auto& m : missing_rates(set)) {
    failed += m.failed_cells;
    const bool all_missing =
        std::all_of(m.per_category.begin(), m.per_category.end(), [](double v) { return v >= 1.0; });
    if (all_missing && !set.posts().empty()) {
      r.warnings.push_back("annotator '" + m.annotator_id + "' returned no usable labels; its column is all-missing");
    }
  }
  std::ostringstream s;
  s << "annotate: labeled " << set.posts().size() << " posts with " << roster.size() << " "
    << (rules ? "mock" : "HTTP") << " backends (" << set.cell_count() << " cells, " << failed
    << " failed after retries";
  if (existing) s << ", " << reused << " reused from the previous run";
  s << "); wrote " << stage.output.string() << ".";
  r.summary = s.str();
  return r;
}

// ---- consensus ----

ConfigItems ConsensusStage::items() const {
  std::vector<std::string> names;
  for (const auto& s : subsets) names.push_back(join(s, "+"));
  return {{"source", annotations ? "annotations" : "assignments"},
          {"subsets", join(names, ",")},
          {"combination_sizes", join_sizes(combination_sizes)},
          {"all_raters", bool_str(all_raters)},
          {"kind", kind_name(kind)},
          {"min_valid_votes", std::to_string(policy.min_valid_votes)},
          {"tie_break", std::string(tie_break_name(policy.tie_break))}};
}

std::vector<fs::path> ConsensusStage::inputs() const { return optional_paths({annotations, assignments}); }

StageResult run_consensus(const ConsensusStage& stage) {
  stage.policy.validate();
  StageResult r{"consensus", {}, {}, stage.outputs(), false};
  const auto set = load_set(stage.annotations, stage.assignments);
  const auto pool = rater_pool(set, {}, stage.kind);

  std::vector<RaterSubset> subsets;
  for (const auto& ids : stage.subsets) subsets.emplace_back(ids);
  if (stage.all_raters) subsets.emplace_back(pool);
  if (!stage.combination_sizes.empty()) {
    for (auto& s : enumerate_subsets(pool, stage.combination_sizes)) subsets.push_back(std::move(s));
  }
  if (subsets.empty()) throw ConfigError("no rater subsets requested");

  std::vector<ConsensusLabels> results;
  std::size_t missing = 0, total = 0;
  for (const auto& subset : subsets) {
    results.push_back(consensus_labels(set, subset, stage.policy));
    for (const auto& lv : results.back().labels) {
      missing += kNumCategories - lv.present_count();
      total += kNumCategories;
    }
  }
  const auto header = make_header("consensus", stage.items(), stage.seed, stage.inputs());
  std::ostringstream os;
  write_consensus(os, results, header);
  ensure_parent(stage.output);
  write_file_atomically(stage.output, os.str());

  std::ostringstream s;
  s << "consensus: built " << results.size() << " majority-vote subsets over " << set.posts().size() << " posts from "
    << pool.size() << " raters (min_valid_votes " << stage.policy.min_valid_votes << ", ties "
    << tie_break_name(stage.policy.tie_break) << "); " << missing << " of " << total
    << " consensus values are missing; wrote " << stage.output.string() << ".";
  r.summary = s.str();
  return r;
}

// ---- irr ----

ConfigItems IrrStage::items() const {
  return {{"source", annotations ? "annotations" : "assignments"},
          {"raters", join(raters, ",")},
          {"kind", kind_name(kind)},
          {"pairs", bool_str(pairs)},
          {"triples", bool_str(triples)},
          {"groups", bool_str(groups.has_value())}};
}

std::vector<fs::path> IrrStage::inputs() const { return optional_paths({annotations, assignments, groups}); }

std::vector<fs::path> IrrStage::outputs() const {
  std::vector<fs::path> out{output_dir / "summary.csv", output_dir / "groups.csv"};
  if (pairs) out.push_back(output_dir / "pairs.csv");
  return out;
}

StageResult run_irr(const IrrStage& stage) {
  StageResult r{"irr", {}, {}, stage.outputs(), false};
  const auto set = load_set(stage.annotations, stage.assignments);
  const auto pool = rater_pool(set, stage.raters, stage.kind);
  if (pool.size() < 2) throw InvalidArgument("reliability needs at least two raters, found " + std::to_string(pool.size()));

  std::vector<RaterGroup> groups{RaterGroup{"all", {}, pool}};
  if (stage.triples) {
    for (auto& g : rater_triples(pool)) groups.push_back(std::move(g));
  }
  std::size_t n_custom = 0;
  if (stage.groups) {
    auto custom = load_groups(*stage.groups);
    n_custom = custom.size();
    for (auto& g : custom) groups.push_back(std::move(g));
  }
  const auto group_alpha = grouped_alpha(set, groups);

  const auto header = make_header("irr", stage.items(), stage.seed, stage.inputs());
  std::ostringstream summary_csv, pairs_csv, groups_csv;
  summary_csv << header_csv_line(header) << '\n';
  pairs_csv << header_csv_line(header) << '\n';
  groups_csv << header_csv_line(header) << '\n';
  CsvWriter sw(summary_csv), pw(pairs_csv), gw(groups_csv);
  sw.row({"category", "scope", "metric", "mean", "sd", "min", "max", "n", "n_excluded"});
  pw.row({"category", "metric", "rater_a", "rater_b", "value", "n_units", "error"});
  gw.row({"group", "category", "alpha", "observed_disagreement", "expected_disagreement", "n_pairable_values",
          "degenerate", "error"});

  std::vector<std::string> kappa_means, alpha_all;
  std::size_t n_pairs = 0, n_excluded_pairs = 0;
  for (Category c : kAllCategories) {
    const std::string cat(category_display_name(c));
    if (stage.pairs) {
      const auto m = CategoryMatrix::from_set(set, c, set.posts(), pool);
      for (PairMetric metric : {PairMetric::PercentAgreement, PairMetric::Kappa}) {
        const auto ps = pairwise_summary(m, metric);
        const std::string metric_name(pair_metric_name(metric));
        const bool any = ps.n_pairs > 0;
        sw.row({cat, "pairs", metric_name, any ? fmt(ps.mean, 6) : "", any ? fmt(ps.sd, 6) : "",
                any ? fmt(ps.min, 6) : "", any ? fmt(ps.max, 6) : "", std::to_string(ps.n_pairs),
                std::to_string(ps.n_excluded)});
        for (const auto& pv : ps.pairs) {
          pw.row({cat, metric_name, pv.rater_a, pv.rater_b, format_optional(pv.value), std::to_string(pv.n_units),
                  pv.error});
        }
        if (metric == PairMetric::Kappa) {
          kappa_means.push_back(cat + " " + (any ? fmt(ps.mean, 3) : "n/a"));
          n_pairs = ps.pairs.size();
          n_excluded_pairs += ps.n_excluded;
        }
      }
    }
    // Alpha distributions over triples and custom groups.
    std::map<std::string, std::vector<double>> by_scope;
    std::map<std::string, std::size_t> excluded_by_scope;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& ga = group_alpha[g * kNumCategories + index_of(c)];
      const std::string scope = g == 0 ? "all" : (g <= groups.size() - 1 - n_custom ? "triples" : "groups");
      if (ga.result) {
        by_scope[scope].push_back(ga.result->alpha);
        if (g == 0) alpha_all.push_back(cat + " " + fmt(ga.result->alpha, 3));
      } else {
        ++excluded_by_scope[scope];
        if (g == 0) alpha_all.push_back(cat + " n/a");
      }
    }
    for (const std::string scope : {"all", "triples", "groups"}) {
      if (!by_scope.count(scope) && !excluded_by_scope.count(scope)) continue;
      const auto st = summarize(by_scope[scope]);
      const bool any = st.n > 0;
      sw.row({cat, scope, "alpha", any ? fmt(st.mean, 6) : "", any ? fmt(st.sd, 6) : "", any ? fmt(st.min, 6) : "",
              any ? fmt(st.max, 6) : "", std::to_string(st.n), std::to_string(excluded_by_scope[scope])});
    }
  }
  for (const auto& ga : group_alpha) {
    const std::string cat(category_display_name(ga.category));
    if (ga.result) {
      gw.row({ga.group, cat, fmt(ga.result->alpha, 6), fmt(ga.result->observed_disagreement, 6),
              fmt(ga.result->expected_disagreement, 6), std::to_string(ga.result->n_pairable_values),
              bool_str(ga.result->degenerate), ""});
    } else {
      gw.row({ga.group, cat, "", "", "", "", "", ga.error});
    }
  }

  fs::create_directories(stage.output_dir);
  write_file_atomically(stage.output_dir / "summary.csv", summary_csv.str());
  write_file_atomically(stage.output_dir / "groups.csv", groups_csv.str());
  if (stage.pairs) write_file_atomically(stage.output_dir / "pairs.csv", pairs_csv.str());

  if (n_excluded_pairs > 0) {
    r.warnings.push_back(std::to_string(n_excluded_pairs) +
                         " rater pair/category combinations had no co-annotated posts and were excluded");
  }
  std::ostringstream s;
  s << "irr: " << pool.size() << " raters over " << set.posts().size() << " posts";
  if (stage.pairs) s << "; " << n_pairs << " pairs per category, mean kappa " << join(kappa_means, ", ");
  s << "; alpha over all raters " << join(alpha_all, ", ");
  if (stage.triples) s << "; " << (groups.size() - 1 - n_custom) << " triples";
  if (n_custom) s << "; " << n_custom << " custom groups";
  s << "; wrote " << stage.output_dir.string() << ".";
  r.summary = s.str();
  return r;
}

// ---- eval ----

ConfigItems EvalStage::items() const { return {{"truth_subset", truth_subset}}; }

std::vector<fs::path> EvalStage::outputs() const {
  if (!output_dir) return {};
  const auto& d = *output_dir;
  return {d / "eval.csv", d / "summary.csv", d / "best.csv", d / "distribution.csv", d / "cooccurrence.csv",
          d / "eval.txt"};
}

namespace {

std::vector<ConsensusLabels> load_predictions(const fs::path& path) {
  const auto h = read_header(path);
  if (h && h->stage == "annotate") {
    const auto set = read_annotations_file(path);
    std::vector<ConsensusLabels> out;
    for (std::size_t a = 0; a < set.annotators().size(); ++a) {
      ConsensusLabels cl{RaterSubset({set.annotators()[a]}), set.posts(), {}};
      for (std::size_t p = 0; p < set.posts().size(); ++p) {
        const auto& cell = set.cell(p, a);
        cl.labels.push_back(cell ? cell->labels : LabelVector{});
      }
      out.push_back(std::move(cl));
    }
    return out;
  }
  return read_consensus_file(path);
}

std::string measure_str(const Measure& m) { return format_optional(m.value); }

void render_table(std::ostream& out, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto measure = [&width](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
  };
  measure(header);
  for (const auto& row : rows) measure(row);
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string cell = i < row.size() ? row[i] : "";
      line += cell;
      if (i + 1 < width.size()) line += std::string(width[i] - cell.size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& row : rows) emit(row);
}

std::string mean_sd_range(const SummaryStats& s) {
  if (s.n == 0) return "n/a";
  return fmt(s.mean, 3) + " +/- " + fmt(s.sd, 3) + " [" + fmt(s.min, 3) + ", " + fmt(s.max, 3) + "]";
}

}  // namespace

StageResult run_eval(const EvalStage& stage, std::ostream* table_out) {
  StageResult r{"eval", {}, {}, stage.outputs(), false};
  const auto preds = load_predictions(stage.pred);
  const auto truths = read_consensus_file(stage.truth);
  if (truths.empty()) throw IngestError("truth file " + stage.truth.string() + " holds no consensus labels");
  const ConsensusLabels* truth = &truths.front();
  if (!stage.truth_subset.empty()) {
    truth = nullptr;
    for (const auto& t : truths) {
      if (t.subset.name() == stage.truth_subset) truth = &t;
    }
    if (!truth) throw InvalidArgument("truth subset '" + stage.truth_subset + "' not found in " + stage.truth.string());
  }
  const auto cmp = compare_to_truth(preds, *truth);
  const auto header = make_header("eval", stage.items(), stage.seed, stage.inputs());

  std::ostringstream eval_csv, summary_csv, best_csv, dist_csv, cooc_csv, text;
  for (auto* os : {&eval_csv, &summary_csv, &best_csv, &dist_csv, &cooc_csv, &text}) *os << header_csv_line(header) << '\n';
  CsvWriter ew(eval_csv), sw(summary_csv), bw(best_csv), dw(dist_csv), cw(cooc_csv);
  ew.row({"subset", "size", "category", "kappa", "precision", "recall", "f1", "tp", "fp", "fn", "tn",
          "n_excluded_missing", "error"});
  sw.row({"category", "subset_size", "metric", "mean", "sd", "min", "max", "n"});
  bw.row({"category", "best_subset", "kappa"});
  dw.row({"source", "category", "proportion_true"});
  cw.row({"source", "measure", "category_a", "category_b", "value"});

  std::size_t candidate_errors = 0;
  for (const auto& cand : cmp.candidates) {
    const auto name = cand.subset.name();
    for (Category c : kAllCategories) {
      const auto& ce = cand.categories[index_of(c)];
      if (!ce.error.empty()) ++candidate_errors;
      const auto& k = ce.counts;
      ew.row({name, std::to_string(cand.subset.size()), std::string(category_display_name(c)),
              ce.kappa ? fmt(ce.kappa->kappa, 6) : "", measure_str(ce.prf.precision), measure_str(ce.prf.recall),
              measure_str(ce.prf.f1), k ? std::to_string(k->tp) : "", k ? std::to_string(k->fp) : "",
              k ? std::to_string(k->fn) : "", k ? std::to_string(k->tn) : "",
              k ? std::to_string(k->n_excluded_missing) : "", ce.error});
    }
  }

  std::set<std::size_t> sizes;
  for (const auto& cand : cmp.candidates) sizes.insert(cand.subset.size());
  text << "Evaluation of " << cmp.candidates.size() << " candidates against " << truth->subset.size()
       << "-rater consensus over " << truth->posts.size() << " posts\n";
  std::vector<std::string> best_names;
  for (Category c : kAllCategories) {
    const std::string cat(category_display_name(c));
    std::vector<std::vector<std::string>> rows;
    for (const auto& cand : cmp.candidates) {
      const auto& ce = cand.categories[index_of(c)];
      rows.push_back({cand.subset.name(), ce.kappa ? fmt(ce.kappa->kappa, 3) : "n/a",
                      ce.prf.precision.value ? fmt(*ce.prf.precision.value, 3) : "n/a",
                      ce.prf.recall.value ? fmt(*ce.prf.recall.value, 3) : "n/a",
                      ce.prf.f1.value ? fmt(*ce.prf.f1.value, 3) : "n/a"});
    }
    for (auto size : sizes) {
      std::map<std::string, std::vector<double>> values;
      for (const auto& cand : cmp.candidates) {
        if (cand.subset.size() != size) continue;
        const auto& ce = cand.categories[index_of(c)];
        if (ce.kappa) values["kappa"].push_back(ce.kappa->kappa);
        if (ce.prf.precision.value) values["precision"].push_back(*ce.prf.precision.value);
        if (ce.prf.recall.value) values["recall"].push_back(*ce.prf.recall.value);
        if (ce.prf.f1.value) values["f1"].push_back(*ce.prf.f1.value);
      }
      std::vector<std::string> mv_row{"MV size " + std::to_string(size)};
      for (const std::string metric : {"kappa", "precision", "recall", "f1"}) {
        const auto st = summarize(values[metric]);
        const bool any = st.n > 0;
        sw.row({cat, std::to_string(size), metric, any ? fmt(st.mean, 6) : "", any ? fmt(st.sd, 6) : "",
                any ? fmt(st.min, 6) : "", any ? fmt(st.max, 6) : "", std::to_string(st.n)});
        mv_row.push_back(mean_sd_range(st));
      }
      rows.push_back(std::move(mv_row));
    }
    const auto& best = cmp.best[index_of(c)];
    if (best) {
      const auto& cand = cmp.candidates[*best];
      bw.row({cat, cand.subset.name(), fmt(cand.categories[index_of(c)].kappa->kappa, 6)});
      best_names.push_back(cat + " " + cand.subset.name() + " (" + fmt(cand.categories[index_of(c)].kappa->kappa, 3) + ")");
    } else {
      bw.row({cat, "", ""});
      best_names.push_back(cat + " n/a");
    }
    text << '\n' << cat << '\n';
    render_table(text, {"candidate", "kappa", "precision", "recall", "f1"}, rows);
  }

  auto write_distribution = [&dw](const std::string& source, const CategoryProportions& props) {
    for (Category c : kAllCategories) dw.row({source, std::string(category_display_name(c)), format_optional(props[index_of(c)])});
  };
  auto write_cooc = [&cw](const std::string& source, const Cooccurrence& co) {
    for (std::size_t k = 1; k <= kNumCategories; ++k) {
      cw.row({source, "at_least_" + std::to_string(k), "", "", fmt(co.at_least[k - 1], 6)});
    }
    for (std::size_t i = 0; i < kNumCategories; ++i) {
      for (std::size_t j = i; j < kNumCategories; ++j) {
        cw.row({source, "pair_count", std::string(category_display_name(kAllCategories[i])),
                std::string(category_display_name(kAllCategories[j])), std::to_string(co.counts[i][j])});
      }
    }
  };
  const std::string truth_source = "truth:" + truth->subset.name();
  write_distribution(truth_source, category_distribution(*truth));
  const auto truth_cooc = cooccurrence_stats(*truth);
  write_cooc(truth_source, truth_cooc);
  for (const auto& p : preds) {
    write_distribution(p.subset.name(), category_distribution(p));
    write_cooc(p.subset.name(), cooccurrence_stats(p));
  }

  if (stage.output_dir) {
    const auto& d = *stage.output_dir;
    fs::create_directories(d);
    write_file_atomically(d / "eval.csv", eval_csv.str());
    write_file_atomically(d / "summary.csv", summary_csv.str());
    write_file_atomically(d / "best.csv", best_csv.str());
    write_file_atomically(d / "distribution.csv", dist_csv.str());
    write_file_atomically(d / "cooccurrence.csv", cooc_csv.str());
    write_file_atomically(d / "eval.txt", text.str());
  }
  if (table_out) *table_out << text.str();
  if (candidate_errors) r.warnings.push_back(std::to_string(candidate_errors) + " candidate/category evaluations failed");

  std::ostringstream s;
  s << "eval: compared " << cmp.candidates.size() << " candidates with truth '" << (truth->subset.size() > 3 ? std::to_string(truth->subset.size()) + "-rater consensus" : truth->subset.name())
    << "' on " << truth->posts.size() << " posts; truth has at least one label on " << fmt(100.0 * truth_cooc.at_least[0], 2)
    << "% of posts; best kappa per category: " << join(best_names, ", ");
  if (stage.output_dir) s << "; wrote " << stage.output_dir->string();
  s << ".";
  r.summary = s.str();
  return r;
}

// ---- demographics ----

ConfigItems DemographicsStage::items() const {
  std::string fields;
  for (const auto& f : demographic_schema()) fields += f.name + (f.scale == FieldScale::Ordinal ? ":o," : ":n,");
  return {{"fields", fields}};
}

std::vector<fs::path> DemographicsStage::outputs() const {
  return {output_dir / "association.csv", output_dir / "trend.csv", output_dir / "tables.csv"};
}

StageResult run_demographics(const DemographicsStage& stage) {
  StageResult r{"demographics", {}, {}, stage.outputs(), false};
  const auto assignments = read_assignments_file(stage.assignments);
  const auto header = make_header("demographics", stage.items(), stage.seed, stage.inputs());
  std::ostringstream assoc_csv, trend_csv, tables_csv;
  for (auto* os : {&assoc_csv, &trend_csv, &tables_csv}) *os << header_csv_line(header) << '\n';
  CsvWriter aw(assoc_csv), tw(trend_csv), cw(tables_csv);
  aw.row({"field", "category", "rows", "cols", "n", "chi_square", "dof", "p_value", "cramers_v", "n_excluded", "error"});
  tw.row({"field", "category", "n", "rho", "p_value", "error"});
  cw.row({"field", "category", "level", "true", "false"});

  std::set<std::string> workers;
  for (const auto& a : assignments) workers.insert(a.worker_id);
  std::size_t n_tests = 0, n_ok = 0, n_trends = 0;
  std::string strongest;
  double strongest_v = -1.0;
  for (const auto& field : demographic_schema()) {
    for (Category c : kAllCategories) {
      const std::string cat(category_display_name(c));
      ++n_tests;
      try {
        const auto table = contingency_table(assignments, field.name, c);
        for (std::size_t i = 0; i < table.row_labels.size(); ++i) {
          cw.row({field.name, cat, table.row_labels[i], std::to_string(table.counts[i][0]),
                  std::to_string(table.counts[i][1])});
        }
        try {
          const auto res = chi_square_test(table);
          aw.row({field.name, cat, std::to_string(res.rows), std::to_string(res.cols), std::to_string(static_cast<std::uint64_t>(res.n)),
                  fmt(res.chi_square, 6), std::to_string(res.dof), format_number(res.p_value, 6), fmt(res.cramers_v, 6),
                  std::to_string(table.n_excluded), ""});
          ++n_ok;
          if (res.cramers_v > strongest_v) {
            strongest_v = res.cramers_v;
            strongest = field.name + "/" + cat + " (V=" + fmt(res.cramers_v, 3) + ", p=" + format_number(res.p_value, 3) + ")";
          }
        } catch (const Error& e) {
          aw.row({field.name, cat, std::to_string(table.row_labels.size()), "2", "", "", "", "", "",
                  std::to_string(table.n_excluded), e.what()});
        }
      } catch (const Error& e) {
        aw.row({field.name, cat, "", "", "", "", "", "", "", "", e.what()});
      }
      if (field.scale != FieldScale::Ordinal) continue;
      try {
        const auto t = spearman_trend(assignments, field.name, c);
        tw.row({field.name, cat, std::to_string(t.n), format_optional(t.rho), format_optional(t.p_value), t.reason});
        if (t.rho) ++n_trends;
      } catch (const Error& e) {
        tw.row({field.name, cat, "", "", "", e.what()});
      }
    }
  }
  fs::create_directories(stage.output_dir);
  write_file_atomically(stage.output_dir / "association.csv", assoc_csv.str());
  write_file_atomically(stage.output_dir / "trend.csv", trend_csv.str());
  write_file_atomically(stage.output_dir / "tables.csv", tables_csv.str());

  std::ostringstream s;
  s << "demographics: " << assignments.size() << " assignments from " << workers.size() << " workers; " << n_ok << " of "
    << n_tests << " chi-square tests defined";
  if (!strongest.empty()) s << ", strongest association " << strongest;
  s << "; " << n_trends << " ordinal trend correlations defined; wrote " << stage.output_dir.string() << ".";
  r.summary = s.str();
  return r;
}

// ---- report ----

namespace {

std::vector<fs::path> report_inputs(const ReportStage& stage) {
  std::vector<fs::path> csvs;
  if (!fs::is_directory(stage.dir)) throw IngestError("report directory " + stage.dir.string() + " does not exist");
  for (const auto& e : fs::recursive_directory_iterator(stage.dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  return csvs;
}

}  // namespace

StageResult run_report(const ReportStage& stage) {
  const auto out_path = stage.output_path();
  StageResult r{"report", {}, {}, {out_path}, false};
  const auto csvs = report_inputs(stage);
  if (csvs.empty()) throw IngestError("no CSV reports found under " + stage.dir.string());
  const auto header = make_header("report", {{"format", "text"}}, stage.seed, csvs);
  std::ostringstream out;
  out << header_csv_line(header) << '\n';
  std::size_t rows_total = 0;
  for (const auto& p : csvs) {
    std::ifstream in(p, std::ios::binary);
    std::string first;
    std::getline(in, first);
    std::stringstream rest;
    if (!is_header_line(first)) rest << first << '\n';
    rest << in.rdbuf();
    auto table = parse_csv(rest);
    out << "\n== " << fs::relative(p, stage.dir).generic_string() << " ==\n";
    if (is_header_line(first)) out << first << '\n';
    if (table.empty()) continue;
    const auto head = table.front();
    table.erase(table.begin());
    rows_total += table.size();
    render_table(out, head, table);
  }
  ensure_parent(out_path);
  write_file_atomically(out_path, out.str());
  r.summary = "report: rendered " + std::to_string(csvs.size()) + " CSV files (" + std::to_string(rows_total) +
              " rows) from " + stage.dir.string() + " into " + out_path.string() + ".";
  return r;
}

// ---- pipeline ----

void PipelineConfig::validate() const {
  if (corpus.empty()) throw ConfigError("pipeline config needs 'corpus'");
  if (backends.empty()) throw ConfigError("pipeline config needs 'backends'");
  if (subset_sizes.empty()) throw ConfigError("subset_sizes must list at least one size");
  cleaning.validate();
  policy.validate();
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  std::string low;
  for (char c : v) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "true" || low == "1" || low == "yes" || low == "on") return true;
  if (low == "false" || low == "0" || low == "no" || low == "off") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is out of range: '" + v + "'");
  }
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir) {
  PipelineConfig cfg;
  auto resolve = [&base_dir](const std::string& v) {
    fs::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto f = s.find_first_not_of(" \t");
      if (f == std::string::npos) return std::string();
      return s.substr(f, s.find_last_not_of(" \t") - f + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(n) + ": key '" + key + "' repeated");
    if (key == "corpus") cfg.corpus = resolve(value);
    else if (key == "backends") cfg.backends = resolve(value);
    else if (key == "mock_rules") cfg.mock_rules = resolve(value);
    else if (key == "assignments") cfg.assignments = resolve(value);
    else if (key == "groups") cfg.groups = resolve(value);
    else if (key == "workdir") cfg.workdir = resolve(value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "sample_size") cfg.sample_size = parse_uint(key, value);
    else if (key == "subset_sizes") {
      cfg.subset_sizes.clear();
      for (const auto& s : split_list(value)) cfg.subset_sizes.insert(parse_uint(key, s));
    } else if (key == "min_valid_votes") cfg.policy.min_valid_votes = parse_uint(key, value);
    else if (key == "tie_break") cfg.policy.tie_break = tie_break_from_name(value);
    else if (key == "min_words") cfg.cleaning.min_words = parse_uint(key, value);
    else if (key == "lowercase") cfg.cleaning.lowercase = parse_bool(key, value);
    else if (key == "strip_urls") cfg.cleaning.strip_urls = parse_bool(key, value);
    else if (key == "strip_mentions") cfg.cleaning.strip_mentions = parse_bool(key, value);
    else if (key == "strip_hashmarks") cfg.cleaning.strip_hashmarks = parse_bool(key, value);
    else if (key == "drop_hashtag_words") cfg.cleaning.drop_hashtag_words = parse_bool(key, value);
    else if (key == "strip_punctuation") cfg.cleaning.strip_punctuation = parse_bool(key, value);
    else if (key == "dedupe_on") {
      if (value == "raw_text") cfg.cleaning.dedupe_on = DedupeKey::RawText;
      else if (value == "clean_text") cfg.cleaning.dedupe_on = DedupeKey::CleanText;
      else throw ConfigError("dedupe_on must be raw_text or clean_text");
    } else if (key == "rate_limit") cfg.rate_limit = parse_bool(key, value);
    else throw ConfigError("config line " + std::to_string(n) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("cannot open config file " + path.string());
  return parse_pipeline_config(read_file(path), path.parent_path());
}

namespace {

template <typename Stage, typename Run>
StageResult run_or_skip(const std::string& name, const Stage& stage, Run&& run) {
  const auto header = make_header(name, stage.items(), stage.seed, stage.inputs());
  if (outputs_current(stage.outputs(), header)) {
    StageResult r{name, name + ": outputs are current for this config and inputs; skipped.", {}, stage.outputs(), true};
    return r;
  }
  return run(stage);
}

}  // namespace

std::vector<StageResult> run_pipeline(const PipelineConfig& config, const std::function<void(const StageResult&)>& on_stage) {
  config.validate();
  std::vector<StageResult> results;
  auto record = [&](StageResult r) {
    if (on_stage) on_stage(r);
    results.push_back(std::move(r));
  };
  const auto& w = config.workdir;
  const auto reports = config.reports_dir();
  fs::create_directories(w);

  CleanStage clean{config.corpus, w / "clean.jsonl", w / "corpus_stats.csv", config.cleaning, config.seed};
  record(run_or_skip("clean", clean, run_clean));

  fs::path posts = clean.output;
  if (config.sample_size > 0) {
    SampleStage sample{clean.output, w / "sample.jsonl", config.sample_size, config.seed};
    record(run_or_skip("sample", sample, run_sample));
    posts = sample.output;
  }

  AnnotateStage annotate{posts, config.backends, w / "annotations.jsonl", config.mock_rules, false, config.rate_limit,
                         config.seed};
  record(run_or_skip("annotate", annotate, run_annotate));

  ConsensusStage llm_consensus;
  llm_consensus.annotations = annotate.output;
  llm_consensus.output = w / "consensus.jsonl";
  llm_consensus.combination_sizes = config.subset_sizes;
  llm_consensus.policy = config.policy;
  llm_consensus.seed = config.seed;
  record(run_or_skip("consensus", llm_consensus, run_consensus));

  IrrStage llm_irr;
  llm_irr.annotations = annotate.output;
  llm_irr.output_dir = reports / "irr_llm";
  llm_irr.triples = true;
  llm_irr.seed = config.seed;
  record(run_or_skip("irr", llm_irr, run_irr));

  if (config.assignments) {
    ConsensusStage truth;
    truth.assignments = config.assignments;
    truth.output = w / "truth.jsonl";
    truth.all_raters = true;
    truth.policy = config.policy;
    truth.seed = config.seed;
    record(run_or_skip("consensus", truth, run_consensus));

    IrrStage human_irr;
    human_irr.assignments = config.assignments;
    human_irr.output_dir = reports / "irr_human";
    human_irr.groups = config.groups;
    human_irr.seed = config.seed;
    record(run_or_skip("irr", human_irr, run_irr));

    EvalStage eval{llm_consensus.output, truth.output, "", reports / "eval", config.seed};
    record(run_or_skip("eval", eval, [](const EvalStage& s) { return run_eval(s); }));

    DemographicsStage demo{*config.assignments, reports / "demographics", config.seed};
    record(run_or_skip("demographics", demo, run_demographics));
  }

  ReportStage report{reports, std::nullopt, config.seed};
  const auto report_header = make_header("report", {{"format", "text"}}, config.seed, report_inputs(report));
  if (outputs_current({report.output_path()}, report_header)) {
    record(StageResult{"report", "report: outputs are current for this config and inputs; skipped.", {},
                       {report.output_path()}, true});
  } else {
    record(run_report(report));
  }
  return results;
}

}  // namespace crowdlabel
