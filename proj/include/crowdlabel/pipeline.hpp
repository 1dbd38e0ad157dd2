#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crowdlabel/consensus.hpp"
#include "crowdlabel/corpus.hpp"
#include "crowdlabel/io.hpp"
#include "crowdlabel/labels.hpp"

namespace crowdlabel {

namespace fs = std::filesystem;

struct StageResult {
  std::string stage;
  std::string summary;  // one paragraph, no trailing newline
  std::vector<std::string> warnings;
  std::vector<fs::path> outputs;
  bool skipped = false;
};

using ConfigItems = std::vector<std::pair<std::string, std::string>>;

// Hex digest over "key=value\n" lines in the given order.
std::string config_hash(const ConfigItems& items);
OutputHeader make_header(const std::string& stage, const ConfigItems& items, std::uint64_t seed,
                         const std::vector<fs::path>& inputs);
// True when every path exists and starts with a header equal to `header`.
bool outputs_current(const std::vector<fs::path>& outputs, const OutputHeader& header);

struct CleanStage {
  fs::path input;
  fs::path output;
  std::optional<fs::path> stats;  // CSV of corpus statistics
  CleaningConfig cleaning;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const { return {input}; }
  std::vector<fs::path> outputs() const;
};
StageResult run_clean(const CleanStage& stage);

struct SampleStage {
  fs::path input;
  fs::path output;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const { return {input}; }
  std::vector<fs::path> outputs() const { return {output}; }
};
StageResult run_sample(const SampleStage& stage);

struct AnnotateStage {
  fs::path posts;
  fs::path backends;
  fs::path output;
  std::optional<fs::path> mock_rules;  // offline keyword backends instead of HTTP
  bool resume = false;
  bool rate_limit = true;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const;
  std::vector<fs::path> outputs() const { return {output}; }
};
StageResult run_annotate(const AnnotateStage& stage);

struct ConsensusStage {
  // Exactly one of annotations / assignments.
  std::optional<fs::path> annotations;
  std::optional<fs::path> assignments;
  fs::path output;
  std::vector<std::vector<std::string>> subsets;  // explicit subsets
  std::set<std::size_t> combination_sizes;        // all combinations of these sizes
  bool all_raters = false;                        // one subset holding every rater
  std::optional<AnnotatorKind> kind;              // restrict the rater pool
  VotePolicy policy;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const;
  std::vector<fs::path> outputs() const { return {output}; }
};
StageResult run_consensus(const ConsensusStage& stage);

struct IrrStage {
  std::optional<fs::path> annotations;
  std::optional<fs::path> assignments;
  fs::path output_dir;
  std::vector<std::string> raters;  // empty = all (after the kind filter)
  std::optional<AnnotatorKind> kind;
  bool pairs = true;
  bool triples = false;
  std::optional<fs::path> groups;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const;
  std::vector<fs::path> outputs() const;
};
StageResult run_irr(const IrrStage& stage);

struct EvalStage {
  fs::path pred;   // consensus file, or an annotations file (one row per annotator)
  fs::path truth;  // consensus file
  std::string truth_subset;  // which subset of the truth file; empty = the first
  std::optional<fs::path> output_dir;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const { return {pred, truth}; }
  std::vector<fs::path> outputs() const;
};
// Without an output directory the table goes to `table_out` only.
StageResult run_eval(const EvalStage& stage, std::ostream* table_out = nullptr);

struct DemographicsStage {
  fs::path assignments;
  fs::path output_dir;
  std::uint64_t seed = 0;

  ConfigItems items() const;
  std::vector<fs::path> inputs() const { return {assignments}; }
  std::vector<fs::path> outputs() const;
};
StageResult run_demographics(const DemographicsStage& stage);

struct ReportStage {
  fs::path dir;
  std::optional<fs::path> output;  // default: <dir>/report.txt
  std::uint64_t seed = 0;

  fs::path output_path() const { return output ? *output : dir / "report.txt"; }
};
// Renders every CSV under `dir` (sorted by path) as an aligned text table.
StageResult run_report(const ReportStage& stage);

// Flat "key = value" configuration for the whole pipeline. Lines starting
// with '#' are comments.
struct PipelineConfig {
  fs::path corpus;
  fs::path backends;
  std::optional<fs::path> mock_rules;
  std::optional<fs::path> assignments;
  std::optional<fs::path> groups;
  fs::path workdir = "crowdlabel-out";
  CleaningConfig cleaning;
  VotePolicy policy;
  std::set<std::size_t> subset_sizes{1, 3, 5};
  std::size_t sample_size = 0;  // 0 = annotate every cleaned post
  std::uint64_t seed = 0;
  bool rate_limit = true;

  fs::path reports_dir() const { return workdir / "reports"; }
  void validate() const;
};
PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir);
PipelineConfig load_pipeline_config(const fs::path& path);

// Runs every stage in order, skipping stages whose outputs already carry the
// expected header, and stops at the first stage error (which propagates).
// Each stage result is passed to `on_stage` as soon as it is known.
std::vector<StageResult> run_pipeline(const PipelineConfig& config,
                                      const std::function<void(const StageResult&)>& on_stage = {});

std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace crowdlabel
