#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "crowdlabel/consensus.hpp"
#include "support.hpp"

using namespace crowdlabel;
using Votes = std::vector<std::optional<bool>>;

namespace {

const std::optional<bool> T = true, F = false, M = std::nullopt;

std::vector<std::string> names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("a" + std::to_string(i));
  return out;
}

// All vote lists of the given length over {T, F, missing}.
std::vector<Votes> all_vote_lists(std::size_t len) {
  std::vector<Votes> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < len; ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    Votes v;
    std::size_t c = code;
    for (std::size_t i = 0; i < len; ++i, c /= 3) v.push_back(c % 3 == 0 ? T : c % 3 == 1 ? F : M);
    out.push_back(v);
  }
  return out;
}

AnnotationSet set_from_rows(const std::vector<std::vector<LabelVector>>& rows, const std::vector<std::string>& raters) {
  AnnotationSet set;
  for (const auto& r : raters) set.add_annotator(r, AnnotatorKind::Llm);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    const auto id = "post" + std::to_string(p);
    set.add_post(id);
    for (std::size_t a = 0; a < raters.size(); ++a) set.set(id, raters[a], Cell{rows[p][a], 1, std::nullopt});
  }
  return set;
}

}  // namespace

TEST_CASE("majority_vote examples") {
  CHECK(majority_vote(Votes{T, T, F}) == true);
  CHECK_FALSE(majority_vote(Votes{T, F, M}).has_value());
  VotePolicy quorum;
  quorum.min_valid_votes = 2;
  CHECK_FALSE(majority_vote(Votes{M, M, T}, quorum).has_value());
  VotePolicy negative;
  negative.tie_break = TieBreak::Negative;
  CHECK(majority_vote(Votes{T, F, M}, negative) == false);
  CHECK(majority_vote(Votes{F}) == false);
  CHECK_THROWS(majority_vote(Votes{}));
  VotePolicy zero;
  zero.min_valid_votes = 0;
  CHECK_THROWS(zero.validate());
}

TEST_CASE("majority_vote matches the reference on every short vote list") {
  for (std::size_t len = 1; len <= 5; ++len) {
    for (const auto& votes : all_vote_lists(len)) {
      for (std::size_t q = 1; q <= 3; ++q) {
        for (bool neg : {false, true}) {
          VotePolicy p{q, neg ? TieBreak::Negative : TieBreak::MarkMissing};
          CHECK(majority_vote(votes, p) == testsupport::ref_majority(votes, q, neg));
        }
      }
    }
  }
}

TEST_CASE("enumerate_subsets") {
  const auto six = names(6);
  CHECK(enumerate_subsets(six, {1, 3, 5}).size() == 32);
  CHECK(enumerate_subsets(six, {3}).size() == 20);
  CHECK(enumerate_subsets(six, {}).empty());
  CHECK_THROWS(enumerate_subsets(six, {7}));
  const auto s = enumerate_subsets({"x", "y", "z"}, {2});
  REQUIRE(s.size() == 3);
  CHECK(s[0].name() == "x+y");
  CHECK(s[1].name() == "x+z");
  CHECK(s[2].name() == "y+z");
}

TEST_CASE("enumerate_subsets equals a power-set filter") {
  for (int n = 1; n <= 8; ++n) {
    const auto ids = names(n);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::set<int> sizes_i;
      std::set<std::size_t> sizes;
      for (int k = 1; k <= n; ++k) {
        if (mask & (1u << (k - 1))) {
          sizes_i.insert(k);
          sizes.insert(static_cast<std::size_t>(k));
        }
      }
      const auto got = enumerate_subsets(ids, sizes);
      const auto want = testsupport::ref_subsets(n, sizes_i);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        std::vector<std::string> members;
        for (int idx : want[i]) members.push_back(ids[static_cast<std::size_t>(idx)]);
        CHECK(got[i].annotator_ids() == members);
      }
    }
  }
}

TEST_CASE("subset names round trip") {
  RaterSubset s({"gpt-4o", "gemini-2.0-flash", "llama-3.1-8b"});
  CHECK(s.name() == "gpt-4o+gemini-2.0-flash+llama-3.1-8b");
  CHECK(RaterSubset::from_name(s.name()) == s);
  CHECK(s.size() == 3);
  CHECK_THROWS(RaterSubset({"a", "a"}));
}

TEST_CASE("consensus_labels") {
  SUBCASE("one annotator reproduces its labels") {
    LabelVector a = LabelVector::all(false), b = LabelVector::all(true);
    a[Category::Satire] = std::nullopt;
    const auto set = set_from_rows({{a, b}, {b, a}}, {"x", "y"});
    const auto c = consensus_labels(set, RaterSubset({"x"}));
    REQUIRE(c.posts.size() == 2);
    CHECK(c.labels[0] == a);
    CHECK(c.labels[1] == b);
  }
  SUBCASE("unanimous raters") {
    const auto v = LabelVector::from_bools({true, false, true, false, false});
    const auto set = set_from_rows({{v, v, v}}, {"x", "y", "z"});
    CHECK(consensus_labels(set, RaterSubset({"x", "y", "z"})).labels[0] == v);
  }
  SUBCASE("four posts with one dissent each") {
    const auto base = std::vector<std::array<bool, 5>>{
        {true, false, false, true, false}, {false, true, true, false, false},
        {true, true, false, false, true}, {false, false, false, false, false}};
    std::vector<std::vector<LabelVector>> rows;
    for (std::size_t p = 0; p < 4; ++p) {
      std::vector<LabelVector> row;
      for (std::size_t a = 0; a < 3; ++a) {
        auto bits = base[p];
        if (a == p % 3) bits[p] = !bits[p];  // one dissenting cell per post
        row.push_back(LabelVector::from_bools(bits));
      }
      rows.push_back(row);
    }
    const auto set = set_from_rows(rows, {"x", "y", "z"});
    const auto c = consensus_labels(set, RaterSubset({"x", "y", "z"}));
    for (std::size_t p = 0; p < 4; ++p) {
      // Hand count: for each category tally the three cells directly.
      for (Category cat : kAllCategories) {
        int t = 0;
        for (const auto& cell : rows[p]) t += *cell[cat] ? 1 : 0;
        CHECK(c.labels[p][cat] == (t >= 2));
      }
      CHECK(c.labels[p] == LabelVector::from_bools(base[p]));
    }
  }
  SUBCASE("unknown annotator is named") {
    const auto set = set_from_rows({{LabelVector::all(true)}}, {"x"});
    try {
      consensus_labels(set, RaterSubset({"x", "ghost"}));
      FAIL("expected an error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }
  SUBCASE("posts without any cell for the subset stay missing") {
    AnnotationSet set;
    set.add_post("p1");
    set.add_post("p2");
    set.add_annotator("x", AnnotatorKind::Llm);
    set.set("p1", "x", Cell{LabelVector::all(true), 1, std::nullopt});
    const auto c = consensus_labels(set, RaterSubset({"x"}));
    REQUIRE(c.posts.size() == 2);
    CHECK(c.labels[1].all_missing());
  }
}

TEST_CASE("majority_vote properties") {
  testsupport::Gen g(17);
  for (int round = 0; round < 3000; ++round) {
    Votes v;
    const int n = g.range(1, 9);
    for (int i = 0; i < n; ++i) v.push_back(g.coin(0.2) ? M : std::optional<bool>(g.coin()));
    VotePolicy p{static_cast<std::size_t>(g.range(1, 3)), g.coin() ? TieBreak::Negative : TieBreak::MarkMissing};
    const auto base = majority_vote(v, p);

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), g.engine());
    CHECK(majority_vote(shuffled, p) == base);

    if (base) {
      auto more = v;
      more.push_back(base);
      CHECK(majority_vote(more, p) == base);
    }

    Votes full;
    for (int i = 0; i < (n | 1); ++i) full.push_back(g.coin());
    VotePolicy q{std::min<std::size_t>(p.min_valid_votes, full.size()), TieBreak::MarkMissing};
    CHECK(majority_vote(full, q).has_value());
  }
}

TEST_CASE("consensus file round trip") {
  const auto v = LabelVector::from_bools({true, false, true, false, false});
  auto w = v;
  w[Category::HateSpeech] = std::nullopt;
  const auto set = set_from_rows({{v, w}, {w, w}}, {"x", "y"});
  std::vector<ConsensusLabels> cons = {consensus_labels(set, RaterSubset({"x"})),
                                       consensus_labels(set, RaterSubset({"x", "y"}))};
  std::ostringstream out;
  write_consensus(out, cons, OutputHeader{"consensus", "abc", 5, "def"});
  std::istringstream in(out.str());
  const auto back = read_consensus(in);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].subset == cons[i].subset);
    CHECK(back[i].posts == cons[i].posts);
    CHECK(back[i].labels == cons[i].labels);
  }
  CHECK(tie_break_from_name(tie_break_name(TieBreak::Negative)) == TieBreak::Negative);
}
