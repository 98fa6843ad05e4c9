#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gtiler/cantor.hpp"
#include "gtiler/rational.hpp"

using namespace gtiler;

namespace {
TreePtr binary() { return full_shift_tree(2); }

ClopenSet cs(const TreePtr& t, std::initializer_list<std::string> words) {
  std::vector<Word> ws;
  for (const auto& d : words) ws.push_back(display_to_word(d, t->arity()));
  return ClopenSet::from_cells(t, std::move(ws));
}
}  // namespace

TEST_CASE("union merges complete sibling families") {
  auto t = binary();
  auto u = clopen_union(cs(t, {"0"}), cs(t, {"1"}));
  REQUIRE(u.is_whole());
}

TEST_CASE("union with empty is identity") {
  auto t = binary();
  auto a = cs(t, {"01", "10"});
  REQUIRE(clopen_union(a, ClopenSet::empty(t)) == a);
}

TEST_CASE("union absorbs refined cells") {
  auto t = binary();
  REQUIRE(clopen_union(cs(t, {"00"}), cs(t, {"0"})) == cs(t, {"0"}));
}

TEST_CASE("intersect subset case") {
  auto t = binary();
  REQUIRE(clopen_intersect(cs(t, {"01"}), cs(t, {"0"})) == cs(t, {"01"}));
}

TEST_CASE("complement of half space") {
  auto t = binary();
  REQUIRE(clopen_complement(cs(t, {"0"})) == cs(t, {"1"}));
  REQUIRE(clopen_complement(ClopenSet::whole(t)).is_empty());
  REQUIRE(clopen_complement(ClopenSet::empty(t)).is_whole());
}

TEST_CASE("refine to fixed depth") {
  auto t = binary();
  auto words = refine_to_depth(cs(t, {"0"}), 2);
  REQUIRE(words == std::vector<Word>{display_to_word("00", 2),
                                     display_to_word("01", 2)});
}

TEST_CASE("partition checks with witnesses") {
  auto t = binary();
  auto ok = is_partition({cs(t, {"0"}), cs(t, {"1"})}, t);
  REQUIRE(ok.ok);

  auto overlap = is_partition({cs(t, {"0"}), cs(t, {"01"})}, t);
  REQUIRE_FALSE(overlap.ok);
  REQUIRE(overlap.overlap_witness.has_value());
  REQUIRE(*overlap.overlap_witness == display_to_word("01", 2));

  auto three = is_partition({cs(t, {"00"}), cs(t, {"01"}), cs(t, {"1"})}, t);
  REQUIRE(three.ok);

  auto gap = is_partition({cs(t, {"00"}), cs(t, {"1"})}, t);
  REQUIRE_FALSE(gap.ok);
  REQUIRE(gap.uncovered_witness.has_value());
}

TEST_CASE("covers_word finds prefix cells") {
  auto t = binary();
  auto a = cs(t, {"00", "101"});
  REQUIRE(a.covers_word(display_to_word("0010", 2)));
  REQUIRE(a.covers_word(display_to_word("101", 2)));
  REQUIRE_FALSE(a.covers_word(display_to_word("01", 2)));
  REQUIRE_FALSE(a.covers_word(display_to_word("1", 2)));
  REQUIRE_FALSE(a.covers_word(display_to_word("10", 2)));
}

TEST_CASE("canonicalize is idempotent and outputs antichains") {
  auto t = binary();
  std::mt19937 rng(20240830);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Word> raw;
    int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      int d = static_cast<int>(rng() % 9);
      Word w;
      for (int k = 0; k < d; ++k) w.push_back(static_cast<char>(rng() % 2));
      raw.push_back(w);
    }
    auto a = ClopenSet::from_cells(t, raw);
    auto again = ClopenSet::from_cells(t, a.cells());
    REQUIRE(a == again);
    // antichain + no complete family
    const auto& cells = a.cells();
    for (size_t i = 0; i + 1 < cells.size(); ++i)
      REQUIRE_FALSE(is_prefix(cells[i], cells[i + 1]));
    for (size_t i = 0; i + 1 < cells.size(); ++i) {
      const Word& x = cells[i];
      const Word& y = cells[i + 1];
      if (!x.empty() && x.size() == y.size() &&
          x.substr(0, x.size() - 1) == y.substr(0, y.size() - 1))
        REQUIRE_FALSE((x.back() == 0 && y.back() == 1));
    }
  }
}

TEST_CASE("De Morgan and double complement, exhaustive at refinement depth") {
  auto t = binary();
  std::mt19937 rng(911);
  auto random_set = [&]() {
    std::vector<Word> raw;
    int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      int d = 1 + static_cast<int>(rng() % 8);
      Word w;
      for (int k = 0; k < d; ++k) w.push_back(static_cast<char>(rng() % 2));
      raw.push_back(w);
    }
    return ClopenSet::from_cells(t, raw);
  };
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_set();
    auto b = random_set();
    REQUIRE(clopen_complement(clopen_complement(a)) == a);
    auto lhs = clopen_complement(clopen_union(a, b));
    auto rhs = clopen_intersect(clopen_complement(a), clopen_complement(b));
    REQUIRE(lhs == rhs);
    auto lhs2 = clopen_complement(clopen_intersect(a, b));
    auto rhs2 = clopen_union(clopen_complement(a), clopen_complement(b));
    REQUIRE(lhs2 == rhs2);

    // exhaustive cell comparison at common refinement depth
    int d = std::max({a.max_depth(), b.max_depth(), 1});
    auto atoms = refine_to_depth(ClopenSet::whole(t), d);
    for (const Word& w : atoms) {
      bool in_a = a.covers_word(w);
      bool in_b = b.covers_word(w);
      REQUIRE(clopen_union(a, b).covers_word(w) == (in_a || in_b));
      REQUIRE(clopen_intersect(a, b).covers_word(w) == (in_a && in_b));
      REQUIRE(clopen_complement(a).covers_word(w) == !in_a);
    }
  }
}

TEST_CASE("refinement walk visits decided atoms with exact signatures") {
  auto t = binary();
  auto a = cs(t, {"0"});
  auto b = cs(t, {"01", "11"});
  std::vector<std::pair<Word, std::vector<bool>>> atoms;
  refinement_walk(t, {&a, &b}, [&](const Word& w, const std::vector<bool>& s) {
    atoms.emplace_back(w, s);
  });
  // expected atoms: 00 (a only), 01 (both), 10 (neither), 11 (b only)
  REQUIRE(atoms.size() == 4);
  std::map<std::string, std::vector<bool>> got;
  for (auto& [w, s] : atoms) got[word_to_display(w, 2)] = s;
  REQUIRE(got["00"] == std::vector<bool>{true, false});
  REQUIRE(got["01"] == std::vector<bool>{true, true});
  REQUIRE(got["10"] == std::vector<bool>{false, false});
  REQUIRE(got["11"] == std::vector<bool>{false, true});
}

TEST_CASE("depth cap raises capacity error") {
  auto t = std::make_shared<PartitionTree>(
      2, "capped", [](const Word&) { return true; }, 4, 4);
  auto a = ClopenSet::cell(t, display_to_word("0101", 2));
  REQUIRE_THROWS_AS(refine_to_depth(a, 6), CapacityError);
}

TEST_CASE("subshift-style admissibility merges only admissible families") {
  // forbid the word "11" (golden mean shift, prefix semantics)
  auto t = std::make_shared<PartitionTree>(
      2, "golden-prefix",
      [](const Word& w) {
        for (size_t i = 0; i + 1 < w.size(); ++i)
          if (w[i] == 1 && w[i + 1] == 1) return false;
        return true;
      },
      8);
  // {10} is the full admissible family below "1": {11} is inadmissible
  auto a = cs(t, {"10"});
  REQUIRE(a == cs(t, {"1"}));
  auto p = is_partition({cs(t, {"0"}), cs(t, {"10"})}, t);
  REQUIRE(p.ok);
}

TEST_CASE("rational arithmetic is exact") {
  Rational a(1, 3), b(1, 6);
  REQUIRE(a + b == Rational(1, 2));
  REQUIRE(a - b == Rational(1, 6));
  REQUIRE(a * b == Rational(1, 18));
  REQUIRE(a / b == Rational(2));
  REQUIRE(Rational(-4, -8) == Rational(1, 2));
  REQUIRE(Rational(2, -4) == Rational(-1, 2));
  REQUIRE(Rational(1, 3) < Rational(1, 2));
}
