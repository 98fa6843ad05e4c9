#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gtiler/systems.hpp"

using namespace gtiler;

namespace {
SystemPtr fib() {
  return System::substitution({{'a', "ab"}, {'b', "a"}});
}
Word W(const std::string& d, int arity = 2) { return display_to_word(d, arity); }
}  // namespace

TEST_CASE("odometer cell action does exact carry arithmetic") {
  auto sys = System::odometer(2);
  auto im = sys->act_on_cell(GroupElement::z(1), W("110"));
  REQUIRE(im.image == ClopenSet::cell(sys->tree(), W("001")));
  REQUIRE_FALSE(im.partial);

  // identity
  auto id = sys->act_on_cell(GroupElement::z(0), W("101"));
  REQUIRE(id.image == ClopenSet::cell(sys->tree(), W("101")));

  // overflow wraps: [11] + 1 = [00]
  auto wrap = sys->act_on_cell(GroupElement::z(1), W("11"));
  REQUIRE(wrap.image == ClopenSet::cell(sys->tree(), W("00")));

  // negative steps
  auto back = sys->act_on_cell(GroupElement::z(-1), W("00"));
  REQUIRE(back.image == ClopenSet::cell(sys->tree(), W("11")));
}

TEST_CASE("odometer point action with carries and canonical streams") {
  auto sys = System::odometer(2);
  PointCode zero = sys->free_point();
  auto one = sys->act_on_point(GroupElement::z(1), zero);
  REQUIRE(one);
  REQUIRE(sys->point_word(*one, 4) == W("1000"));

  // all-ones + 1 = all-zeros
  PointCode ones;
  FactorPoint f;
  f.is_digits = true;
  f.digits = DigitStream{Word{}, Word(1, 1)};
  ones.parts = {f};
  auto z = sys->act_on_point(GroupElement::z(1), ones);
  REQUIRE(*z == zero);

  // zero - 1 = all-ones
  auto m = sys->act_on_point(GroupElement::z(-1), zero);
  REQUIRE(*m == ones);

  // inverse round trip on a messy point
  PointCode p;
  FactorPoint g;
  g.is_digits = true;
  g.digits = DigitStream{W("0110"), W("10")};
  g.digits.canonicalize();
  p.parts = {g};
  auto fwd = sys->act_on_point(GroupElement::z(37), p);
  auto back = sys->act_on_point(GroupElement::z(-37), *fwd);
  REQUIRE(*back == p);
}

TEST_CASE("odometer measure is exactly b^-d") {
  auto sys = System::odometer(2);
  REQUIRE(*sys->rational_mass(W("000")) == Rational(1, 8));
  REQUIRE(*sys->rational_mass(W("101")) == Rational(1, 8));
  auto prod = System::product(System::odometer(2), System::odometer(2));
  Word cell;  // depth-2 product cell: symbols pair (0,0),(1,1) -> 0,3
  cell.push_back(0);
  cell.push_back(3);
  REQUIRE(*prod->rational_mass(cell) == Rational(1, 16));
}

TEST_CASE("fibonacci letter frequencies match the golden ratio") {
  auto sys = fib();
  auto f = sys->language()->letter_frequencies();
  double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  REQUIRE(std::abs(f[0] - golden) < 1e-9);
  REQUIRE(std::abs(f[1] - (1.0 - golden)) < 1e-9);

  // depth-1 spiral cell = "letter at position 0"
  REQUIRE(std::abs(sys->mass(Word(1, 0)) - golden) < 1e-9);
  REQUIRE(std::abs(sys->mass(Word(1, 1)) - (1 - golden)) < 1e-9);
}

TEST_CASE("fibonacci shift of a letter cylinder has the letter frequency") {
  auto sys = fib();
  // cylinder "a at position 0"
  auto im = sys->act_on_cell(GroupElement::z(1), Word(1, 0));
  REQUIRE(im.required_depth == 2);
  double total = sys->mass(im.image);
  double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  REQUIRE(std::abs(total - golden) < 1e-9);
  // shifting back recovers the cylinder
  ClopenSet back = ClopenSet::empty(sys->tree());
  for (const Word& w : im.image.cells())
    back = clopen_union(back, sys->act_on_cell(GroupElement::z(-1), w).image);
  REQUIRE(clopen_subset(ClopenSet::cell(sys->tree(), Word(1, 0)), back));
}

TEST_CASE("subshift point action is offset arithmetic with exact inverse") {
  auto sys = fib();
  PointCode p = sys->free_point();
  auto q = sys->act_on_point(GroupElement::z(7), p);
  auto r = sys->act_on_point(GroupElement::z(-7), *q);
  REQUIRE(*r == p);
}

TEST_CASE("action on cells respects composition at small depth") {
  for (auto sys : {System::odometer(2), fib()}) {
    auto atoms = refine_to_depth(ClopenSet::whole(sys->tree()), 3);
    for (const Word& c : atoms) {
      for (long long g : {-2LL, -1LL, 1LL, 2LL}) {
        for (long long h : {-1LL, 1LL}) {
          ClopenSet lhs = ClopenSet::empty(sys->tree());
          for (const Word& w : sys->act_on_cell(GroupElement::z(h), c).image.cells())
            lhs = clopen_union(lhs, sys->act_on_cell(GroupElement::z(g), w).image);
          ClopenSet rhs = sys->act_on_cell(GroupElement::z(g + h), c).image;
          REQUIRE(lhs == rhs);
        }
      }
    }
  }
}

TEST_CASE("generator invariance of the measure on cells") {
  auto sys = fib();
  auto atoms = refine_to_depth(ClopenSet::whole(sys->tree()), 4);
  for (const Word& c : atoms) {
    double mc = sys->mass(c);
    for (long long g : {-1LL, 1LL}) {
      double mi = sys->mass(sys->act_on_cell(GroupElement::z(g), c).image);
      REQUIRE(std::abs(mi - mc) <= 1e-9);
    }
  }
  auto odo = System::odometer(2);
  for (const Word& c : refine_to_depth(ClopenSet::whole(odo->tree()), 4)) {
    auto m1 = *odo->rational_mass(c);
    auto m2 = *odo->rational_mass(
        odo->act_on_cell(GroupElement::z(1), c).image);
    REQUIRE(m1 == m2);
  }
}

TEST_CASE("point and cell actions agree") {
  for (auto sys : {System::odometer(3), fib()}) {
    PointCode p = sys->free_point();
    for (long long k : {-5LL, -1LL, 0LL, 1LL, 9LL}) {
      PointCode q = *sys->act_on_point(GroupElement::z(k), p);
      Word pc = sys->point_word(p, 3);
      auto im = sys->act_on_cell(GroupElement::z(k), pc);
      REQUIRE(sys->point_in(q, im.image));
    }
  }
}

TEST_CASE("partial odometer marks undefined actions") {
  auto inner = System::odometer(2);
  RemovedPoint rp;
  rp.axis = 0;
  rp.direction = 1;
  rp.point = inner->free_point();  // +1 undefined at 000...
  auto sys = System::partial(inner, {rp});

  REQUIRE_FALSE(sys->act_on_point(GroupElement::z(1), inner->free_point()));
  // -1 undefined at the image point 100...
  auto y = *inner->act_on_point(GroupElement::z(1), inner->free_point());
  REQUIRE_FALSE(sys->act_on_point(GroupElement::z(-1), y));
  // other points fine
  auto p = *inner->act_on_point(GroupElement::z(5), inner->free_point());
  REQUIRE(sys->act_on_point(GroupElement::z(1), p));

  // cell action flags clipping on cells containing the removed point
  auto im = sys->act_on_cell(GroupElement::z(1), W("00"));
  REQUIRE(im.partial);
  // the image misses a neighborhood of 100... but covers the rest of +1.[00]
  REQUIRE_FALSE(im.image.is_empty());
  auto clean = sys->act_on_cell(GroupElement::z(1), W("01"));
  REQUIRE_FALSE(clean.partial);
  REQUIRE(clean.image == ClopenSet::cell(sys->tree(), W("11")));

  // measures delegate to the completed system
  REQUIRE(*sys->rational_mass(W("00")) == Rational(1, 4));
}

TEST_CASE("non-primitive substitution rejected at load") {
  REQUIRE_THROWS_AS(System::substitution({{'a', "ab"}, {'b', "b"}}),
                    StructuralError);
}

TEST_CASE("freeness and minimality certificates") {
  auto odo = System::odometer(2);
  REQUIRE(odo->certify_free(8));
  auto r = odo->certify_minimal(3, 100);
  REQUIRE(r);
  REQUIRE(*r == 8);

  auto f = fib();
  REQUIRE(f->certify_free(6));
  auto rf = f->certify_minimal(1, 100);
  REQUIRE(rf.has_value());
}

TEST_CASE("system json round trip") {
  auto j = nlohmann::json{{"kind", "substitution"},
                          {"rules", {{"a", "ab"}, {"b", "a"}}}};
  auto sys = System::from_json(j);
  REQUIRE(sys->kind() == System::Kind::Substitution);

  auto pj = nlohmann::json{{"kind", "partial"},
                           {"base", 2},
                           {"removed",
                            {{{"axis", 0},
                              {"direction", 1},
                              {"point", {{"period", "0"}}}}}}};
  auto ps = System::from_json(pj);
  REQUIRE(ps->is_partial());
  REQUIRE(ps->removed_points().size() == 2);  // inverse closure
  REQUIRE_FALSE(ps->act_on_point(GroupElement::z(1), ps->free_point()));
}

TEST_CASE("spiral mapping round trips") {
  for (int d = 1; d <= 9; ++d) {
    auto [lo, hi] = spiral_window(d);
    REQUIRE(spiral_depth_for(lo, hi) == d);
    for (int i = 0; i < d; ++i) {
      long long p = spiral_position(i);
      REQUIRE(spiral_index(p) == i);
      REQUIRE(p >= lo);
      REQUIRE(p <= hi);
    }
  }
}
