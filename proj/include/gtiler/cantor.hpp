#pragma once

// Depth-indexed symbolic model of a Cantor space: a partition tree whose
// admissible finite words are cylinder cells, and the Boolean algebra of
// clopen subsets represented as canonical antichains of cells.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtiler {

using Symbol = unsigned char;
using Word = std::string;  // raw symbol bytes, not display characters

struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& m) : std::runtime_error(m) {}
};
struct CapacityError : std::runtime_error {
  explicit CapacityError(const std::string& m) : std::runtime_error(m) {}
};
struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& m) : std::runtime_error(m) {}
};

inline int env_depth_cap(int fallback) {
  if (const char* s = std::getenv("GROUPOID_TILER_DEPTH_CAP")) {
    int v = std::atoi(s);
    if (v > 0) return v;
  }
  return fallback;
}

/// Cell tree of a Cantor space: every admissible word has `arity` candidate
/// children, filtered by an admissibility predicate (language membership for
/// subshifts). Immutable; shared by all values over the same space.
class PartitionTree {
 public:
  using AdmissiblePredicate = std::function<bool(const Word&)>;

  PartitionTree(int arity, std::string name, AdmissiblePredicate admissible,
                int max_depth_hint = 16, int depth_cap = 0)
      : arity_(arity),
        name_(std::move(name)),
        admissible_(std::move(admissible)),
        max_depth_hint_(max_depth_hint),
        depth_cap_(depth_cap > 0 ? depth_cap : env_depth_cap(64)) {
    if (arity_ < 1) throw StructuralError("partition tree arity must be >= 1");
    if (!is_admissible(Word{}))
      throw StructuralError("empty word must be admissible");
  }

  int arity() const { return arity_; }
  const std::string& name() const { return name_; }
  int max_depth_hint() const { return max_depth_hint_; }
  int depth_cap() const { return depth_cap_; }

  bool is_admissible(const Word& w) const {
    if (static_cast<int>(w.size()) > depth_cap_)
      throw CapacityError("word depth " + std::to_string(w.size()) +
                          " exceeds depth cap " + std::to_string(depth_cap_));
    for (char c : w)
      if (static_cast<Symbol>(c) >= arity_) return false;
    return admissible_(w);
  }

  std::vector<Symbol> admissible_children(const Word& w) const {
    std::vector<Symbol> out;
    Word child = w;
    child.push_back(0);
    for (int s = 0; s < arity_; ++s) {
      child.back() = static_cast<char>(s);
      if (is_admissible(child)) out.push_back(static_cast<Symbol>(s));
    }
    return out;
  }

  // No-dead-end check up to a depth: every admissible word has an admissible
  // child.
  bool no_dead_ends(int depth, Word* witness = nullptr) const {
    Word w;
    return no_dead_ends_rec(w, depth, witness);
  }

 private:
  bool no_dead_ends_rec(Word& w, int depth, Word* witness) const {
    if (static_cast<int>(w.size()) >= depth) return true;
    auto kids = admissible_children(w);
    if (kids.empty()) {
      if (witness) *witness = w;
      return false;
    }
    for (Symbol s : kids) {
      w.push_back(static_cast<char>(s));
      bool ok = no_dead_ends_rec(w, depth, witness);
      w.pop_back();
      if (!ok) return false;
    }
    return true;
  }

  int arity_;
  std::string name_;
  AdmissiblePredicate admissible_;
  int max_depth_hint_;
  int depth_cap_;
};

using TreePtr = std::shared_ptr<const PartitionTree>;

inline TreePtr full_shift_tree(int arity, int depth_cap = 0) {
  return std::make_shared<PartitionTree>(
      arity, "full-" + std::to_string(arity),
      [](const Word&) { return true; }, 16, depth_cap);
}

inline bool is_prefix(const Word& p, const Word& w) {
  return p.size() <= w.size() && std::equal(p.begin(), p.end(), w.begin());
}

inline bool same_tree(const TreePtr& a, const TreePtr& b) {
  return a == b || (a && b && a->name() == b->name() && a->arity() == b->arity());
}

struct Cell {
  Word word;
  int depth() const { return static_cast<int>(word.size()); }
  bool operator==(const Cell& o) const { return word == o.word; }
  auto operator<=>(const Cell& o) const { return word <=> o.word; }
};

// Display helper: symbols as digits for small arities, letters otherwise.
inline std::string word_to_display(const Word& w, int arity) {
  std::string out;
  out.reserve(w.size());
  for (char c : w) {
    Symbol s = static_cast<Symbol>(c);
    out.push_back(arity <= 10 ? static_cast<char>('0' + s)
                              : static_cast<char>('a' + s));
  }
  return out;
}

inline Word display_to_word(const std::string& d, int arity) {
  Word out;
  out.reserve(d.size());
  for (char c : d) {
    int s;
    if (c >= '0' && c <= '9')
      s = c - '0';
    else if (c >= 'a' && c <= 'z')
      s = arity <= 10 ? -1 : c - 'a';
    else
      s = -1;
    if (s < 0 || s >= arity)
      throw StructuralError(std::string("bad symbol '") + c + "' in word");
    out.push_back(static_cast<char>(s));
  }
  return out;
}

namespace detail {

// Remove cells with a proper prefix present, then merge complete admissible
// sibling families bottom-up. Input is sorted; output is the canonical
// minimal antichain.
inline void canonicalize_words(const PartitionTree& tree,
                               std::vector<Word>& cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  // absorption: lexicographic order puts a prefix right before its extensions
  std::vector<Word> kept;
  kept.reserve(cells.size());
  for (const Word& w : cells) {
    if (!kept.empty() && is_prefix(kept.back(), w)) continue;
    kept.push_back(w);
  }
  cells.swap(kept);

  // sibling merge, deepest level first
  bool merged = true;
  while (merged) {
    merged = false;
    if (cells.empty()) break;
    size_t max_d = 0;
    for (const Word& w : cells) max_d = std::max(max_d, w.size());
    for (size_t d = max_d; d >= 1; --d) {
      // group cells of depth d by parent
      std::map<Word, std::vector<Symbol>> families;
      for (const Word& w : cells)
        if (w.size() == d)
          families[w.substr(0, d - 1)].push_back(
              static_cast<Symbol>(w.back()));
      std::vector<Word> to_merge;
      for (auto& [parent, present] : families) {
        auto need = tree.admissible_children(parent);
        if (need.empty()) continue;
        std::sort(present.begin(), present.end());
        if (present == need) to_merge.push_back(parent);
      }
      if (to_merge.empty()) continue;
      std::vector<Word> next;
      next.reserve(cells.size());
      std::set<Word> merge_set(to_merge.begin(), to_merge.end());
      for (const Word& w : cells) {
        if (w.size() == d && merge_set.count(w.substr(0, d - 1))) continue;
        next.push_back(w);
      }
      for (const Word& p : to_merge) next.push_back(p);
      std::sort(next.begin(), next.end());
      cells.swap(next);
      merged = true;
    }
  }
}

}  // namespace detail

/// Clopen subset of the Cantor space: a canonical minimal antichain of cells,
/// sorted lexicographically. Canonical form makes equality structural.
class ClopenSet {
 public:
  ClopenSet() = default;

  static ClopenSet empty(TreePtr tree) { return ClopenSet(std::move(tree), {}); }

  static ClopenSet whole(TreePtr tree) {
    return ClopenSet(std::move(tree), {Word{}});
  }

  static ClopenSet from_cells(TreePtr tree, std::vector<Word> cells) {
    for (const Word& w : cells)
      if (!tree->is_admissible(w))
        throw StructuralError("inadmissible cell word '" +
                              word_to_display(w, tree->arity()) + "'");
    detail::canonicalize_words(*tree, cells);
    return ClopenSet(std::move(tree), std::move(cells));
  }

  static ClopenSet cell(TreePtr tree, Word w) {
    return from_cells(std::move(tree), {std::move(w)});
  }

  const TreePtr& tree() const { return tree_; }
  const std::vector<Word>& cells() const { return cells_; }
  bool is_empty() const { return cells_.empty(); }
  bool is_whole() const { return cells_.size() == 1 && cells_[0].empty(); }
  int max_depth() const {
    size_t d = 0;
    for (const Word& w : cells_) d = std::max(d, w.size());
    return static_cast<int>(d);
  }
  size_t cell_count() const { return cells_.size(); }

  /// True iff the point/cell named by `w` lies inside this set (some cell of
  /// the set is a prefix of `w`). In a sorted antichain the only candidate
  /// prefix is the predecessor of `w`.
  bool covers_word(const Word& w) const {
    auto it = std::upper_bound(cells_.begin(), cells_.end(), w);
    if (it == cells_.begin()) return false;
    --it;
    return is_prefix(*it, w);
  }

  bool operator==(const ClopenSet& o) const { return cells_ == o.cells_; }
  bool operator!=(const ClopenSet& o) const { return !(*this == o); }

 private:
  ClopenSet(TreePtr tree, std::vector<Word> cells)
      : tree_(std::move(tree)), cells_(std::move(cells)) {}

  TreePtr tree_;
  std::vector<Word> cells_;

  friend ClopenSet clopen_union(const ClopenSet&, const ClopenSet&);
  friend ClopenSet clopen_intersect(const ClopenSet&, const ClopenSet&);
  friend ClopenSet clopen_complement(const ClopenSet&);
};

inline void require_same_tree(const ClopenSet& a, const ClopenSet& b) {
  if (!same_tree(a.tree(), b.tree()))
    throw StructuralError("clopen sets over different partition trees");
}

inline ClopenSet clopen_union(const ClopenSet& a, const ClopenSet& b) {
  require_same_tree(a, b);
  std::vector<Word> cells = a.cells_;
  cells.insert(cells.end(), b.cells_.begin(), b.cells_.end());
  return ClopenSet::from_cells(a.tree_ ? a.tree_ : b.tree_, std::move(cells));
}

inline ClopenSet clopen_intersect(const ClopenSet& a, const ClopenSet& b) {
  require_same_tree(a, b);
  const auto& A = a.cells_;
  const auto& B = b.cells_;
  std::vector<Word> out;
  size_t i = 0, j = 0;
  while (i < A.size() && j < B.size()) {
    if (is_prefix(A[i], B[j])) {
      out.push_back(B[j]);
      ++j;
    } else if (is_prefix(B[j], A[i])) {
      out.push_back(A[i]);
      ++i;
    } else if (A[i] < B[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return ClopenSet::from_cells(a.tree_, std::move(out));
}

namespace detail {
inline void complement_rec(const PartitionTree& tree, const Word& w,
                           const std::vector<Word>& cells, size_t lo,
                           size_t hi, std::vector<Word>& out) {
  // cells[lo,hi) are exactly the set's cells having w as a prefix
  if (lo < hi && cells[lo] == w) return;  // w fully covered
  if (lo == hi) {
    out.push_back(w);  // w fully outside
    return;
  }
  Word child = w;
  child.push_back(0);
  for (Symbol s : tree.admissible_children(w)) {
    child.back() = static_cast<char>(s);
    // narrow [lo,hi) to cells prefixed by child (contiguous in sorted order)
    Word upper = child;
    upper.push_back(static_cast<char>(tree.arity()));  // past-the-end sentinel
    auto base = cells.begin();
    size_t clo = static_cast<size_t>(
        std::lower_bound(base + static_cast<long>(lo), base + static_cast<long>(hi), child) - base);
    size_t chi = static_cast<size_t>(
        std::lower_bound(base + static_cast<long>(clo), base + static_cast<long>(hi), upper) - base);
    complement_rec(tree, child, cells, clo, chi, out);
  }
}
}  // namespace detail

inline ClopenSet clopen_complement(const ClopenSet& a) {
  std::vector<Word> out;
  detail::complement_rec(*a.tree(), Word{}, a.cells_, 0, a.cells_.size(), out);
  return ClopenSet::from_cells(a.tree_, std::move(out));
}

inline ClopenSet clopen_difference(const ClopenSet& a, const ClopenSet& b) {
  return clopen_intersect(a, clopen_complement(b));
}

inline bool clopen_disjoint(const ClopenSet& a, const ClopenSet& b) {
  return clopen_intersect(a, b).is_empty();
}

inline bool clopen_subset(const ClopenSet& a, const ClopenSet& b) {
  return clopen_intersect(a, b) == a;
}

/// The same set re-expressed with every cell at depth exactly `d`.
/// Non-canonical by construction; internal plumbing for validators.
inline std::vector<Word> refine_to_depth(const ClopenSet& a, int d) {
  if (d < a.max_depth())
    throw PreconditionError("refinement depth below max cell depth");
  if (d > a.tree()->depth_cap())
    throw CapacityError("refinement depth exceeds depth cap");
  std::vector<Word> out;
  std::function<void(const Word&)> expand = [&](const Word& w) {
    if (static_cast<int>(w.size()) == d) {
      out.push_back(w);
      return;
    }
    Word child = w;
    child.push_back(0);
    for (Symbol s : a.tree()->admissible_children(w)) {
      child.back() = static_cast<char>(s);
      expand(child);
    }
  };
  for (const Word& w : a.cells()) expand(w);
  std::sort(out.begin(), out.end());
  return out;
}

struct PartitionCheck {
  bool ok = false;
  std::optional<Word> overlap_witness;    // a cell contained in two parts
  std::optional<Word> uncovered_witness;  // a cell missed by every part
};

/// Exact disjointness + covering check for a family of clopen sets.
inline PartitionCheck is_partition(const std::vector<ClopenSet>& parts,
                                   const TreePtr& tree) {
  PartitionCheck res;
  for (size_t i = 0; i < parts.size(); ++i)
    for (size_t j = i + 1; j < parts.size(); ++j) {
      ClopenSet inter = clopen_intersect(parts[i], parts[j]);
      if (!inter.is_empty()) {
        res.overlap_witness = inter.cells().front();
        return res;
      }
    }
  ClopenSet uni = ClopenSet::empty(tree);
  for (const auto& p : parts) uni = clopen_union(uni, p);
  if (!uni.is_whole()) {
    ClopenSet gap = clopen_complement(uni);
    if (!gap.is_empty()) {
      res.uncovered_witness = gap.cells().front();
      return res;
    }
  }
  res.ok = true;
  return res;
}

/// Visit the atoms of the common refinement of `sets`: minimal admissible
/// words on which membership in every set is decided. The visitor receives
/// the atom word and the membership signature (one flag per set). Exact.
inline void refinement_walk(
    const TreePtr& tree, const std::vector<const ClopenSet*>& sets,
    const std::function<void(const Word&, const std::vector<bool>&)>& visit) {
  struct Range {
    size_t lo, hi;
    bool covered;
  };
  std::vector<Range> ranges(sets.size());
  for (size_t k = 0; k < sets.size(); ++k)
    ranges[k] = {0, sets[k]->cells().size(), false};

  std::function<void(const Word&, const std::vector<Range>&)> rec =
      [&](const Word& w, const std::vector<Range>& rs) {
        bool all_decided = true;
        for (size_t k = 0; k < rs.size(); ++k)
          if (!rs[k].covered && rs[k].lo < rs[k].hi) {
            all_decided = false;
            break;
          }
        if (all_decided) {
          std::vector<bool> sig(rs.size());
          for (size_t k = 0; k < rs.size(); ++k) sig[k] = rs[k].covered;
          visit(w, sig);
          return;
        }
        Word child = w;
        child.push_back(0);
        for (Symbol s : tree->admissible_children(w)) {
          child.back() = static_cast<char>(s);
          std::vector<Range> next(rs.size());
          for (size_t k = 0; k < rs.size(); ++k) {
            if (rs[k].covered) {
              next[k] = {0, 0, true};
              continue;
            }
            const auto& cells = sets[k]->cells();
            Word upper = child;
            upper.push_back(static_cast<char>(tree->arity()));
            auto base = cells.begin();
            size_t clo = static_cast<size_t>(
                std::lower_bound(base + static_cast<long>(rs[k].lo),
                                 base + static_cast<long>(rs[k].hi), child) -
                base);
            size_t chi = static_cast<size_t>(
                std::lower_bound(base + static_cast<long>(clo),
                                 base + static_cast<long>(rs[k].hi), upper) -
                base);
            bool cov = clo < chi && cells[clo] == child;
            next[k] = {clo, chi, cov};
          }
          rec(child, next);
        }
      };
  rec(Word{}, ranges);
}

}  // namespace gtiler
