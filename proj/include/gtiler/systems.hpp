#pragma once

// Concrete generators of ample groupoids over Cantor spaces: odometers,
// primitive substitution subshifts, products of two Z-systems, and partial
// Z-actions with finitely many removed points. Supported acting groups are
// Z and Z^2, so group elements are integer vectors with exact arithmetic.
//
// Subshift cells are centered windows encoded in spiral index order
// (positions 0, -1, +1, -2, +2, ...), which keeps every tree a constant-arity
// prefix tree while shifts only grow the required depth by a bounded step.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtiler/cantor.hpp"
#include "gtiler/rational.hpp"
#include "json.hpp"

namespace gtiler {

// ---------------------------------------------------------------------------
// Group elements of Z or Z^2 in the generator basis {±e_k}.

struct GroupElement {
  std::vector<long long> v;

  GroupElement() = default;
  explicit GroupElement(std::vector<long long> coords) : v(std::move(coords)) {}
  static GroupElement zero(int rank) {
    return GroupElement(std::vector<long long>(rank, 0));
  }
  static GroupElement z(long long k) { return GroupElement({k}); }
  static GroupElement z2(long long a, long long b) { return GroupElement({a, b}); }

  int rank() const { return static_cast<int>(v.size()); }
  bool is_zero() const {
    for (long long x : v)
      if (x != 0) return false;
    return true;
  }
  long long word_length() const {
    long long s = 0;
    for (long long x : v) s += x < 0 ? -x : x;
    return s;
  }
  friend GroupElement operator+(const GroupElement& a, const GroupElement& b) {
    GroupElement r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
    return r;
  }
  friend GroupElement operator-(const GroupElement& a, const GroupElement& b) {
    GroupElement r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.v[i];
    return r;
  }
  GroupElement operator-() const {
    GroupElement r = *this;
    for (auto& x : r.v) x = -x;
    return r;
  }
  bool operator==(const GroupElement& o) const { return v == o.v; }
  auto operator<=>(const GroupElement& o) const { return v <=> o.v; }

  std::string str() const {
    std::string s = "(";
    for (size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + std::to_string(v[i]);
    return s + ")";
  }
};

// ---------------------------------------------------------------------------
// Point codes: exact descriptions of single units.

/// Eventually periodic digit stream, least significant digit first.
struct DigitStream {
  Word pre;
  Word period;  // nonempty

  void canonicalize() {
    size_t n = period.size();
    for (size_t p = 1; p <= n / 2; ++p) {
      if (n % p) continue;
      bool ok = true;
      for (size_t i = p; i < n && ok; ++i) ok = period[i] == period[i % p];
      if (ok) {
        period.resize(p);
        break;
      }
    }
    while (!pre.empty() && pre.back() == period.back()) {
      pre.pop_back();
      std::rotate(period.begin(), period.end() - 1, period.end());
    }
  }

  char digit(size_t i) const {
    if (i < pre.size()) return pre[i];
    return period[(i - pre.size()) % period.size()];
  }

  bool operator==(const DigitStream& o) const {
    return pre == o.pre && period == o.period;
  }
};

/// One coordinate of a point: a digit stream for odometer-like factors, or an
/// orbit offset from the canonical substitution fixed point.
struct FactorPoint {
  bool is_digits = true;
  DigitStream digits;
  long long offset = 0;

  bool operator==(const FactorPoint& o) const {
    if (is_digits != o.is_digits) return false;
    return is_digits ? digits == o.digits : offset == o.offset;
  }
};

struct PointCode {
  std::vector<FactorPoint> parts;
  bool operator==(const PointCode& o) const { return parts == o.parts; }
};

// ---------------------------------------------------------------------------
// Substitution language machinery. The subshift is the orbit closure of a
// two-sided fixed point of a power of the substitution; factors, occurrence
// gaps and frequencies are all harvested from that fixed point, growing the
// horizon until the answer is stable across doublings (primitive
// substitutions are linearly repetitive, so this stabilizes).

class SubstitutionLanguage {
 public:
  SubstitutionLanguage(int alphabet, std::vector<Word> rules)
      : k_(alphabet), rules_(std::move(rules)) {
    if (k_ < 2) throw StructuralError("substitution needs >= 2 letters");
    for (const Word& r : rules_)
      if (r.empty()) throw StructuralError("substitution rule maps to empty word");
    if (!primitive()) throw StructuralError("substitution is not primitive");
    find_seed();
  }

  int alphabet() const { return k_; }
  const std::vector<Word>& rules() const { return rules_; }

  Word apply(const Word& w) const {
    Word out;
    for (char c : w) out += rules_[static_cast<Symbol>(c)];
    return out;
  }

  /// Substitution matrix M[i][j] = occurrences of letter i in rules[j].
  std::vector<std::vector<long long>> matrix() const {
    std::vector<std::vector<long long>> m(k_, std::vector<long long>(k_, 0));
    for (int j = 0; j < k_; ++j)
      for (char c : rules_[j]) m[static_cast<Symbol>(c)][j]++;
    return m;
  }

  bool primitive() const {
    auto m = matrix();
    std::vector<std::vector<bool>> b(k_, std::vector<bool>(k_));
    for (int i = 0; i < k_; ++i)
      for (int j = 0; j < k_; ++j) b[i][j] = m[i][j] > 0;
    auto mul = [&](const std::vector<std::vector<bool>>& x) {
      std::vector<std::vector<bool>> r(k_, std::vector<bool>(k_, false));
      for (int i = 0; i < k_; ++i)
        for (int l = 0; l < k_; ++l)
          if (x[i][l])
            for (int j = 0; j < k_; ++j)
              if (m[l][j] > 0) r[i][j] = true;
      return r;
    };
    auto cur = b;
    for (int step = 0; step < 2 * k_ * k_ + 2; ++step) {
      bool all = true;
      for (int i = 0; i < k_ && all; ++i)
        for (int j = 0; j < k_ && all; ++j) all = cur[i][j];
      if (all) return true;
      cur = mul(cur);
    }
    return false;
  }

  /// Two-sided fixed-point window, positions lo..hi inclusive.
  Word window(long long lo, long long hi) const {
    std::lock_guard<std::mutex> lock(mu_);
    ensure(lo, hi);
    return window_nolock(lo, hi);
  }

  /// All admissible factors of a given (small) length.
  std::set<Word> factors(int len) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = factor_cache_.find(len);
    if (it != factor_cache_.end()) return it->second;
    long long h = std::max<long long>(64, 16LL * len);
    std::set<Word> cur = harvest(len, h);
    for (int rounds = 0; rounds < 16; ++rounds) {
      std::set<Word> next = harvest(len, h * 2);
      if (next == cur) break;
      cur = std::move(next);
      h *= 2;
    }
    if (factor_cache_.size() < 64)
      factor_cache_.emplace(len, cur);
    return cur;
  }

  bool is_factor(const Word& w) const {
    if (w.empty()) return true;
    return !occurrences(w, 0).empty();
  }

  /// Occurrence positions of a contiguous word in the fixed point within a
  /// horizon (stабilized by doubling when horizon = 0 is passed).
  std::vector<long long> occurrences(const Word& w, long long horizon) const {
    std::lock_guard<std::mutex> lock(mu_);
    long long h = horizon > 0
                      ? horizon
                      : std::max<long long>(64, 8LL * static_cast<long long>(w.size()));
    auto scan = [&](long long hh) {
      ensure(-hh - static_cast<long long>(w.size()), hh + static_cast<long long>(w.size()));
      Word buf = window_nolock(-hh, hh + static_cast<long long>(w.size()));
      std::vector<long long> pos;
      size_t from = 0;
      while (true) {
        size_t p = buf.find(w, from);
        if (p == Word::npos) break;
        pos.push_back(static_cast<long long>(p) - hh);
        from = p + 1;
      }
      return pos;
    };
    auto cur = scan(h);
    if (horizon > 0) return cur;
    for (int rounds = 0; rounds < 16; ++rounds) {
      auto next = scan(h * 2);
      bool stable = !cur.empty() && !next.empty();
      if (stable) {
        // gaps stabilized: the multiset of consecutive gaps near the center
        // no longer changes
        long long g1 = max_gap(cur), g2 = max_gap(next);
        if (g1 == g2) return next;
      }
      cur = std::move(next);
      h *= 2;
      if (h > (1LL << 34))
        throw CapacityError("occurrence horizon exhausted for word of length " +
                            std::to_string(w.size()));
    }
    return cur;
  }

  /// Largest gap between consecutive occurrences (return-time bound).
  long long max_occurrence_gap(const Word& w) const {
    auto pos = occurrences(w, 0);
    if (pos.size() < 2)
      throw CapacityError("too few occurrences to bound the return time");
    return max_gap(pos);
  }

  /// Smallest gap between occurrences, used for disjointness of translates.
  long long min_occurrence_gap(const Word& w) const {
    auto pos = occurrences(w, 0);
    long long best = std::numeric_limits<long long>::max();
    for (size_t i = 1; i < pos.size(); ++i)
      best = std::min(best, pos[i] - pos[i - 1]);
    return best;
  }

  /// Letter frequencies: normalized Perron eigenvector of the substitution
  /// matrix, power iteration to 1e-12.
  std::vector<double> letter_frequencies() const {
    auto m = matrix();
    std::vector<double> f(k_, 1.0 / k_);
    for (int it = 0; it < 100000; ++it) {
      std::vector<double> g(k_, 0.0);
      for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j) g[i] += static_cast<double>(m[i][j]) * f[j];
        g[i] += f[i];  // spectral shift keeps the iteration aperiodic
      }
      double s = 0;
      for (double x : g) s += x;
      for (double& x : g) x /= s;
      double diff = 0;
      for (int i = 0; i < k_; ++i) diff = std::max(diff, std::abs(g[i] - f[i]));
      f = std::move(g);
      if (diff < 1e-13 && it > 3) break;
    }
    return f;
  }

  /// Frequencies of factors of a given length via the induced sliding-block
  /// substitution (sparse power iteration to 1e-12).
  std::map<Word, double> word_frequencies(int L) const {
    {
      std::lock_guard<std::mutex> lock(freq_mu_);
      auto it = freq_cache_.find(L);
      if (it != freq_cache_.end()) return it->second;
    }
    auto fs = factors(L);
    std::vector<Word> states(fs.begin(), fs.end());
    std::map<Word, int> index;
    for (size_t i = 0; i < states.size(); ++i)
      index[states[i]] = static_cast<int>(i);
    size_t n = states.size();
    // sparse induced matrix: column j lists (row, count)
    std::vector<std::vector<std::pair<int, long long>>> cols(n);
    for (size_t j = 0; j < n; ++j) {
      const Word& w = states[j];
      size_t span = rules_[static_cast<Symbol>(w[0])].size();
      Word img = apply(w);
      if (img.size() < span + static_cast<size_t>(L)) {
        // extend w to the right inside the language until sigma covers span+L
        Word ext = w;
        while (apply(ext).size() < span + static_cast<size_t>(L)) {
          Word grown = extend_right(ext);
          if (grown.empty()) throw StructuralError("language has a dead end");
          ext = grown;
        }
        img = apply(ext);
      }
      std::map<int, long long> counts;
      for (size_t off = 0; off < span; ++off) {
        Word win = img.substr(off, static_cast<size_t>(L));
        auto it = index.find(win);
        if (it == index.end())
          throw StructuralError("induced window not in language");
        counts[it->second]++;
      }
      for (auto& [r, c] : counts) cols[j].emplace_back(r, c);
    }
    std::vector<double> f(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 400000; ++it) {
      std::vector<double> g = f;  // + identity for aperiodicity
      for (size_t j = 0; j < n; ++j)
        for (auto& [r, c] : cols[j])
          g[static_cast<size_t>(r)] += static_cast<double>(c) * f[j];
      double s = 0;
      for (double x : g) s += x;
      for (double& x : g) x /= s;
      double diff = 0;
      for (size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(g[i] - f[i]));
      f = std::move(g);
      if (diff < 1e-13 && it > 3) break;
    }
    std::map<Word, double> out;
    for (size_t i = 0; i < n; ++i) out[states[i]] = f[i];
    std::lock_guard<std::mutex> lock(freq_mu_);
    if (freq_cache_.size() < 16) freq_cache_.emplace(L, out);
    return out;
  }

  /// One-letter admissible right extension of a factor (deterministic:
  /// smallest symbol first), empty on failure.
  Word extend_right(const Word& w) const {
    for (int s = 0; s < k_; ++s) {
      Word cand = w;
      cand.push_back(static_cast<char>(s));
      if (is_factor(cand)) return cand;
    }
    return {};
  }

 private:
  std::set<Word> harvest(int len, long long h) const {
    ensure(-(h + len), h + len);
    std::set<Word> out;
    Word buf = window_nolock(-(h + len), h + len);
    for (size_t i = 0; i + static_cast<size_t>(len) <= buf.size(); ++i)
      out.insert(buf.substr(i, static_cast<size_t>(len)));
    return out;
  }

  static long long max_gap(const std::vector<long long>& pos) {
    long long g = 0;
    for (size_t i = 1; i < pos.size(); ++i) g = std::max(g, pos[i] - pos[i - 1]);
    return g;
  }

  void ensure(long long lo, long long hi) const {
    while (static_cast<long long>(right_.size()) < hi + 1 ||
           static_cast<long long>(left_.size()) < -lo)
      grow();
  }

  Word window_nolock(long long lo, long long hi) const {
    Word out;
    out.reserve(static_cast<size_t>(hi - lo + 1));
    for (long long p = lo; p <= hi; ++p)
      out.push_back(p >= 0 ? right_[static_cast<size_t>(p)]
                           : left_[static_cast<size_t>(-p - 1)]);
    return out;
  }

  void find_seed() {
    auto occurs2 = [&](char p, char q) {
      Word probe;
      probe.push_back(p);
      probe.push_back(q);
      for (int s = 0; s < k_; ++s) {
        Word w(1, static_cast<char>(s));
        for (int it = 0; it < 24 && w.size() < 8192; ++it) w = apply(w);
        if (w.find(probe) != Word::npos) return true;
      }
      return false;
    };
    for (int m = 1; m <= 8; ++m) {
      for (int p = 0; p < k_; ++p) {
        Word ip(1, static_cast<char>(p));
        for (int t = 0; t < m; ++t) ip = apply(ip);
        if (ip.size() < 2 || ip.back() != static_cast<char>(p)) continue;
        for (int q = 0; q < k_; ++q) {
          Word iq(1, static_cast<char>(q));
          for (int t = 0; t < m; ++t) iq = apply(iq);
          if (iq.size() < 2 || iq.front() != static_cast<char>(q)) continue;
          if (!occurs2(static_cast<char>(p), static_cast<char>(q))) continue;
          seed_left_ = static_cast<char>(p);
          seed_right_ = static_cast<char>(q);
          seed_power_ = m;
          return;
        }
      }
    }
    throw StructuralError("no two-sided fixed-point seed found");
  }

  void grow() const {
    if (right_.empty()) {
      right_ = Word(1, seed_right_);
      left_ = Word(1, seed_left_);  // stored reversed: left_[i] = position -(i+1)
    }
    Word r = right_;
    Word l(left_.rbegin(), left_.rend());
    for (int t = 0; t < seed_power_; ++t) {
      r = apply(r);
      l = apply(l);
    }
    right_ = r;
    left_.assign(l.rbegin(), l.rend());
  }

  int k_;
  std::vector<Word> rules_;
  char seed_left_ = 0, seed_right_ = 0;
  int seed_power_ = 1;
  mutable std::mutex mu_;
  mutable Word right_;
  mutable Word left_;
  mutable std::map<int, std::set<Word>> factor_cache_;
  mutable std::mutex freq_mu_;
  mutable std::map<int, std::map<Word, double>> freq_cache_;
};

// ---------------------------------------------------------------------------
// Spiral index mapping for subshift cells.

inline long long spiral_position(int index) {
  if (index == 0) return 0;
  return index % 2 ? -((index + 1) / 2) : index / 2;
}

inline int spiral_index(long long pos) {
  if (pos == 0) return 0;
  return pos < 0 ? static_cast<int>(-pos * 2 - 1) : static_cast<int>(pos * 2);
}

/// Window [lo, hi] fixed by a spiral word of length d >= 1.
inline std::pair<long long, long long> spiral_window(int d) {
  return {-(d / 2), (d - 1) / 2};
}

/// Smallest spiral depth whose window contains [lo, hi].
inline int spiral_depth_for(long long lo, long long hi) {
  int d = 1;
  if (lo < 0) d = std::max(d, static_cast<int>(-lo) * 2);
  if (hi > 0) d = std::max(d, static_cast<int>(hi) * 2 + 1);
  return d;
}

/// Contiguous letters of a spiral word with its leftmost position.
inline std::pair<Word, long long> spiral_to_contiguous(const Word& w) {
  if (w.empty()) return {Word{}, 0};
  auto [lo, hi] = spiral_window(static_cast<int>(w.size()));
  Word out(static_cast<size_t>(hi - lo + 1), 0);
  for (size_t i = 0; i < w.size(); ++i)
    out[static_cast<size_t>(spiral_position(static_cast<int>(i)) - lo)] = w[i];
  return {out, lo};
}

inline Word contiguous_to_spiral(const Word& contig, long long lo, int depth) {
  Word out(static_cast<size_t>(depth), 0);
  for (int i = 0; i < depth; ++i) {
    long long p = spiral_position(i);
    out[static_cast<size_t>(i)] = contig[static_cast<size_t>(p - lo)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Systems.

struct ActImage {
  ClopenSet image;
  int required_depth = 0;
  bool partial = false;  // part of the cell fell outside dom(g)
};

struct RemovedPoint {
  int axis = 0;
  int direction = 1;  // the generator direction undefined at `point`
  PointCode point;
};

class System;
using SystemPtr = std::shared_ptr<const System>;

class System {
 public:
  enum class Kind { Odometer, Substitution, Product, Partial };

  static SystemPtr odometer(int base, int depth_cap = 0) {
    if (base < 2) throw StructuralError("odometer base must be >= 2");
    auto s = std::shared_ptr<System>(new System(Kind::Odometer));
    s->base_ = base;
    s->tree_ = full_shift_tree(base, depth_cap);
    s->name_ = "odometer-" + std::to_string(base);
    return s;
  }

  static SystemPtr substitution(const std::map<char, std::string>& rules,
                                int depth_cap = 0) {
    auto s = std::shared_ptr<System>(new System(Kind::Substitution));
    std::vector<char> letters;
    for (auto& [c, _] : rules) letters.push_back(c);
    std::map<char, Symbol> code;
    for (size_t i = 0; i < letters.size(); ++i)
      code[letters[i]] = static_cast<Symbol>(i);
    std::vector<Word> coded(letters.size());
    for (auto& [c, img] : rules) {
      Word w;
      for (char x : img) {
        auto it = code.find(x);
        if (it == code.end())
          throw StructuralError("substitution rule uses unknown letter");
        w.push_back(static_cast<char>(it->second));
      }
      coded[code[c]] = w;
    }
    s->lang_ = std::make_shared<SubstitutionLanguage>(
        static_cast<int>(letters.size()), coded);
    int k = static_cast<int>(letters.size());
    auto lang = s->lang_;
    int cap = depth_cap > 0 ? depth_cap : env_depth_cap(1 << 14);
    s->tree_ = std::make_shared<PartitionTree>(
        k, "subst-" + std::string(letters.begin(), letters.end()),
        [lang](const Word& w) {
          if (w.empty()) return true;
          auto [contig, lo] = spiral_to_contiguous(w);
          (void)lo;
          return lang->is_factor(contig);
        },
        16, cap);
    s->name_ = s->tree_->name();
    return s;
  }

  static SystemPtr product(SystemPtr f0, SystemPtr f1) {
    if (f0->kind() == Kind::Product || f1->kind() == Kind::Product)
      throw StructuralError("nested products are not supported");
    if (f0->kind() == Kind::Partial || f1->kind() == Kind::Partial)
      throw StructuralError("partial factors are not supported in products");
    auto s = std::shared_ptr<System>(new System(Kind::Product));
    s->factors_ = {f0, f1};
    int a0 = f0->tree()->arity(), a1 = f1->tree()->arity();
    auto t0 = f0->tree(), t1 = f1->tree();
    int cap = std::min(t0->depth_cap(), t1->depth_cap());
    s->tree_ = std::make_shared<PartitionTree>(
        a0 * a1, "product(" + f0->name_ + "," + f1->name_ + ")",
        [t0, t1, a1](const Word& w) {
          Word w0, w1;
          for (char c : w) {
            Symbol sym = static_cast<Symbol>(c);
            w0.push_back(static_cast<char>(sym / a1));
            w1.push_back(static_cast<char>(sym % a1));
          }
          return t0->is_admissible(w0) && t1->is_admissible(w1);
        },
        16, cap);
    s->name_ = s->tree_->name();
    return s;
  }

  static SystemPtr partial(SystemPtr inner, std::vector<RemovedPoint> removed) {
    if (inner->kind() == Kind::Partial)
      throw StructuralError("nested partial systems are not supported");
    auto s = std::shared_ptr<System>(new System(Kind::Partial));
    s->inner_ = inner;
    s->tree_ = inner->tree_;
    s->name_ = "partial(" + inner->name_ + ")";
    for (const RemovedPoint& r : removed) {
      s->removed_.push_back(r);
      GroupElement step = GroupElement::zero(inner->rank());
      step.v[static_cast<size_t>(r.axis)] = r.direction;
      auto img = inner->act_on_point(step, r.point);
      if (!img)
        throw StructuralError("removed point image undefined in completed system");
      RemovedPoint inv;
      inv.axis = r.axis;
      inv.direction = -r.direction;
      inv.point = *img;
      s->removed_.push_back(inv);
    }
    return s;
  }

  static SystemPtr from_json(const nlohmann::json& j);

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const TreePtr& tree() const { return tree_; }
  int base() const { return base_; }
  const std::shared_ptr<SubstitutionLanguage>& language() const { return lang_; }
  const std::vector<SystemPtr>& factors() const { return factors_; }
  const SystemPtr& inner() const { return inner_; }
  const std::vector<RemovedPoint>& removed_points() const { return removed_; }

  int rank() const {
    switch (kind_) {
      case Kind::Product:
        return 2;
      case Kind::Partial:
        return inner_->rank();
      default:
        return 1;
    }
  }

  bool is_partial() const { return kind_ == Kind::Partial; }

  std::vector<GroupElement> generators() const {
    std::vector<GroupElement> out;
    int r = rank();
    for (int a = 0; a < r; ++a)
      for (int d : {+1, -1}) {
        GroupElement g = GroupElement::zero(r);
        g.v[static_cast<size_t>(a)] = d;
        out.push_back(g);
      }
    return out;
  }

  // -- points ---------------------------------------------------------------

  /// Canonical free unit: all-zero stream / fixed-point configuration.
  PointCode free_point() const {
    PointCode p;
    switch (kind_) {
      case Kind::Odometer: {
        FactorPoint f;
        f.is_digits = true;
        f.digits = DigitStream{Word{}, Word(1, 0)};
        p.parts = {f};
        break;
      }
      case Kind::Substitution: {
        FactorPoint f;
        f.is_digits = false;
        f.offset = 0;
        p.parts = {f};
        break;
      }
      case Kind::Product: {
        auto p0 = factors_[0]->free_point();
        auto p1 = factors_[1]->free_point();
        p.parts = {p0.parts[0], p1.parts[0]};
        break;
      }
      case Kind::Partial:
        return inner_->free_point();
    }
    return p;
  }

  std::optional<PointCode> act_on_point(const GroupElement& g,
                                        const PointCode& p) const {
    if (kind_ == Kind::Partial) {
      if (!defined_at(g, p)) return std::nullopt;
      return inner_->act_on_point(g, p);
    }
    PointCode out = p;
    switch (kind_) {
      case Kind::Odometer:
        out.parts[0].digits = add_to_stream(out.parts[0].digits, g.v[0], base_);
        break;
      case Kind::Substitution:
        out.parts[0].offset += g.v[0];
        break;
      case Kind::Product: {
        PointCode q0{{p.parts[0]}}, q1{{p.parts[1]}};
        auto r0 = factors_[0]->act_on_point(GroupElement({g.v[0]}), q0);
        auto r1 = factors_[1]->act_on_point(GroupElement({g.v[1]}), q1);
        out.parts = {r0->parts[0], r1->parts[0]};
        break;
      }
      default:
        break;
    }
    return out;
  }

  /// True iff the whole generator path for g is defined at p (axis 0 first).
  bool defined_at(const GroupElement& g, const PointCode& p) const {
    if (kind_ != Kind::Partial) return true;
    PointCode cur = p;
    for (int a = 0; a < rank(); ++a) {
      long long steps = g.v[static_cast<size_t>(a)];
      int dir = steps >= 0 ? +1 : -1;
      GroupElement step = GroupElement::zero(rank());
      step.v[static_cast<size_t>(a)] = dir;
      for (long long i = 0; i < (steps >= 0 ? steps : -steps); ++i) {
        if (is_removed(a, dir, cur)) return false;
        cur = *inner_->act_on_point(step, cur);
      }
    }
    return true;
  }

  /// Expand a point to its depth-d cell word.
  Word point_word(const PointCode& p, int d) const {
    switch (kind_) {
      case Kind::Odometer: {
        Word w;
        for (int i = 0; i < d; ++i)
          w.push_back(p.parts[0].digits.digit(static_cast<size_t>(i)));
        return w;
      }
      case Kind::Substitution: {
        if (d == 0) return {};
        auto [lo, hi] = spiral_window(d);
        Word contig =
            lang_->window(p.parts[0].offset + lo, p.parts[0].offset + hi);
        return contiguous_to_spiral(contig, lo, d);
      }
      case Kind::Product: {
        Word w0 = factors_[0]->point_word(PointCode{{p.parts[0]}}, d);
        Word w1 = factors_[1]->point_word(PointCode{{p.parts[1]}}, d);
        Word w;
        int a1 = factors_[1]->tree()->arity();
        for (int i = 0; i < d; ++i)
          w.push_back(static_cast<char>(
              static_cast<Symbol>(w0[static_cast<size_t>(i)]) * a1 +
              static_cast<Symbol>(w1[static_cast<size_t>(i)])));
        return w;
      }
      case Kind::Partial:
        return inner_->point_word(p, d);
    }
    return {};
  }

  bool point_in(const PointCode& p, const ClopenSet& a) const {
    if (a.is_empty()) return false;
    return a.covers_word(point_word(p, a.max_depth()));
  }

  /// A representative point inside a cell (deterministic completion).
  PointCode cell_point(const Word& w) const {
    switch (kind_) {
      case Kind::Odometer: {
        FactorPoint f;
        f.is_digits = true;
        f.digits = DigitStream{w, Word(1, 0)};
        f.digits.canonicalize();
        return PointCode{{f}};
      }
      case Kind::Substitution: {
        auto [contig, lo] = spiral_to_contiguous(w);
        long long pos = contig.empty() ? 0 : lang_->occurrences(contig, 0).front();
        FactorPoint f;
        f.is_digits = false;
        f.offset = pos - lo;
        return PointCode{{f}};
      }
      case Kind::Product: {
        Word w0, w1;
        int a1 = factors_[1]->tree()->arity();
        for (char c : w) {
          Symbol s = static_cast<Symbol>(c);
          w0.push_back(static_cast<char>(s / a1));
          w1.push_back(static_cast<char>(s % a1));
        }
        auto p0 = factors_[0]->cell_point(w0);
        auto p1 = factors_[1]->cell_point(w1);
        return PointCode{{p0.parts[0], p1.parts[0]}};
      }
      case Kind::Partial:
        return inner_->cell_point(w);
    }
    return {};
  }

  // -- cells ----------------------------------------------------------------

  ActImage act_on_cell(const GroupElement& g, const Word& cell) const {
    switch (kind_) {
      case Kind::Odometer:
        return act_odometer(g, cell);
      case Kind::Substitution:
        return act_substitution(g, cell);
      case Kind::Product:
        return act_product(g, cell);
      case Kind::Partial:
        return act_partial(g, cell);
    }
    throw StructuralError("unreachable");
  }

  ActImage act_on_clopen(const GroupElement& g, const ClopenSet& a) const {
    ActImage out{ClopenSet::empty(tree_), 0, false};
    for (const Word& w : a.cells()) {
      ActImage im = act_on_cell(g, w);
      out.image = clopen_union(out.image, im.image);
      out.required_depth = std::max(out.required_depth, im.required_depth);
      out.partial = out.partial || im.partial;
    }
    return out;
  }

  // -- invariant measure ----------------------------------------------------

  double mass(const Word& cell) const {
    switch (kind_) {
      case Kind::Odometer:
        return std::pow(1.0 / base_, static_cast<double>(cell.size()));
      case Kind::Substitution: {
        if (cell.empty()) return 1.0;
        auto [contig, lo] = spiral_to_contiguous(cell);
        (void)lo;
        auto freq = lang_->word_frequencies(static_cast<int>(contig.size()));
        auto it = freq.find(contig);
        return it == freq.end() ? 0.0 : it->second;
      }
      case Kind::Product: {
        Word w0, w1;
        int a1 = factors_[1]->tree()->arity();
        for (char c : cell) {
          Symbol s = static_cast<Symbol>(c);
          w0.push_back(static_cast<char>(s / a1));
          w1.push_back(static_cast<char>(s % a1));
        }
        return factors_[0]->mass(w0) * factors_[1]->mass(w1);
      }
      case Kind::Partial:
        return inner_->mass(cell);
    }
    return 0.0;
  }

  std::optional<Rational> rational_mass(const Word& cell) const {
    switch (kind_) {
      case Kind::Odometer: {
        Rational r(1);
        for (size_t i = 0; i < cell.size(); ++i) r = r / Rational(base_);
        return r;
      }
      case Kind::Product: {
        Word w0, w1;
        int a1 = factors_[1]->tree()->arity();
        for (char c : cell) {
          Symbol s = static_cast<Symbol>(c);
          w0.push_back(static_cast<char>(s / a1));
          w1.push_back(static_cast<char>(s % a1));
        }
        auto r0 = factors_[0]->rational_mass(w0);
        auto r1 = factors_[1]->rational_mass(w1);
        if (r0 && r1) return *r0 * *r1;
        return std::nullopt;
      }
      case Kind::Partial:
        return inner_->rational_mass(cell);
      default:
        return std::nullopt;
    }
  }

  double mass(const ClopenSet& a) const {
    double s = 0;
    for (const Word& w : a.cells()) s += mass(w);
    return s;
  }

  std::optional<Rational> rational_mass(const ClopenSet& a) const {
    Rational s(0);
    for (const Word& w : a.cells()) {
      auto r = rational_mass(w);
      if (!r) return std::nullopt;
      s = s + *r;
    }
    return s;
  }

  // -- certificates ---------------------------------------------------------

  /// Freeness certificate up to a word-length radius: no cell at the
  /// certification depth is fixed setwise by nonzero g, and no short
  /// periodic factors for subshifts.
  bool certify_free(int radius, std::string* why = nullptr) const {
    if (kind_ == Kind::Partial) return inner_->certify_free(radius, why);
    if (kind_ == Kind::Substitution) {
      int probe = 4 * radius + 8;
      for (int p = 1; p <= radius; ++p) {
        for (const Word& w : lang_->factors(probe)) {
          bool periodic = true;
          for (size_t i = 0; i + static_cast<size_t>(p) < w.size() && periodic;
               ++i)
            periodic = w[i] == w[i + static_cast<size_t>(p)];
          if (periodic) {
            if (why) *why = "periodic factor of period " + std::to_string(p);
            return false;
          }
        }
      }
      return true;
    }
    if (kind_ == Kind::Product) {
      return factors_[0]->certify_free(radius, why) &&
             factors_[1]->certify_free(radius, why);
    }
    int d = 1;
    long long pw = base_;
    while (pw <= radius) {
      pw *= base_;
      ++d;
    }
    for (long long k = 1; k <= radius; ++k) {
      Word w(static_cast<size_t>(d), 0);
      ActImage im = act_odometer(GroupElement::z(k), w);
      if (im.image == ClopenSet::cell(tree_, w)) {
        if (why) *why = "cell fixed by +" + std::to_string(k);
        return false;
      }
    }
    return true;
  }

  /// Minimality certificate: radius R such that every depth-d cell is visited
  /// from every unit within word length R; nullopt if the cap is exceeded.
  std::optional<long long> certify_minimal(int depth, long long radius_cap) const {
    switch (kind_) {
      case Kind::Partial:
        return inner_->certify_minimal(depth, radius_cap);
      case Kind::Odometer: {
        long long r = 1;
        for (int i = 0; i < depth; ++i) r *= base_;
        return r <= radius_cap ? std::optional<long long>(r) : std::nullopt;
      }
      case Kind::Substitution: {
        long long worst = 0;
        auto cells = refine_to_depth(ClopenSet::whole(tree_), depth);
        for (const Word& c : cells) {
          auto [contig, lo] = spiral_to_contiguous(c);
          (void)lo;
          long long gap = lang_->max_occurrence_gap(contig);
          worst = std::max(worst, gap + static_cast<long long>(contig.size()));
        }
        return worst <= radius_cap ? std::optional<long long>(worst) : std::nullopt;
      }
      case Kind::Product: {
        auto r0 = factors_[0]->certify_minimal(depth, radius_cap);
        auto r1 = factors_[1]->certify_minimal(depth, radius_cap);
        if (!r0 || !r1) return std::nullopt;
        long long r = *r0 + *r1;
        return r <= radius_cap ? std::optional<long long>(r) : std::nullopt;
      }
    }
    return std::nullopt;
  }

  // -- partial helpers --------------------------------------------------------

  bool is_removed(int axis, int dir, const PointCode& p) const {
    for (const RemovedPoint& r : removed_)
      if (r.axis == axis && r.direction == dir && r.point == p) return true;
    return false;
  }

  /// Cells at `depth` containing a point whose g-path is undefined.
  std::vector<Word> undefined_cells(const GroupElement& g, int depth) const {
    std::vector<Word> out;
    if (kind_ != Kind::Partial) return out;
    for (int a = 0; a < rank(); ++a) {
      long long steps = g.v[static_cast<size_t>(a)];
      if (steps == 0) continue;
      int dir = steps >= 0 ? +1 : -1;
      GroupElement back = GroupElement::zero(rank());
      back.v[static_cast<size_t>(a)] = -dir;
      for (const RemovedPoint& r : removed_) {
        if (r.axis != a || r.direction != dir) continue;
        PointCode x = r.point;
        for (long long j = 0; j < (steps >= 0 ? steps : -steps); ++j) {
          out.push_back(point_word(x, depth));
          x = *inner_->act_on_point(back, x);
        }
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  explicit System(Kind k) : kind_(k) {}

  static DigitStream add_to_stream(const DigitStream& s, long long k, int base) {
    if (k == 0) return s;
    DigitStream out = s;
    size_t need = 2;
    long long t = k < 0 ? -k : k;
    while (t > 0) {
      t /= base;
      ++need;
    }
    while (out.pre.size() < s.pre.size() + need + out.period.size())
      out.pre.push_back(
          out.period[(out.pre.size() - s.pre.size()) % out.period.size()]);
    long long carry = k;
    size_t i = 0;
    while (carry != 0) {
      if (i == out.pre.size()) {
        bool all_max = true, all_zero = true;
        for (char c : out.period) {
          if (static_cast<Symbol>(c) != static_cast<Symbol>(base - 1))
            all_max = false;
          if (c != 0) all_zero = false;
        }
        if (carry == 1 && all_max) {
          out.period = Word(1, 0);
          break;
        }
        if (carry == -1 && all_zero) {
          out.period = Word(1, static_cast<char>(base - 1));
          break;
        }
        for (char c : out.period) out.pre.push_back(c);
      }
      long long d = static_cast<Symbol>(out.pre[i]) + carry % base;
      carry /= base;
      while (d < 0) {
        d += base;
        carry -= 1;
      }
      while (d >= base) {
        d -= base;
        carry += 1;
      }
      out.pre[i] = static_cast<char>(d);
      ++i;
    }
    out.canonicalize();
    return out;
  }

  ActImage act_odometer(const GroupElement& g, const Word& cell) const {
    // adding a constant permutes the depth-d cells: the image is one cell
    Word w = cell;
    long long carry = g.v[0];
    for (size_t i = 0; i < w.size() && carry != 0; ++i) {
      long long d = static_cast<Symbol>(w[i]) + carry % base_;
      carry /= base_;
      while (d < 0) {
        d += base_;
        carry -= 1;
      }
      while (d >= base_) {
        d -= base_;
        carry += 1;
      }
      w[i] = static_cast<char>(d);
    }
    return ActImage{ClopenSet::cell(tree_, w), static_cast<int>(w.size()),
                    false};
  }

  ActImage act_substitution(const GroupElement& g, const Word& cell) const {
    long long k = g.v[0];
    if (cell.empty() || k == 0)
      return ActImage{cell.empty() ? ClopenSet::whole(tree_)
                                   : ClopenSet::cell(tree_, cell),
                      static_cast<int>(cell.size()), false};
    auto [contig, lo] = spiral_to_contiguous(cell);
    long long hi = lo + static_cast<long long>(contig.size()) - 1;
    long long nlo = lo - k, nhi = hi - k;
    int depth = spiral_depth_for(nlo, nhi);
    auto [wlo, whi] = spiral_window(depth);
    // extend the shifted constraint word to the full window by DFS over
    // admissible one-letter extensions
    std::vector<Word> results;
    std::function<void(Word, long long)> extend = [&](Word w, long long l) {
      long long h = l + static_cast<long long>(w.size()) - 1;
      if (l == wlo && h == whi) {
        results.push_back(contiguous_to_spiral(w, wlo, depth));
        return;
      }
      if (l > wlo) {
        for (int sy = 0; sy < tree_->arity(); ++sy) {
          Word cand(1, static_cast<char>(sy));
          cand += w;
          if (lang_->is_factor(cand)) extend(cand, l - 1);
        }
      } else {
        for (int sy = 0; sy < tree_->arity(); ++sy) {
          Word cand = w;
          cand.push_back(static_cast<char>(sy));
          if (lang_->is_factor(cand)) extend(cand, l);
        }
      }
    };
    extend(contig, nlo);
    return ActImage{ClopenSet::from_cells(tree_, std::move(results)), depth,
                    false};
  }

  ActImage act_product(const GroupElement& g, const Word& cell) const {
    Word w0, w1;
    int a1 = factors_[1]->tree()->arity();
    for (char c : cell) {
      Symbol s = static_cast<Symbol>(c);
      w0.push_back(static_cast<char>(s / a1));
      w1.push_back(static_cast<char>(s % a1));
    }
    ActImage i0 = factors_[0]->act_on_cell(GroupElement({g.v[0]}), w0);
    ActImage i1 = factors_[1]->act_on_cell(GroupElement({g.v[1]}), w1);
    int depth = std::max({i0.required_depth, i1.required_depth,
                          static_cast<int>(cell.size())});
    auto cells0 = refine_to_depth(i0.image, depth);
    auto cells1 = refine_to_depth(i1.image, depth);
    std::vector<Word> cells;
    for (const Word& u : cells0)
      for (const Word& v : cells1) {
        Word w;
        for (int i = 0; i < depth; ++i)
          w.push_back(static_cast<char>(
              static_cast<Symbol>(u[static_cast<size_t>(i)]) * a1 +
              static_cast<Symbol>(v[static_cast<size_t>(i)])));
        cells.push_back(w);
      }
    return ActImage{ClopenSet::from_cells(tree_, std::move(cells)), depth,
                    false};
  }

  ActImage act_partial(const GroupElement& g, const Word& cell) const {
    int depth = std::max<int>(static_cast<int>(cell.size()),
                              partial_certified_depth(g));
    auto bad = undefined_cells(g, depth);
    ClopenSet dom = ClopenSet::cell(tree_, cell);
    bool clipped = false;
    if (!bad.empty()) {
      ClopenSet bad_set = ClopenSet::from_cells(tree_, bad);
      ClopenSet kept = clopen_difference(dom, bad_set);
      clipped = !(kept == dom);
      dom = kept;
    }
    ActImage out{ClopenSet::empty(tree_), depth, clipped};
    for (const Word& w : dom.cells()) {
      ActImage im = inner_->act_on_cell(g, w);
      out.image = clopen_union(out.image, im.image);
      out.required_depth = std::max(out.required_depth, im.required_depth);
    }
    return out;
  }

  /// Depth at which the undefined path points of g occupy distinct cells.
  int partial_certified_depth(const GroupElement& g) const {
    size_t path_len = 0;
    for (int a = 0; a < rank(); ++a) {
      long long s = g.v[static_cast<size_t>(a)];
      if (s == 0) continue;
      int dir = s >= 0 ? +1 : -1;
      for (const RemovedPoint& r : removed_)
        if (r.axis == a && r.direction == dir)
          path_len += static_cast<size_t>(s >= 0 ? s : -s);
    }
    if (path_len == 0) return 0;
    int d = 4;
    for (;;) {
      auto cells = undefined_cells(g, d);
      if (cells.size() == path_len || d >= tree_->depth_cap()) return d;
      d += 4;
    }
  }

  Kind kind_;
  std::string name_;
  TreePtr tree_;
  int base_ = 0;
  std::shared_ptr<SubstitutionLanguage> lang_;
  std::vector<SystemPtr> factors_;
  SystemPtr inner_;
  std::vector<RemovedPoint> removed_;
};

// ---------------------------------------------------------------------------
// JSON loading.

inline PointCode point_from_json(const nlohmann::json& j, const SystemPtr& sys);

inline SystemPtr System::from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "odometer")
    return System::odometer(j.at("base").get<int>(), j.value("depth_cap", 0));
  if (kind == "substitution") {
    std::map<char, std::string> rules;
    for (auto& [key, val] : j.at("rules").items()) {
      if (key.size() != 1)
        throw StructuralError("rule letters must be single characters");
      rules[key[0]] = val.get<std::string>();
    }
    return System::substitution(rules, j.value("depth_cap", 0));
  }
  if (kind == "product") {
    auto f = j.at("factors");
    if (!f.is_array() || f.size() != 2)
      throw StructuralError("product needs exactly two factors");
    return System::product(from_json(f[0]), from_json(f[1]));
  }
  if (kind == "partial") {
    nlohmann::json inner_j;
    if (j.contains("inner"))
      inner_j = j.at("inner");
    else
      inner_j = {{"kind", "odometer"}, {"base", j.at("base").get<int>()}};
    SystemPtr inner = from_json(inner_j);
    std::vector<RemovedPoint> removed;
    for (const auto& r : j.value("removed", nlohmann::json::array())) {
      RemovedPoint rp;
      rp.axis = r.value("axis", 0);
      rp.direction = r.value("direction", 1);
      rp.point = point_from_json(r.at("point"), inner);
      removed.push_back(rp);
    }
    return System::partial(inner, removed);
  }
  throw StructuralError("unknown system kind '" + kind + "'");
}

inline PointCode point_from_json(const nlohmann::json& j, const SystemPtr& sys) {
  const System* target =
      sys->kind() == System::Kind::Partial ? sys->inner().get() : sys.get();
  auto parse_factor = [](const nlohmann::json& f, const System& s) {
    FactorPoint fp;
    if (s.kind() == System::Kind::Substitution) {
      fp.is_digits = false;
      fp.offset = f.at("offset").get<long long>();
    } else {
      fp.is_digits = true;
      int arity = s.tree()->arity();
      fp.digits.pre = display_to_word(f.value("pre", std::string{}), arity);
      fp.digits.period = display_to_word(f.at("period").get<std::string>(), arity);
      if (fp.digits.period.empty())
        throw StructuralError("point period must be nonempty");
      fp.digits.canonicalize();
    }
    return fp;
  };
  PointCode p;
  if (target->kind() == System::Kind::Product) {
    auto arr = j.at("parts");
    p.parts = {parse_factor(arr[0], *target->factors()[0]),
               parse_factor(arr[1], *target->factors()[1])};
  } else {
    p.parts = {parse_factor(j, *target)};
  }
  return p;
}

}  // namespace gtiler
