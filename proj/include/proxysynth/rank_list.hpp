#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace proxysynth {

struct RankInterval {
  int lo = 0;
  int hi = 0;  // inclusive
  bool operator==(const RankInterval&) const = default;
};

/// Sorted set of ranks kept as normalized closed intervals: no two
/// intervals overlap or touch.
class RankList {
 public:
  RankList() = default;

  static RankList single(int rank);
  static RankList range(int lo, int hi);

  void insert(int rank) { insert_range(rank, rank); }
  void insert_range(int lo, int hi);
  RankList& operator|=(const RankList& other);
  friend RankList operator|(RankList a, const RankList& b) { return a |= b; }

  bool contains(int rank) const;
  bool empty() const { return intervals_.empty(); }
  std::size_t count() const;
  /// True when the list is exactly {0..world_size-1}.
  bool covers_all(int world_size) const;
  bool intersects(const RankList& other) const;

  const std::vector<RankInterval>& intervals() const { return intervals_; }

  /// "0-3,5"
  std::string to_string() const;
  static RankList parse(std::string_view text);

  bool operator==(const RankList&) const = default;

 private:
  std::vector<RankInterval> intervals_;
};

}  // namespace proxysynth
