#include "proxysynth/rank_list.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "proxysynth/error.hpp"

namespace proxysynth {

RankList RankList::single(int rank) { return range(rank, rank); }

RankList RankList::range(int lo, int hi) {
  RankList out;
  out.insert_range(lo, hi);
  return out;
}

void RankList::insert_range(int lo, int hi) {
  if (lo > hi) return;
  if (lo < 0) throw Error(ErrorKind::InvalidRank, fmt::format("negative rank {}", lo));
  // First interval that could touch [lo, hi].
  auto first = std::lower_bound(
      intervals_.begin(), intervals_.end(), lo,
      [](const RankInterval& iv, int v) { return iv.hi + 1 < v; });
  auto last = first;
  while (last != intervals_.end() && last->lo <= hi + 1) {
    lo = std::min(lo, last->lo);
    hi = std::max(hi, last->hi);
    ++last;
  }
  first = intervals_.erase(first, last);
  intervals_.insert(first, RankInterval{lo, hi});
}

RankList& RankList::operator|=(const RankList& other) {
  if (intervals_.empty()) {
    intervals_ = other.intervals_;
    return *this;
  }
  for (const auto& iv : other.intervals_) insert_range(iv.lo, iv.hi);
  return *this;
}

bool RankList::contains(int rank) const {
  auto it = std::lower_bound(
      intervals_.begin(), intervals_.end(), rank,
      [](const RankInterval& iv, int v) { return iv.hi < v; });
  return it != intervals_.end() && it->lo <= rank;
}

std::size_t RankList::count() const {
  std::size_t n = 0;
  for (const auto& iv : intervals_) n += static_cast<std::size_t>(iv.hi - iv.lo + 1);
  return n;
}

bool RankList::covers_all(int world_size) const {
  return intervals_.size() == 1 && intervals_[0].lo == 0 &&
         intervals_[0].hi == world_size - 1;
}

bool RankList::intersects(const RankList& other) const {
  auto a = intervals_.begin();
  auto b = other.intervals_.begin();
  while (a != intervals_.end() && b != other.intervals_.end()) {
    if (a->hi < b->lo) {
      ++a;
    } else if (b->hi < a->lo) {
      ++b;
    } else {
      return true;
    }
  }
  return false;
}

std::string RankList::to_string() const {
  std::string out;
  for (const auto& iv : intervals_) {
    if (!out.empty()) out += ',';
    out += iv.lo == iv.hi ? fmt::format("{}", iv.lo)
                          : fmt::format("{}-{}", iv.lo, iv.hi);
  }
  return out;
}

RankList RankList::parse(std::string_view text) {
  RankList out;
  auto number = [&](std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty() || v < 0) {
      throw Error(ErrorKind::Parse, fmt::format("bad rank list '{}'", text));
    }
    return v;
  };
  while (!text.empty()) {
    auto comma = text.find(',');
    auto part = text.substr(0, comma);
    auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      out.insert(number(part));
    } else {
      int lo = number(part.substr(0, dash));
      int hi = number(part.substr(dash + 1));
      if (lo > hi) throw Error(ErrorKind::Parse, fmt::format("bad rank list '{}'", text));
      out.insert_range(lo, hi);
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
    if (text.empty()) throw Error(ErrorKind::Parse, "trailing ',' in rank list");
  }
  return out;
}

}  // namespace proxysynth
