#include <algorithm>

#include "proxysynth/merge.hpp"

namespace proxysynth {

namespace {

using Span = std::span<const std::uint64_t>;
using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

// row[j] = LCS(a, b[0..j))
void forward_row(Span a, Span b, std::vector<std::uint32_t>& row) {
  row.assign(b.size() + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::uint32_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::uint32_t up = row[j];
      row[j] = a[i] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
}

// row[j] = LCS(a, b[j..))
void backward_row(Span a, Span b, std::vector<std::uint32_t>& row) {
  const std::size_t m = b.size();
  row.assign(m + 1, 0);
  for (std::size_t i = a.size(); i-- > 0;) {
    std::uint32_t diag = 0;
    for (std::size_t j = m; j-- > 0;) {
      std::uint32_t down = row[j];
      row[j] = a[i] == b[j] ? diag + 1 : std::max(row[j], row[j + 1]);
      diag = down;
    }
  }
}

void hirschberg(Span a, Span b, std::size_t a_off, std::size_t b_off, Pairs& out) {
  if (a.empty() || b.empty()) return;
  if (a.size() == 1) {
    auto it = std::find(b.begin(), b.end(), a[0]);
    if (it != b.end()) out.emplace_back(a_off, b_off + static_cast<std::size_t>(it - b.begin()));
    return;
  }
  const std::size_t mid = a.size() / 2;
  std::vector<std::uint32_t> left, right;
  forward_row(a.first(mid), b, left);
  backward_row(a.subspan(mid), b, right);
  std::size_t split = 0;
  std::uint32_t best = 0;
  for (std::size_t j = 0; j <= b.size(); ++j) {
    if (left[j] + right[j] > best || j == 0) {
      best = left[j] + right[j];
      split = j;
    }
  }
  hirschberg(a.first(mid), b.first(split), a_off, b_off, out);
  hirschberg(a.subspan(mid), b.subspan(split), a_off + mid, b_off + split, out);
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(Span a, Span b) {
  Pairs out;
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) {
    out.emplace_back(prefix, prefix);
    ++prefix;
  }
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  hirschberg(a.subspan(prefix, a.size() - prefix - suffix),
             b.subspan(prefix, b.size() - prefix - suffix), prefix, prefix, out);
  for (std::size_t k = suffix; k-- > 0;) {
    out.emplace_back(a.size() - 1 - k, b.size() - 1 - k);
  }
  return out;
}

}  // namespace proxysynth
