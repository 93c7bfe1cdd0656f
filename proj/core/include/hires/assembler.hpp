#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hires/autograd.hpp"
#include "hires/rng.hpp"
#include "hires/slicer.hpp"

namespace hires {

enum class SpanTag { lowres, sep_global, slice, sep_slice, sep_row };

const char* span_tag_name(SpanTag tag);

struct Span {
  SpanTag tag;
  int64_t offset = 0;
  int64_t length = 0;
  int64_t slice_index = -1;  // only for SpanTag::slice
};

// Three learned one-token delimiters: after the low-res block, between
// adjacent slices within a row, and at the end of each slice row.
template <typename T>
struct SeparatorSet {
  ag::Var<T> sep_global;  // [D]
  ag::Var<T> sep_slice;   // [D]
  ag::Var<T> sep_row;     // [D]
};

template <typename T>
SeparatorSet<T> init_separators(int64_t dim, uint64_t seed) {
  Rng rng(seed);
  SeparatorSet<T> s;
  auto make = [&] {
    Tensor<T> t({dim});
    fill_gaussian(t, rng, 0.0, 0.02);
    return ag::Var<T>::leaf(std::move(t), false);
  };
  s.sep_global = make();
  s.sep_slice = make();
  s.sep_row = make();
  return s;
}

template <typename T>
struct AssembledSequence {
  ag::Var<T> tokens;  // [T, D]
  std::vector<Span> layout;
};

// Closed form of the assembled length.
inline int64_t count_tokens(int64_t m, int64_t n, int64_t lowres_len,
                            int64_t slice_len, bool use_separators) {
  int64_t t = lowres_len + m * n * slice_len;
  if (use_separators) t += 1 + m * (n - 1) + m;
  return t;
}

inline int64_t count_tokens(const GridSpec& grid, int64_t lowres_len,
                            int64_t slice_len, bool use_separators) {
  return count_tokens(grid.m, grid.n, lowres_len, slice_len, use_separators);
}

// Sequence order: [lowres] [sep_global] then per slice row:
// slice, sep_slice, slice, ..., slice, sep_row. Separators are dropped
// entirely when use_separators is false.
template <typename T>
AssembledSequence<T> assemble(const ag::Var<T>& lowres,
                              const std::vector<ag::Var<T>>& slices,
                              const GridSpec& grid, const SeparatorSet<T>& seps,
                              bool use_separators) {
  if (static_cast<int64_t>(slices.size()) != grid.m * grid.n)
    throw std::invalid_argument("assemble: expected " + std::to_string(grid.m * grid.n) +
                                " slices, got " + std::to_string(slices.size()));
  const int64_t d = lowres.value().dim(1);
  std::vector<ag::Var<T>> parts;
  std::vector<Span> layout;
  int64_t offset = 0;
  auto push = [&](const ag::Var<T>& v, SpanTag tag, int64_t slice_index) {
    parts.push_back(v);
    layout.push_back({tag, offset, v.value().dim(0), slice_index});
    offset += v.value().dim(0);
  };
  auto sep_row_vec = [&](const ag::Var<T>& s) { return ag::reshape(s, {int64_t(1), d}); };

  push(lowres, SpanTag::lowres, -1);
  if (use_separators) push(sep_row_vec(seps.sep_global), SpanTag::sep_global, -1);
  for (int64_t row = 0; row < grid.m; ++row) {
    for (int64_t col = 0; col < grid.n; ++col) {
      const int64_t k = row * grid.n + col;
      push(slices[static_cast<size_t>(k)], SpanTag::slice, k);
      if (use_separators && col + 1 < grid.n)
        push(sep_row_vec(seps.sep_slice), SpanTag::sep_slice, -1);
    }
    if (use_separators) push(sep_row_vec(seps.sep_row), SpanTag::sep_row, -1);
  }
  return AssembledSequence<T>{ag::concat_rows(parts), std::move(layout)};
}

std::string layout_to_json(const std::vector<Span>& layout);
std::vector<Span> layout_from_json(const std::string& json_text);

}  // namespace hires
