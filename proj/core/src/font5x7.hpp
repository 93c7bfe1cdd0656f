#pragma once

#include <cstdint>

namespace hires::entitygrid {

// 5x7 bitmap glyphs, one byte per row, low 5 bits used (MSB of the 5 is the
// leftmost column). Covers A-Z, 0-9, '.', '-' and space; lowercase maps to
// uppercase.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

const Glyph* find_glyph(char c);

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

}  // namespace hires::entitygrid
