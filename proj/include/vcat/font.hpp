#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vcat/image.hpp"

namespace vcat::font {

// 5x7 monospace glyphs in a 6x8 cell (one pixel of tracking and leading).
// Lowercase letters render as uppercase; see charset() for coverage.
constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kCellW = 6;
constexpr int kCellH = 8;

bool has_glyph(char c);
/// Seven rows, low 5 bits each (bit 4 = leftmost column). Throws on
/// unsupported characters.
const std::array<uint8_t, 7>& glyph_rows(char c);
std::string charset();

struct TextSize {
    int width = 0;
    int height = 0;
};
TextSize measure(const std::string& text, int scale);

/// Draws ink pixels of one line of text; background pixels are untouched.
void draw_text(ImageF& img, int y, int x, const std::string& text, int scale,
               const std::array<float, 3>& ink);

/// Renders one line onto a fresh background-filled image of exactly the
/// measured size.
ImageF render_line(const std::string& text, int scale, const std::array<float, 3>& ink,
                   const std::array<float, 3>& background);

}  // namespace vcat::font
