#include "vcat/font.hpp"

#include <cctype>
#include <map>
#include <stdexcept>

namespace vcat::font {

namespace {

// Rows top to bottom; 0b10000 is the leftmost column.
const std::map<char, std::array<uint8_t, 7>> kGlyphs = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'A', {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {'B', {0b11110, 0b10001, 0b11110, 0b10001, 0b10001, 0b10001, 0b11110}},
    {'C', {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110}},
    {'D', {0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110}},
    {'E', {0b11111, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000, 0b11111}},
    {'F', {0b11111, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000, 0b10000}},
    {'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111}},
    {'H', {0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001, 0b10001}},
    {'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'J', {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100}},
    {'K', {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001}},
    {'L', {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111}},
    {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {'N', {0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001}},
    {'O', {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'P', {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000}},
    {'Q', {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101}},
    {'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
    {'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
    {'T', {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100}},
    {'U', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'V', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
    {'W', {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001}},
    {'X', {0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b01010, 0b10001}},
    {'Y', {0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100}},
    {'Z', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111}},
    {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'2', {0b01110, 0b10001, 0b00001, 0b00110, 0b01000, 0b10000, 0b11111}},
    {'3', {0b11111, 0b00010, 0b00100, 0b00110, 0b00001, 0b10001, 0b01110}},
    {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    {'.', {0, 0, 0, 0, 0, 0b00100, 0b00100}},
    {',', {0, 0, 0, 0, 0, 0b00110, 0b01100}},
    {':', {0, 0b00100, 0b00100, 0, 0b00100, 0b00100, 0}},
    {'-', {0, 0, 0, 0b01110, 0, 0, 0}},
    {'$', {0b00100, 0b01111, 0b10100, 0b01110, 0b00101, 0b11110, 0b00100}},
    {'#', {0b01010, 0b01010, 0b11111, 0b01010, 0b11111, 0b01010, 0b01010}},
    {'/', {0b00001, 0b00010, 0b00010, 0b00100, 0b01000, 0b01000, 0b10000}},
    {'%', {0b11001, 0b11010, 0b00010, 0b00100, 0b01000, 0b01011, 0b10011}},
    {'?', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0, 0b00100}},
    {'!', {0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0, 0b00100}},
    {'\'', {0b00100, 0b00100, 0, 0, 0, 0, 0}},
    {'&', {0b01100, 0b10010, 0b10100, 0b01000, 0b10101, 0b10010, 0b01101}},
    {'(', {0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010}},
    {')', {0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000}},
    {'+', {0, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0}},
    {'=', {0, 0, 0b11111, 0, 0b11111, 0, 0}},
    {'*', {0, 0b00100, 0b10101, 0b01110, 0b10101, 0b00100, 0}},
};

char normalize(char c) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
}

}  // namespace

bool has_glyph(char c) { return kGlyphs.count(normalize(c)) > 0; }

const std::array<uint8_t, 7>& glyph_rows(char c) {
    auto it = kGlyphs.find(normalize(c));
    if (it == kGlyphs.end())
        throw std::invalid_argument(std::string("font: unsupported character '") + c + "'");
    return it->second;
}

std::string charset() {
    std::string s;
    for (const auto& [c, _] : kGlyphs) s.push_back(c);
    return s;
}

TextSize measure(const std::string& text, int scale) {
    if (scale < 1) throw std::invalid_argument("font: scale must be >= 1");
    return {static_cast<int>(text.size()) * kCellW * scale, kCellH * scale};
}

void draw_text(ImageF& img, int y, int x, const std::string& text, int scale,
               const std::array<float, 3>& ink) {
    if (text.empty()) throw std::invalid_argument("font: empty text");
    for (size_t ci = 0; ci < text.size(); ++ci) {
        const auto& rows = glyph_rows(text[ci]);
        const int gx = x + static_cast<int>(ci) * kCellW * scale;
        for (int r = 0; r < kGlyphH; ++r)
            for (int col = 0; col < kGlyphW; ++col) {
                if (!(rows[static_cast<size_t>(r)] & (1 << (kGlyphW - 1 - col)))) continue;
                for (int sy = 0; sy < scale; ++sy)
                    for (int sx = 0; sx < scale; ++sx) {
                        int py = y + r * scale + sy;
                        int px = gx + col * scale + sx;
                        if (py < 0 || py >= img.h || px < 0 || px >= img.w) continue;
                        for (int ch = 0; ch < 3; ++ch)
                            img.at(py, px, ch) = ink[static_cast<size_t>(ch)];
                    }
            }
    }
}

ImageF render_line(const std::string& text, int scale, const std::array<float, 3>& ink,
                   const std::array<float, 3>& background) {
    TextSize sz = measure(text, scale);
    ImageF img(sz.height, sz.width, 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = background[static_cast<size_t>(ch)];
    draw_text(img, 0, 0, text, scale, ink);
    return img;
}

}  // namespace vcat::font
