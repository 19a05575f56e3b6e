#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Raster codecs
//
// - load_image:      8-bit RGB from PNG (palette/gray/alpha expanded) or PPM P6
// - save_image_png:  8-bit RGB PNG (overlay output)
// - save/load_label_map: single-channel 16-bit PNG, lossless; the ignore value
//   travels in a tEXt chunk so round trips preserve it
// - class_color / save_overlay: deterministic hash palette, 50% alpha blend
// ============================================================================

namespace pancut {

namespace detail {

constexpr const char* kIgnoreTextKey = "ignore-value";

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void open_png_read(PngReader& r, const std::string& path) {
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw FormatError("cannot open image: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = r.png ? png_create_info_struct(r.png) : nullptr;
    if (!r.png || !r.info) throw FormatError("libpng init failed for " + path);
    std::rewind(r.fp);
}

inline bool is_png_path(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image: " + path);
    unsigned char sig[8] = {0};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0;
}

inline Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image: " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        int ch;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {  // comment to end of line
                while ((ch = in.get()) != EOF && ch != '\n') {}
                continue;
            }
            if (!std::isspace(ch)) {
                tok.push_back(static_cast<char>(ch));
                while ((ch = in.get()) != EOF && !std::isspace(ch))
                    tok.push_back(static_cast<char>(ch));
                return tok;
            }
        }
        throw FormatError("truncated PPM header in " + path);
    };
    if (next_token() != "P6") throw FormatError("not a binary PPM (P6): " + path);
    Image img;
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (img.width <= 0 || img.height <= 0)
        throw FormatError("bad PPM dimensions in " + path);
    if (maxval != 255)
        throw FormatError("unsupported PPM bit depth (maxval " + std::to_string(maxval) +
                          ") in " + path);
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
        throw FormatError("truncated PPM payload in " + path);
    return img;
}

} // namespace detail

/// Decode an 8-bit RGB image from PNG or binary PPM.
inline Image load_image(const std::string& path) {
    if (!detail::is_png_path(path)) return detail::load_ppm(path);

    detail::PngReader r;
    detail::open_png_read(r, path);
    if (setjmp(png_jmpbuf(r.png)))
        throw FormatError("PNG decode failed for " + path);
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);

    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (bit_depth > 8)
        throw FormatError("unsupported PNG bit depth " + std::to_string(bit_depth) +
                          " for image input: " + path);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);

    Image img;
    img.width = static_cast<int>(png_get_image_width(r.png, r.info));
    img.height = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_rowbytes(r.png, r.info) != static_cast<std::size_t>(img.width) * 3)
        throw FormatError("unexpected PNG row layout in " + path);
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return img;
}

/// Encode an 8-bit RGB PNG.
inline void save_image_png(const Image& img, const std::string& path) {
    detail::PngWriter w;
    w.fp = std::fopen(path.c_str(), "wb");
    if (!w.fp) throw FormatError("cannot write image: " + path);
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    w.info = w.png ? png_create_info_struct(w.png) : nullptr;
    if (!w.png || !w.info) throw FormatError("libpng init failed for " + path);
    if (setjmp(png_jmpbuf(w.png)))
        throw FormatError("PNG encode failed for " + path);
    png_init_io(w.png, w.fp);
    png_set_IHDR(w.png, w.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.rgb.data() +
                                        static_cast<std::size_t>(y) * img.width * 3);
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
}

/// Write a label raster as single-channel 16-bit PNG (lossless round trip).
inline void save_label_map(const LabelMap& map, const std::string& path) {
    if (map.height <= 0 || map.width <= 0)
        throw ShapeError("label map has empty dimensions");
    if (map.labels.size() != static_cast<std::size_t>(map.height) * map.width)
        throw ShapeError("label map buffer does not match its dimensions");
    std::vector<std::uint16_t> samples(map.labels.size());
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        const std::int32_t v = map.labels[i];
        if (v < 0 || v > 0xffff)
            throw RangeError("label " + std::to_string(v) + " does not fit in 16 bits");
        samples[i] = static_cast<std::uint16_t>(v);
    }

    detail::PngWriter w;
    w.fp = std::fopen(path.c_str(), "wb");
    if (!w.fp) throw FormatError("cannot write label map: " + path);
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    w.info = w.png ? png_create_info_struct(w.png) : nullptr;
    if (!w.png || !w.info) throw FormatError("libpng init failed for " + path);
    if (setjmp(png_jmpbuf(w.png)))
        throw FormatError("PNG encode failed for " + path);
    png_init_io(w.png, w.fp);
    png_set_IHDR(w.png, w.info, map.width, map.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

    const std::string ignore_str = std::to_string(map.ignore_value);
    png_text text;
    std::memset(&text, 0, sizeof(text));
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>(detail::kIgnoreTextKey);
    text.text = const_cast<char*>(ignore_str.c_str());
    text.text_length = ignore_str.size();
    png_set_text(w.png, w.info, &text, 1);

    png_write_info(w.png, w.info);
    png_set_swap(w.png);  // host is little-endian, PNG samples are big-endian
    std::vector<png_bytep> rows(map.height);
    for (int y = 0; y < map.height; ++y)
        rows[y] = reinterpret_cast<png_bytep>(samples.data() +
                                              static_cast<std::size_t>(y) * map.width);
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
}

/// Inverse of save_label_map.
inline LabelMap load_label_map(const std::string& path) {
    detail::PngReader r;
    detail::open_png_read(r, path);
    if (setjmp(png_jmpbuf(r.png)))
        throw FormatError("PNG decode failed for " + path);
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);

    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (color_type != PNG_COLOR_TYPE_GRAY)
        throw FormatError("label map must be single-channel gray PNG: " + path);

    LabelMap map;
    map.width = static_cast<int>(png_get_image_width(r.png, r.info));
    map.height = static_cast<int>(png_get_image_height(r.png, r.info));

    png_textp texts = nullptr;
    int num_text = 0;
    png_get_text(r.png, r.info, &texts, &num_text);
    for (int i = 0; i < num_text; ++i) {
        if (texts[i].key && std::strcmp(texts[i].key, detail::kIgnoreTextKey) == 0)
            map.ignore_value = std::stoi(texts[i].text);
    }

    map.labels.resize(static_cast<std::size_t>(map.width) * map.height);
    if (bit_depth == 16) {
        png_set_swap(r.png);
        png_read_update_info(r.png, r.info);
        std::vector<std::uint16_t> samples(map.labels.size());
        std::vector<png_bytep> rows(map.height);
        for (int y = 0; y < map.height; ++y)
            rows[y] = reinterpret_cast<png_bytep>(samples.data() +
                                                  static_cast<std::size_t>(y) * map.width);
        png_read_image(r.png, rows.data());
        png_read_end(r.png, nullptr);
        for (std::size_t i = 0; i < samples.size(); ++i) map.labels[i] = samples[i];
    } else if (bit_depth == 8) {
        // tolerate plain 8-bit gray ground truth from other toolchains
        std::vector<std::uint8_t> samples(map.labels.size());
        std::vector<png_bytep> rows(map.height);
        for (int y = 0; y < map.height; ++y)
            rows[y] = samples.data() + static_cast<std::size_t>(y) * map.width;
        png_read_image(r.png, rows.data());
        png_read_end(r.png, nullptr);
        for (std::size_t i = 0; i < samples.size(); ++i) map.labels[i] = samples[i];
    } else {
        throw FormatError("unsupported label-map bit depth " + std::to_string(bit_depth) +
                          " in " + path);
    }
    return map;
}

// ---------------------------------------------------------------------------
// Overlay palette
// ---------------------------------------------------------------------------

constexpr std::uint64_t kDefaultPaletteSeed = 0x9e3779b97f4a7c15ull;

/// Deterministic per-class color: splitmix64 of (seed, class index).
inline void class_color(std::int32_t label, std::uint64_t seed, std::uint8_t rgb[3]) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(label) + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    rgb[0] = static_cast<std::uint8_t>(x & 0xff);
    rgb[1] = static_cast<std::uint8_t>((x >> 8) & 0xff);
    rgb[2] = static_cast<std::uint8_t>((x >> 16) & 0xff);
}

/// Blend the class palette over the image at 50% alpha and write a PNG.
inline void save_overlay(const Image& img, const LabelMap& pred, const std::string& path,
                         std::uint64_t palette_seed = kDefaultPaletteSeed) {
    if (img.height != pred.height || img.width != pred.width)
        throw ShapeError("overlay: image is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + " but prediction is " +
                         std::to_string(pred.width) + "x" + std::to_string(pred.height));
    Image out;
    out.height = img.height;
    out.width = img.width;
    out.rgb.resize(img.rgb.size());
    for (std::size_t p = 0; p < pred.labels.size(); ++p) {
        std::uint8_t pal[3];
        class_color(pred.labels[p], palette_seed, pal);
        for (int c = 0; c < 3; ++c) {
            const double blended = (img.rgb[p * 3 + c] + pal[c]) / 2.0;
            out.rgb[p * 3 + c] = static_cast<std::uint8_t>(blended + 0.5);
        }
    }
    save_image_png(out, path);
}

} // namespace pancut
