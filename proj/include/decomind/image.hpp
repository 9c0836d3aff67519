#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "decomind/errors.hpp"

namespace decomind {

using Bytes = std::vector<std::uint8_t>;

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interleaved 8-bit raster, 1 (gray/mask), 3 (RGB) or 4 (RGBA) channels,
/// row-major with no padding.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    Bytes pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

    bool empty() const noexcept { return width <= 0 || height <= 0; }
    bool has_alpha() const noexcept { return channels == 4; }

    std::size_t offset(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels);
    }
    std::uint8_t* at(int x, int y) noexcept { return pixels.data() + offset(x, y); }
    const std::uint8_t* at(int x, int y) const noexcept { return pixels.data() + offset(x, y); }

    Rgb rgb(int x, int y) const noexcept {
        const auto* p = at(x, y);
        if (channels < 3) return {p[0], p[0], p[0]};
        return {p[0], p[1], p[2]};
    }
    void set_rgb(int x, int y, Rgb c) noexcept {
        auto* p = at(x, y);
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

inline Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path.string());
}

inline Bytes encode_png(const Image& img) {
    if (img.empty()) throw Error("cannot encode an empty image");
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(img.width);
    desc.height = static_cast<png_uint_32>(img.height);
    switch (img.channels) {
        case 1: desc.format = PNG_FORMAT_GRAY; break;
        case 3: desc.format = PNG_FORMAT_RGB; break;
        case 4: desc.format = PNG_FORMAT_RGBA; break;
        default: throw Error("unsupported channel count " + std::to_string(img.channels));
    }
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&desc, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        throw Error(std::string("png encode failed: ") + desc.message);
    }
    Bytes out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        png_image_free(&desc);
        throw Error(std::string("png encode failed: ") + desc.message);
    }
    out.resize(size);
    return out;
}

inline Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
        throw Error(std::string("png decode failed: ") + desc.message);
    }
    const bool alpha = (desc.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    const bool color = (desc.format & PNG_FORMAT_FLAG_COLOR) != 0;
    int channels = alpha ? 4 : 3;
    if (!color && !alpha) channels = 1;
    desc.format = channels == 4 ? PNG_FORMAT_RGBA : channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    Image img(static_cast<int>(desc.width), static_cast<int>(desc.height), channels);
    if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&desc);
        throw Error(std::string("png decode failed: ") + desc.message);
    }
    return img;
}

namespace detail {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_jump(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

extern "C" inline void jpeg_silent_output(j_common_ptr) {}

}  // namespace detail

inline Image decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    detail::JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = detail::jpeg_error_exit_jump;
    err.base.output_message = detail::jpeg_silent_output;
    // Declared before setjmp so nothing with a destructor is skipped by longjmp.
    Image img;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(std::string("jpeg decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * static_cast<std::size_t>(img.width) * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

inline bool looks_like_png(std::span<const std::uint8_t> b) {
    return b.size() >= 8 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G';
}

inline bool looks_like_jpeg(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

/// Decodes PNG or JPEG by content sniffing. Throws Error for anything else.
inline Image decode_image(std::span<const std::uint8_t> bytes) {
    if (looks_like_png(bytes)) return decode_png(bytes);
    if (looks_like_jpeg(bytes)) return decode_jpeg(bytes);
    throw Error("unrecognized image format");
}

inline Image load_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_image(bytes);
}

inline void save_png(const std::filesystem::path& path, const Image& img) { write_file_bytes(path, encode_png(img)); }

/// Nearest-neighbour resample with integer source-coordinate mapping, so
/// the result is bit-stable across platforms.
inline Image resample_nearest(const Image& src, int width, int height) {
    if (src.empty() || width <= 0 || height <= 0) throw Error("resample of degenerate image");
    Image dst(width, height, src.channels);
    const auto c = static_cast<std::size_t>(src.channels);
    for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>((static_cast<long long>(y) * src.height) / height);
        for (int x = 0; x < width; ++x) {
            const int sx = static_cast<int>((static_cast<long long>(x) * src.width) / width);
            const auto* s = src.at(sx, sy);
            auto* d = dst.at(x, y);
            for (std::size_t k = 0; k < c; ++k) d[k] = s[k];
        }
    }
    return dst;
}

}  // namespace decomind
