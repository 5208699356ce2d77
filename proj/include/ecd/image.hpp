#pragma once

// Binary PPM (P6, maxval 255) images held as interleaved RGB doubles in [0, 1].

#include "ecd/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace ecd {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major, 3 channels

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0.0) {
        if (w < 1 || h < 1) throw Error("image dimensions must be positive");
    }

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    [[nodiscard]] double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    void validate() const {
        if (width < 1 || height < 1 || pixels.size() != size() * 3) throw Error("image buffer does not match its dimensions");
    }
};

namespace detail {

class PpmReader {
public:
    explicit PpmReader(std::vector<unsigned char> bytes) : b_(std::move(bytes)) {}

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > 1'000'000'000L) fail(std::string(what) + " is too large", start);
            ++pos_;
        }
        if (pos_ == start) fail(std::string("expected ") + what, start);
        return static_cast<int>(v);
    }

    [[noreturn]] static void fail(const std::string& msg, std::size_t offset) {
        throw Error("ppm: " + msg + " at byte offset " + std::to_string(offset));
    }

    std::vector<unsigned char> b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Image decode_ppm(std::vector<unsigned char> bytes) {
    detail::PpmReader r(std::move(bytes));
    if (r.b_.size() < 2 || r.b_[0] != 'P') detail::PpmReader::fail("not a PPM file", 0);
    if (r.b_[1] != '6') {
        if (r.b_[1] == '3') throw Error("ppm: unsupported format P3 (ASCII); only binary P6 is supported");
        detail::PpmReader::fail("unsupported magic number P" + std::string(1, static_cast<char>(r.b_[1])), 1);
    }
    r.pos_ = 2;
    const int w = r.number("width");
    const int h = r.number("height");
    const std::size_t maxval_at = r.pos_;
    const int maxval = r.number("maxval");
    if (w < 1 || h < 1) detail::PpmReader::fail("non-positive image dimensions", maxval_at);
    if (maxval != 255) detail::PpmReader::fail("maxval must be 255, got " + std::to_string(maxval), maxval_at);
    if (r.pos_ >= r.b_.size() || !std::isspace(r.b_[r.pos_])) detail::PpmReader::fail("missing whitespace after header", r.pos_);
    ++r.pos_;
    Image img(w, h);
    const std::size_t need = img.pixels.size();
    if (r.b_.size() - r.pos_ < need)
        detail::PpmReader::fail("truncated payload (" + std::to_string(r.b_.size() - r.pos_) + " of " +
                                    std::to_string(need) + " bytes)",
                                r.b_.size());
    for (std::size_t i = 0; i < need; ++i) img.pixels[i] = r.b_[r.pos_ + i] / 255.0;
    return img;
}

inline Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ppm(std::move(bytes));
}

inline std::uint8_t to_byte(double v) {
    const double c = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(c);
}

inline std::vector<unsigned char> encode_ppm(const Image& img) {
    img.validate();
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + img.pixels.size());
    for (const double v : img.pixels) out.push_back(to_byte(v));
    return out;
}

inline void save_image(const Image& img, const std::string& path) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

}  // namespace ecd
