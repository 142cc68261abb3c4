#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dualpost/error.hpp"

namespace dualpost {

// Embedding encoders behind one interface: the local pair is deterministic
// and dependency-free (the test/offline default); remote encoders speaking an
// embeddings endpoint are production parity and live in remote_backends.hpp.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
    virtual int dim() const = 0;
};

class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;
    virtual std::vector<double> embed_image(const std::string& observation_ref) const = 0;
    virtual int dim() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const char* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ULL) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline void l2_normalize(std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) return;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
}

}  // namespace detail

// Hashed character trigram counts, dim 256, L2-normalized.
class LocalTextEncoder final : public TextEncoder {
public:
    static constexpr int kDim = 256;

    std::vector<double> embed_text(const std::string& text) const override {
        if (text.empty()) throw InvalidArgument("embed_text: empty input");
        std::vector<double> v(kDim, 0.0);
        const std::string padded = "^" + text + "$";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            v[detail::fnv1a(padded.data() + i, 3) % kDim] += 1.0;
        }
        if (padded.size() < 3) v[detail::fnv1a(padded) % kDim] += 1.0;
        detail::l2_normalize(v);
        return v;
    }

    int dim() const override { return kDim; }
};

namespace detail {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major, [0,1]
};

// PGM (P2/P5) reader; anything else counts as unreadable.
inline GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("unreadable image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P5") {
        throw IoError("unreadable image (not PGM): " + path);
    }
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comments
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string comment;
                std::getline(in, comment);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = 0;
        if (!(in >> v)) throw IoError("unreadable image (truncated header): " + path);
        return v;
    };
    GrayImage img;
    img.width = static_cast<int>(next_int());
    img.height = static_cast<int>(next_int());
    const long maxval = next_int();
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535) {
        throw IoError("unreadable image (bad header): " + path);
    }
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(n);
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            long v = 0;
            if (!(in >> v)) throw IoError("unreadable image (truncated data): " + path);
            img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    } else {
        in.get();  // single whitespace after maxval
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(n * bytes);
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
            throw IoError("unreadable image (truncated data): " + path);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const long v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
            img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    }
    return img;
}

}  // namespace detail

// 8x8 grid of patch means over the grayscale image, dim 64, L2-normalized.
class LocalImageEncoder final : public ImageEncoder {
public:
    static constexpr int kGrid = 8;
    static constexpr int kDim = kGrid * kGrid;

    std::vector<double> embed_image(const std::string& observation_ref) const override {
        if (observation_ref.empty()) throw InvalidArgument("embed_image: empty input");
        const detail::GrayImage img = detail::load_pgm(observation_ref);
        std::vector<double> v(kDim, 0.0);
        std::vector<std::size_t> counts(kDim, 0);
        for (int y = 0; y < img.height; ++y) {
            const int gy = y * kGrid / img.height;
            for (int x = 0; x < img.width; ++x) {
                const int gx = x * kGrid / img.width;
                v[gy * kGrid + gx] += img.pixels[static_cast<std::size_t>(y) * img.width + x];
                counts[gy * kGrid + gx] += 1;
            }
        }
        for (int i = 0; i < kDim; ++i) {
            if (counts[i] > 0) v[i] /= static_cast<double>(counts[i]);
        }
        detail::l2_normalize(v);
        return v;
    }

    int dim() const override { return kDim; }
};

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace dualpost
