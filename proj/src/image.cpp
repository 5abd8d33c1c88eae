#include "airshape/image.hpp"

#include <cmath>
#include <fstream>

#include "airshape/errors.hpp"

namespace airshape {

BinaryImage threshold(const RealImage& img, double level) {
    BinaryImage out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i] >= level ? 1 : 0;
    return out;
}

RealImage to_real(const BinaryImage& img) {
    RealImage out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i] ? 1.0 : 0.0;
    return out;
}

void write_pgm(const RealImage& img, const std::filesystem::path& path, const std::string& comment) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << "P5\n";
    if (!comment.empty()) f << "# " << comment << "\n";
    f << img.w << " " << img.h << "\n255\n";
    std::vector<uint8_t> bytes(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) {
        double v = img.px[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        bytes[i] = uint8_t(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

namespace {

// Reads the next whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(char(c));
    }
    return tok;
}

} // namespace

RealImage read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    if (next_token(f) != "P5") throw IoError("not a P5 PGM: " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(f));
        h = std::stoi(next_token(f));
        maxval = std::stoi(next_token(f));
    } catch (const std::exception&) {
        throw IoError("bad PGM header: " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw IoError("bad PGM header: " + path.string());

    RealImage img(h, w);
    std::vector<uint8_t> bytes(size_t(h) * size_t(w));
    f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (size_t(f.gcount()) != bytes.size()) throw IoError("truncated PGM: " + path.string());
    for (size_t i = 0; i < bytes.size(); ++i) img.px[i] = double(bytes[i]) / double(maxval);
    return img;
}

} // namespace airshape
