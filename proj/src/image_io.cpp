#include "fusion/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fusion {

namespace {

double native_max(int bit_depth) { return bit_depth == 16 ? 65535.0 : 255.0; }

std::uint16_t quantize(double v, int bit_depth) {
    const double m = native_max(bit_depth);
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * m));
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

IrSequence IrRaw::to_sequence() const {
    IrSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(frame_count));
    const double m = native_max(bit_depth);
    const Index plane = height * width;
    for (Index f = 0; f < frame_count; ++f) {
        Eigen::MatrixXd frame(height, width);
        if (bit_depth == 16) {
            const std::uint8_t* src = bytes.data() + 2 * f * plane;
            for (Index r = 0; r < height; ++r) {
                for (Index c = 0; c < width; ++c) {
                    const std::size_t i = 2 * static_cast<std::size_t>(r * width + c);
                    frame(r, c) = double(std::uint16_t(src[i]) | std::uint16_t(src[i + 1]) << 8) / m;
                }
            }
        } else {
            const std::uint8_t* src = bytes.data() + f * plane;
            for (Index r = 0; r < height; ++r) {
                for (Index c = 0; c < width; ++c) frame(r, c) = double(src[r * width + c]) / m;
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

void save_ir_raw(const std::string& path, const IrRaw& raw) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_ir_raw: cannot write " + path);
    write_u32_le(out, raw.bit_depth == 16 ? kIrRawMagic16 : kIrRawMagic8);
    write_u32_le(out, static_cast<std::uint32_t>(raw.height));
    write_u32_le(out, static_cast<std::uint32_t>(raw.width));
    write_u32_le(out, static_cast<std::uint32_t>(raw.frame_count));
    out.write(reinterpret_cast<const char*>(raw.bytes.data()),
              static_cast<std::streamsize>(raw.bytes.size()));
    if (!out) throw std::runtime_error("save_ir_raw: write failed for " + path);
}

IrRaw load_ir_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_ir_raw: cannot open " + path);
    IrRaw raw;
    const std::uint32_t magic = read_u32_le(in);
    if (magic == kIrRawMagic8) {
        raw.bit_depth = 8;
    } else if (magic == kIrRawMagic16) {
        raw.bit_depth = 16;
    } else {
        throw std::runtime_error("load_ir_raw: " + path + " is not a packed IR file");
    }
    raw.height = read_u32_le(in);
    raw.width = read_u32_le(in);
    raw.frame_count = read_u32_le(in);
    if (!in || raw.height < 1 || raw.width < 1 || raw.frame_count < 1) {
        throw std::runtime_error("load_ir_raw: corrupt header in " + path);
    }
    const std::size_t expect = static_cast<std::size_t>(raw.height * raw.width * raw.frame_count) *
                               (raw.bit_depth == 16 ? 2 : 1);
    raw.bytes.resize(expect);
    in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(expect));
    if (static_cast<std::size_t>(in.gcount()) != expect) {
        throw std::runtime_error("load_ir_raw: truncated payload in " + path);
    }
    return raw;
}

void save_pgm(const std::string& path, const Eigen::MatrixXd& image, int bit_depth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm: cannot write " + path);
    out << "P5\n" << image.cols() << " " << image.rows() << "\n"
        << (bit_depth == 16 ? 65535 : 255) << "\n";
    for (Index r = 0; r < image.rows(); ++r) {
        for (Index c = 0; c < image.cols(); ++c) {
            const std::uint16_t v = quantize(image(r, c), bit_depth);
            if (bit_depth == 16) {
                // PGM stores 16-bit big-endian
                out.put(static_cast<char>(v >> 8));
                out.put(static_cast<char>(v & 0xff));
            } else {
                out.put(static_cast<char>(v));
            }
        }
    }
    if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

void load_pgm(const std::string& path, Eigen::MatrixXd& image, int* bit_depth) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("load_pgm: " + path + " is not binary PGM");
    long w = 0, h = 0, maxval = 0;
    auto next_token = [&](long& v) {
        // skip whitespace and comment lines
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        in >> v;
    };
    next_token(w);
    next_token(h);
    next_token(maxval);
    in.get();  // the single whitespace before payload
    if (!in || w < 1 || h < 1 || (maxval != 255 && maxval != 65535)) {
        throw std::runtime_error("load_pgm: unsupported header in " + path);
    }
    const int depth = maxval == 65535 ? 16 : 8;
    if (bit_depth) *bit_depth = depth;
    image.resize(h, w);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * (depth == 16 ? 2 : 1));
    for (long r = 0; r < h; ++r) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!in) throw std::runtime_error("load_pgm: truncated payload in " + path);
        for (long c = 0; c < w; ++c) {
            if (depth == 16) {
                const std::uint16_t v = std::uint16_t(row[2 * c]) << 8 | std::uint16_t(row[2 * c + 1]);
                image(r, c) = double(v) / 65535.0;
            } else {
                image(r, c) = double(row[c]) / 255.0;
            }
        }
    }
}

void load_png_gray(const std::string& path, Eigen::MatrixXd& image, int* bit_depth) {
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("load_png_gray: cannot open " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("load_png_gray: libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("load_png_gray: failed to decode " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    const int color = png_get_color_type(ctx.png, ctx.info);
    int depth = png_get_bit_depth(ctx.png, ctx.info);

    if (color != PNG_COLOR_TYPE_GRAY) {
        throw std::runtime_error("load_png_gray: " + path + " is not grayscale");
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(ctx.png);
        depth = 8;
    }
    if (depth == 16) png_set_swap(ctx.png);  // big-endian on the wire
    png_read_update_info(ctx.png, ctx.info);
    if (bit_depth) *bit_depth = depth;

    const double m = native_max(depth);
    image.resize(h, w);
    std::vector<std::uint8_t> row(png_get_rowbytes(ctx.png, ctx.info));
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (png_uint_32 c = 0; c < w; ++c) {
            if (depth == 16) {
                const std::uint16_t v = std::uint16_t(row[2 * c]) | std::uint16_t(row[2 * c + 1]) << 8;
                image(r, c) = double(v) / m;
            } else {
                image(r, c) = double(row[c]) / m;
            }
        }
    }
    png_read_end(ctx.png, nullptr);
}

void save_png_gray(const std::string& path, const Eigen::MatrixXd& image) {
    PngWriteCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("save_png_gray: cannot write " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("save_png_gray: libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("save_png_gray: failed to encode " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(image.cols()),
                 static_cast<png_uint_32>(image.rows()), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.cols()));
    for (Index r = 0; r < image.rows(); ++r) {
        for (Index c = 0; c < image.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(quantize(image(r, c), 8));
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

void save_png_rgb(const std::string& path, const Eigen::MatrixXd& r, const Eigen::MatrixXd& g,
                  const Eigen::MatrixXd& b) {
    if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() ||
        r.cols() != b.cols()) {
        throw std::invalid_argument("save_png_rgb: channel extents differ");
    }
    PngWriteCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("save_png_rgb: cannot write " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("save_png_rgb: libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("save_png_rgb: failed to encode " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(r.cols()),
                 static_cast<png_uint_32>(r.rows()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(3 * r.cols()));
    for (Index y = 0; y < r.rows(); ++y) {
        for (Index x = 0; x < r.cols(); ++x) {
            row[static_cast<std::size_t>(3 * x + 0)] = static_cast<std::uint8_t>(quantize(r(y, x), 8));
            row[static_cast<std::size_t>(3 * x + 1)] = static_cast<std::uint8_t>(quantize(g(y, x), 8));
            row[static_cast<std::size_t>(3 * x + 2)] = static_cast<std::uint8_t>(quantize(b(y, x), 8));
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

IrRaw load_ir(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            const std::string ext = entry.path().extension().string();
            if (ext == ".png" || ext == ".pgm") files.push_back(entry.path().string());
        }
        if (files.empty()) {
            throw std::runtime_error("load_ir: no .png/.pgm frames under " + path);
        }
        std::sort(files.begin(), files.end());

        IrSequence seq;
        int depth = 8;
        for (const auto& file : files) {
            Eigen::MatrixXd frame;
            int frame_depth = 8;
            if (file.ends_with(".png")) {
                load_png_gray(file, frame, &frame_depth);
            } else {
                load_pgm(file, frame, &frame_depth);
            }
            if (!seq.frames.empty() && (frame.rows() != seq.height() || frame.cols() != seq.width())) {
                throw std::runtime_error("load_ir: frame extents vary in " + path);
            }
            depth = frame_depth;
            seq.frames.push_back(std::move(frame));
        }
        return quantize_sequence(seq, depth);
    }
    if (path.ends_with(".ir") || path.ends_with(".raw")) {
        return load_ir_raw(path);
    }
    throw std::runtime_error("load_ir: cannot detect format of " + path +
                             " (expected a directory of frames or a .ir/.raw file)");
}

IrRaw quantize_sequence(const IrSequence& seq, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw std::invalid_argument("quantize_sequence: bit depth must be 8 or 16");
    }
    IrRaw raw;
    raw.height = seq.height();
    raw.width = seq.width();
    raw.frame_count = seq.frame_count();
    raw.bit_depth = bit_depth;
    const Index plane = raw.height * raw.width;
    raw.bytes.resize(static_cast<std::size_t>(raw.frame_count * plane) * (bit_depth == 16 ? 2 : 1));
    for (Index f = 0; f < raw.frame_count; ++f) {
        const auto& frame = seq.frames[static_cast<std::size_t>(f)];
        for (Index r = 0; r < raw.height; ++r) {
            for (Index c = 0; c < raw.width; ++c) {
                const std::uint16_t v = quantize(frame(r, c), bit_depth);
                const std::size_t i = static_cast<std::size_t>(f * plane + r * raw.width + c);
                if (bit_depth == 16) {
                    raw.bytes[2 * i] = static_cast<std::uint8_t>(v & 0xff);
                    raw.bytes[2 * i + 1] = static_cast<std::uint8_t>(v >> 8);
                } else {
                    raw.bytes[i] = static_cast<std::uint8_t>(v);
                }
            }
        }
    }
    return raw;
}

}  // namespace fusion
