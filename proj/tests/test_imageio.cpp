#include <doctest.h>

#include <fstream>

#include "fusion/image_io.hpp"
#include "testutil.hpp"

using namespace fusion;

namespace {

IrSequence random_sequence(Index frames, Index h, Index w, std::uint64_t seed) {
    Rng rng(seed);
    IrSequence seq;
    for (Index f = 0; f < frames; ++f) {
        seq.frames.push_back(Eigen::MatrixXd::NullaryExpr(h, w, [&] { return rng.uniform(); }));
    }
    return seq;
}

}  // namespace

TEST_CASE("packed raw: 8-bit round trip") {
    testutil::TempDir dir("irraw");
    auto seq = random_sequence(5, 24, 32, 1);
    auto raw = quantize_sequence(seq, 8);
    const std::string path = (dir.path() / "sample.ir").string();
    save_ir_raw(path, raw);
    auto loaded = load_ir_raw(path);
    CHECK(loaded.bit_depth == 8);
    CHECK(loaded.height == 24);
    CHECK(loaded.width == 32);
    CHECK(loaded.frame_count == 5);
    CHECK(loaded.bytes == raw.bytes);
    auto back = loaded.to_sequence();
    for (Index f = 0; f < 5; ++f) {
        CHECK((back.frames[std::size_t(f)] - seq.frames[std::size_t(f)]).cwiseAbs().maxCoeff() <=
              0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("packed raw: 16-bit round trip through the generic loader") {
    testutil::TempDir dir("irraw16");
    auto seq = random_sequence(3, 16, 20, 2);
    const std::string path = (dir.path() / "sample.ir").string();
    save_ir_raw(path, quantize_sequence(seq, 16));
    auto loaded = load_ir(path);
    CHECK(loaded.bit_depth == 16);
    auto back = loaded.to_sequence();
    for (Index f = 0; f < 3; ++f) {
        CHECK((back.frames[std::size_t(f)] - seq.frames[std::size_t(f)]).cwiseAbs().maxCoeff() <=
              0.5 / 65535.0 + 1e-12);
    }
}

TEST_CASE("packed raw: truncated and foreign files are rejected") {
    testutil::TempDir dir("irbad");
    const std::string path = (dir.path() / "bad.ir").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "not an ir file at all";
    }
    CHECK_THROWS_AS(load_ir_raw(path), std::runtime_error);

    auto seq = random_sequence(2, 8, 8, 3);
    const std::string trunc = (dir.path() / "trunc.ir").string();
    save_ir_raw(trunc, quantize_sequence(seq, 8));
    std::filesystem::resize_file(trunc, 40);
    CHECK_THROWS_AS(load_ir_raw(trunc), std::runtime_error);
}

TEST_CASE("pgm: 8 and 16 bit round trips") {
    testutil::TempDir dir("pgm");
    Rng rng(4);
    Eigen::MatrixXd img = Eigen::MatrixXd::NullaryExpr(12, 17, [&] { return rng.uniform(); });
    for (int depth : {8, 16}) {
        const std::string path = (dir.path() / ("img" + std::to_string(depth) + ".pgm")).string();
        save_pgm(path, img, depth);
        Eigen::MatrixXd back;
        int loaded_depth = 0;
        load_pgm(path, back, &loaded_depth);
        CHECK(loaded_depth == depth);
        const double tol = 0.5 / (depth == 16 ? 65535.0 : 255.0) + 1e-12;
        CHECK((back - img).cwiseAbs().maxCoeff() <= tol);
    }
}

TEST_CASE("png: grayscale write/read round trip") {
    testutil::TempDir dir("png");
    Rng rng(5);
    Eigen::MatrixXd img = Eigen::MatrixXd::NullaryExpr(20, 14, [&] { return rng.uniform(); });
    const std::string path = (dir.path() / "img.png").string();
    save_png_gray(path, img);
    Eigen::MatrixXd back;
    int depth = 0;
    load_png_gray(path, back, &depth);
    CHECK(depth == 8);
    CHECK(back.rows() == 20);
    CHECK(back.cols() == 14);
    CHECK((back - img).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("directory loader: sorted pgm frames become one sequence") {
    testutil::TempDir dir("frames");
    auto seq = random_sequence(4, 10, 10, 6);
    for (Index f = 0; f < 4; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03lld.pgm", static_cast<long long>(f));
        save_pgm((dir.path() / name).string(), seq.frames[std::size_t(f)], 8);
    }
    auto raw = load_ir(dir.path().string());
    CHECK(raw.frame_count == 4);
    auto back = raw.to_sequence();
    for (Index f = 0; f < 4; ++f) {
        CHECK((back.frames[std::size_t(f)] - seq.frames[std::size_t(f)]).cwiseAbs().maxCoeff() <=
              0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("directory loader: empty directory is an error") {
    testutil::TempDir dir("empty");
    CHECK_THROWS_AS(load_ir(dir.path().string()), std::runtime_error);
}
