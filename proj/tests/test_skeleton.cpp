#include <doctest.h>

#include <cmath>

#include "fusion/skeleton.hpp"
#include "testutil.hpp"

using namespace fusion;

namespace {

SkeletonSubject random_subject(Index frames, Rng& rng, double center_z = 3.0) {
    SkeletonSubject subject;
    subject.joints3d.resize(3, kJointCount * frames);
    for (Index i = 0; i < subject.joints3d.cols(); ++i) {
        subject.joints3d.col(i) = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                                  center_z + rng.uniform(-0.5, 0.5));
    }
    return subject;
}

SkeletonSequence random_sequence(Index frames, Index subjects, std::uint64_t seed) {
    Rng rng(seed);
    SkeletonSequence seq;
    seq.frame_count = frames;
    for (Index s = 0; s < subjects; ++s) seq.subjects.push_back(random_subject(frames, rng));
    return seq;
}

}  // namespace

TEST_CASE("normalize: spine-mid of the first frame becomes exactly the origin") {
    auto seq = random_sequence(6, 1, 42);
    seq.subjects[0].joints3d.col(SkeletonSequence::column(kSpineMidIndex, 0)) =
        Eigen::Vector3d(1.0, 0.5, 3.0);
    auto norm = normalize_sequence(seq);
    const Eigen::Vector3d spine =
        norm.subjects[0].joints3d.col(SkeletonSequence::column(kSpineMidIndex, 0));
    CHECK(spine.x() == 0.0);
    CHECK(spine.y() == 0.0);
    CHECK(spine.z() == 0.0);
}

TEST_CASE("normalize: already-centered sequence is unchanged and idempotence is exact") {
    auto seq = random_sequence(5, 2, 7);
    auto once = normalize_sequence(seq);
    auto twice = normalize_sequence(once);
    for (std::size_t s = 0; s < once.subjects.size(); ++s) {
        CHECK((once.subjects[s].joints3d - twice.subjects[s].joints3d).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("normalize: inter-subject distances are unchanged") {
    auto seq = random_sequence(4, 2, 11);
    auto norm = normalize_sequence(seq);
    for (Index t = 0; t < 4; ++t) {
        for (Index j = 0; j < kJointCount; j += 7) {
            const double before = (seq.subjects[0].joints3d.col(SkeletonSequence::column(j, t)) -
                                   seq.subjects[1].joints3d.col(SkeletonSequence::column(j, t)))
                                      .norm();
            const double after = (norm.subjects[0].joints3d.col(SkeletonSequence::column(j, t)) -
                                  norm.subjects[1].joints3d.col(SkeletonSequence::column(j, t)))
                                     .norm();
            CHECK(after == doctest::Approx(before).epsilon(1e-12));
        }
    }
}

TEST_CASE("normalize: errors on empty sequence and non-finite coordinates") {
    SkeletonSequence empty;
    empty.frame_count = 3;
    CHECK_THROWS_AS(normalize_sequence(empty), std::invalid_argument);

    auto seq = random_sequence(2, 1, 3);
    seq.subjects[0].joints3d(1, 4) = std::nan("");
    CHECK_THROWS_AS(normalize_sequence(seq), std::invalid_argument);
}

TEST_CASE("compute_extrema: single sequence spanning [-1, 2]") {
    auto seq = random_sequence(3, 1, 5);
    seq.subjects[0].joints3d.setConstant(0.5);
    seq.subjects[0].joints3d(0, 0) = -1.0;
    seq.subjects[0].joints3d(2, 10) = 2.0;
    auto extrema = compute_extrema({seq});
    CHECK(extrema.c_min == -1.0);
    CHECK(extrema.c_max == 2.0);
}

TEST_CASE("compute_extrema: degenerate and empty inputs are rejected") {
    CHECK_THROWS_AS(compute_extrema({}), std::invalid_argument);
    auto seq = random_sequence(2, 1, 9);
    seq.subjects[0].joints3d.setConstant(1.25);
    CHECK_THROWS_AS(compute_extrema({seq}), std::invalid_argument);
}

TEST_CASE("compute_extrema: matches a brute-force scan over a synthetic corpus") {
    std::vector<SkeletonSequence> corpus;
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 100; ++i) {
        auto seq = random_sequence(3 + i % 5, 1 + i % 2, 1000 + std::uint64_t(i));
        for (const auto& subject : seq.subjects) {
            lo = std::min(lo, subject.joints3d.minCoeff());
            hi = std::max(hi, subject.joints3d.maxCoeff());
        }
        corpus.push_back(std::move(seq));
    }
    auto extrema = compute_extrema(corpus);
    CHECK(extrema.c_min == lo);
    CHECK(extrema.c_max == hi);
}

TEST_CASE("encode: extrema map to exactly 0 and 1, out-of-range clamps") {
    auto seq = random_sequence(4, 1, 13);
    seq.subjects[0].joints3d(0, 0) = -1.0;
    seq.subjects[0].joints3d(1, 0) = 2.0;
    seq.subjects[0].joints3d(2, 1) = 5.0;  // outside the extrema, must clamp
    auto map = encode_skeleton_map(seq, {-1.0, 2.0});
    CHECK(map.rows() == 2 * kJointCount);
    CHECK(map.cols() == 4);
    CHECK(map.channels[0](0, 0) == 0.0);
    CHECK(map.channels[1](0, 0) == 1.0);
    CHECK(map.channels[2](0 * kJointCount + 0, 1) == 1.0);
    for (const auto& ch : map.channels) {
        CHECK(ch.minCoeff() >= 0.0);
        CHECK(ch.maxCoeff() <= 1.0);
    }
}

TEST_CASE("encode: single-subject map has a zero second row block") {
    auto seq = random_sequence(6, 1, 17);
    auto norm = normalize_sequence(seq);
    auto map = encode_skeleton_map(norm, compute_extrema({norm}));
    for (const auto& ch : map.channels) {
        CHECK(ch.bottomRows(kJointCount).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("encode: swapping the two subjects swaps the row blocks exactly") {
    auto seq = random_sequence(5, 2, 19);
    auto swapped = seq;
    std::swap(swapped.subjects[0], swapped.subjects[1]);
    const CoordinateExtrema extrema{-2.0, 4.0};
    auto a = encode_skeleton_map(seq, extrema);
    auto b = encode_skeleton_map(swapped, extrema);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK((a.channels[k].topRows(kJointCount) - b.channels[k].bottomRows(kJointCount))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK((a.channels[k].bottomRows(kJointCount) - b.channels[k].topRows(kJointCount))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("encode: inverting the map recovers the coordinates within 1e-6") {
    auto seq = normalize_sequence(random_sequence(7, 2, 23));
    auto extrema = compute_extrema({seq});
    auto map = encode_skeleton_map(seq, extrema);
    const double span = extrema.c_max - extrema.c_min;
    for (Index s = 0; s < 2; ++s) {
        for (Index t = 0; t < 7; ++t) {
            for (Index j = 0; j < kJointCount; ++j) {
                for (Index k = 0; k < 3; ++k) {
                    const double decoded =
                        map.channels[std::size_t(k)](s * kJointCount + j, t) * span + extrema.c_min;
                    const double original =
                        seq.subjects[std::size_t(s)].joints3d(k, SkeletonSequence::column(j, t));
                    CHECK(std::abs(decoded - original) < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("encode: rejects empty frame range") {
    SkeletonSequence seq;
    seq.subjects.emplace_back();
    seq.frame_count = 0;
    CHECK_THROWS_AS(encode_skeleton_map(seq, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("resize_map: constant map stays constant, equal size is the identity") {
    SkeletonMap map;
    for (auto& ch : map.channels) ch = Eigen::MatrixXd::Constant(50, 30, 0.75);
    auto big = resize_map(map, 224, 224);
    CHECK(big.rows() == 224);
    CHECK(big.cols() == 224);
    for (const auto& ch : big.channels) {
        CHECK(std::abs(ch.minCoeff() - 0.75) < 1e-12);
        CHECK(std::abs(ch.maxCoeff() - 0.75) < 1e-12);
    }

    Rng rng(29);
    SkeletonMap noise;
    for (auto& ch : noise.channels) {
        ch = Eigen::MatrixXd::NullaryExpr(50, 224, [&] { return rng.uniform(); });
    }
    auto same = resize_map(noise, 50, 224);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK((same.channels[k] - noise.channels[k]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("resize_map: a linear ramp stays a linear ramp under 2x upscaling") {
    SkeletonMap map;
    for (auto& ch : map.channels) {
        ch = Eigen::MatrixXd::Zero(8, 16);
        for (Index c = 0; c < 16; ++c) ch.col(c).setConstant(double(c) / 15.0);
    }
    auto big = resize_map(map, 16, 32);
    // analytic bilinear oracle: corner-aligned sampling of a linear function
    for (Index c = 0; c < 32; ++c) {
        const double expect = (double(c) * 15.0 / 31.0) / 15.0;
        for (Index r = 0; r < 16; ++r) {
            CHECK(std::abs(big.channels[0](r, c) - expect) < 1e-6);
        }
    }
}

TEST_CASE("rotation: zero angles are the identity") {
    auto seq = random_sequence(3, 2, 31);
    auto rotated = rotate_sequence(seq, 0.0, 0.0, 0.0);
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK((rotated.subjects[s].joints3d - seq.subjects[s].joints3d).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("rotation: 20 degrees about Z moves (1,0,0) to (cos20, sin20, 0)") {
    SkeletonSequence seq;
    seq.frame_count = 1;
    SkeletonSubject subject;
    subject.joints3d = Eigen::Matrix3Xd::Zero(3, kJointCount);
    subject.joints3d.col(0) = Eigen::Vector3d(1.0, 0.0, 0.0);
    seq.subjects.push_back(subject);
    const double a = 20.0 * M_PI / 180.0;
    auto rotated = rotate_sequence(seq, 0.0, 0.0, a);
    CHECK(rotated.subjects[0].joints3d(0, 0) == doctest::Approx(std::cos(a)).epsilon(1e-12));
    CHECK(rotated.subjects[0].joints3d(1, 0) == doctest::Approx(std::sin(a)).epsilon(1e-12));
    CHECK(rotated.subjects[0].joints3d(0, 0) == doctest::Approx(0.9396926208).epsilon(1e-9));
    CHECK(rotated.subjects[0].joints3d(1, 0) == doctest::Approx(0.3420201433).epsilon(1e-9));
    CHECK(std::abs(rotated.subjects[0].joints3d(2, 0)) < 1e-15);
}

TEST_CASE("rotation augmentation: pairwise distances preserved within 1e-9 relative") {
    auto seq = normalize_sequence(random_sequence(4, 2, 37));
    Rng rng(101);
    auto rotated = augment_rotation(seq, rng);
    for (Index t = 0; t < 4; ++t) {
        for (Index a = 0; a < kJointCount; a += 5) {
            for (Index b = a + 1; b < kJointCount; b += 5) {
                const double before = (seq.subjects[0].joints3d.col(SkeletonSequence::column(a, t)) -
                                       seq.subjects[0].joints3d.col(SkeletonSequence::column(b, t)))
                                          .norm();
                const double after =
                    (rotated.subjects[0].joints3d.col(SkeletonSequence::column(a, t)) -
                     rotated.subjects[0].joints3d.col(SkeletonSequence::column(b, t)))
                        .norm();
                CHECK(std::abs(after - before) <= 1e-9 * std::max(1.0, before));
            }
        }
    }
}

TEST_CASE("extrema persistence: JSON round trip") {
    testutil::TempDir dir("extrema");
    const std::string path = (dir.path() / "extrema.json").string();
    save_extrema({-1.5, 2.25}, "cv-split", path);
    std::string split;
    auto loaded = load_extrema(path, &split);
    CHECK(loaded.c_min == -1.5);
    CHECK(loaded.c_max == 2.25);
    CHECK(split == "cv-split");
}
