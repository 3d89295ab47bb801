#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fusion/dataset.hpp"

namespace fusion {

namespace {

// Kinect v2 joint order.
enum Joint : Index {
    kSpineBase = 0, kSpineMid = 1, kNeck = 2, kHead = 3,
    kShoulderL = 4, kElbowL = 5, kWristL = 6, kHandL = 7,
    kShoulderR = 8, kElbowR = 9, kWristR = 10, kHandR = 11,
    kHipL = 12, kKneeL = 13, kAnkleL = 14, kFootL = 15,
    kHipR = 16, kKneeR = 17, kAnkleR = 18, kFootR = 19,
    kSpineShoulder = 20, kHandTipL = 21, kThumbL = 22, kHandTipR = 23, kThumbR = 24,
};

constexpr std::pair<Index, Index> kBones[] = {
    {kSpineBase, kSpineMid}, {kSpineMid, kSpineShoulder}, {kSpineShoulder, kNeck}, {kNeck, kHead},
    {kSpineShoulder, kShoulderL}, {kShoulderL, kElbowL}, {kElbowL, kWristL}, {kWristL, kHandL},
    {kHandL, kHandTipL}, {kHandL, kThumbL},
    {kSpineShoulder, kShoulderR}, {kShoulderR, kElbowR}, {kElbowR, kWristR}, {kWristR, kHandR},
    {kHandR, kHandTipR}, {kHandR, kThumbR},
    {kSpineBase, kHipL}, {kHipL, kKneeL}, {kKneeL, kAnkleL}, {kAnkleL, kFootL},
    {kSpineBase, kHipR}, {kHipR, kKneeR}, {kKneeR, kAnkleR}, {kAnkleR, kFootR},
};

// Neutral standing pose, local coordinates: x right, y up, z forward, feet
// near y = 0.
Eigen::Matrix3Xd base_pose() {
    Eigen::Matrix3Xd p(3, kJointCount);
    p.col(kSpineBase) << 0.00, 0.90, 0.00;
    p.col(kSpineMid) << 0.00, 1.15, 0.00;
    p.col(kSpineShoulder) << 0.00, 1.40, 0.00;
    p.col(kNeck) << 0.00, 1.50, 0.00;
    p.col(kHead) << 0.00, 1.66, 0.00;
    p.col(kShoulderL) << -0.20, 1.40, 0.00;
    p.col(kElbowL) << -0.25, 1.12, 0.00;
    p.col(kWristL) << -0.27, 0.88, 0.00;
    p.col(kHandL) << -0.28, 0.80, 0.00;
    p.col(kHandTipL) << -0.285, 0.73, 0.00;
    p.col(kThumbL) << -0.25, 0.78, 0.02;
    p.col(kShoulderR) << 0.20, 1.40, 0.00;
    p.col(kElbowR) << 0.25, 1.12, 0.00;
    p.col(kWristR) << 0.27, 0.88, 0.00;
    p.col(kHandR) << 0.28, 0.80, 0.00;
    p.col(kHandTipR) << 0.285, 0.73, 0.00;
    p.col(kThumbR) << 0.25, 0.78, 0.02;
    p.col(kHipL) << -0.10, 0.86, 0.00;
    p.col(kKneeL) << -0.11, 0.48, 0.00;
    p.col(kAnkleL) << -0.12, 0.08, 0.00;
    p.col(kFootL) << -0.12, 0.02, 0.09;
    p.col(kHipR) << 0.10, 0.86, 0.00;
    p.col(kKneeR) << 0.11, 0.48, 0.00;
    p.col(kAnkleR) << 0.12, 0.08, 0.00;
    p.col(kFootR) << 0.12, 0.02, 0.09;
    return p;
}

void rotate_about(Eigen::Matrix3Xd& pose, std::initializer_list<Index> joints,
                  const Eigen::Vector3d& pivot, const Eigen::Matrix3d& rot) {
    for (Index j : joints) {
        pose.col(j) = pivot + rot * (pose.col(j) - pivot);
    }
}

Eigen::Matrix3d rot_x(double a) {
    return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
}
Eigen::Matrix3d rot_y(double a) {
    return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
}
Eigen::Matrix3d rot_z(double a) {
    return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

// One archetype motion evaluated at progress p in [0,1]; amp jitters around 1.
Eigen::Matrix3Xd pose_at(int archetype, double p, double amp, double phase) {
    Eigen::Matrix3Xd pose = base_pose();
    switch (archetype) {
        case 0: {  // raise the right arm sideways and up
            const double angle = amp * (0.2 + 1.9 * p);
            rotate_about(pose, {kElbowR, kWristR, kHandR, kHandTipR, kThumbR},
                         pose.col(kShoulderR), rot_z(angle));
            break;
        }
        case 1: {  // squat: pelvis drops, knees travel forward
            const double drop = amp * 0.38 * std::sin(M_PI * p);
            for (Index j : {kSpineBase, kSpineMid, kSpineShoulder, kNeck, kHead, kShoulderL,
                            kElbowL, kWristL, kHandL, kHandTipL, kThumbL, kShoulderR, kElbowR,
                            kWristR, kHandR, kHandTipR, kThumbR, kHipL, kHipR}) {
                pose(1, j) -= drop;
            }
            for (Index j : {kKneeL, kKneeR}) {
                pose(1, j) -= 0.5 * drop;
                pose(2, j) += 0.8 * drop;
            }
            break;
        }
        case 2: {  // wave: left forearm held up, oscillating about the elbow
            rotate_about(pose, {kWristL, kHandL, kHandTipL, kThumbL}, pose.col(kElbowL),
                         rot_z(-2.4));  // lift the forearm
            const double swing = amp * 0.7 * std::sin(2.0 * M_PI * (2.2 * p + phase));
            rotate_about(pose, {kWristL, kHandL, kHandTipL, kThumbL}, pose.col(kElbowL),
                         rot_z(swing));
            break;
        }
        case 3: {  // used per subject by the approach class: walking bob
            const double bob = amp * 0.03 * std::sin(2.0 * M_PI * (3.0 * p + phase));
            pose.row(1).array() += bob;
            const double stride = amp * 0.28 * std::sin(2.0 * M_PI * (3.0 * p + phase));
            pose(2, kKneeL) += stride * 0.4;
            pose(2, kAnkleL) += stride;
            pose(2, kFootL) += stride;
            pose(2, kKneeR) -= stride * 0.4;
            pose(2, kAnkleR) -= stride;
            pose(2, kFootR) -= stride;
            break;
        }
        case 4: {  // forward kick with the right leg
            const double angle = amp * 1.15 * std::max(0.0, std::sin(M_PI * p));
            rotate_about(pose, {kKneeR, kAnkleR, kFootR}, pose.col(kHipR), rot_x(-angle));
            break;
        }
        case 5: {  // bow: torso pitches forward about the spine base
            const double angle = amp * 0.9 * std::sin(M_PI * p);
            rotate_about(pose,
                         {kSpineMid, kSpineShoulder, kNeck, kHead, kShoulderL, kElbowL, kWristL,
                          kHandL, kHandTipL, kThumbL, kShoulderR, kElbowR, kWristR, kHandR,
                          kHandTipR, kThumbR},
                         pose.col(kSpineBase), rot_x(-angle));
            break;
        }
        case 6: {  // jump pulse with arms swinging out
            const double lift = amp * 0.30 * std::pow(std::max(0.0, std::sin(2.0 * M_PI * p)), 2.0);
            pose.row(1).array() += lift;
            const double arms = amp * 0.9 * std::max(0.0, std::sin(2.0 * M_PI * p));
            rotate_about(pose, {kElbowR, kWristR, kHandR, kHandTipR, kThumbR},
                         pose.col(kShoulderR), rot_z(arms));
            rotate_about(pose, {kElbowL, kWristL, kHandL, kHandTipL, kThumbL},
                         pose.col(kShoulderL), rot_z(-arms));
            break;
        }
        default: {  // turn in place
            const double yaw = amp * M_PI * p;
            const Eigen::Vector3d pivot = pose.col(kSpineBase);
            Eigen::Matrix3Xd rotated = pose;
            for (Index j = 0; j < kJointCount; ++j) {
                rotated.col(j) = pivot + rot_y(yaw) * (pose.col(j) - pivot);
            }
            pose = rotated;
            break;
        }
    }
    return pose;
}

struct Camera {
    double fx = 140.0, fy = 140.0, cx = 80.0, cy = 60.0;

    Eigen::Vector2d project(const Eigen::Vector3d& p) const {
        return {cx + fx * p.x() / p.z(), cy - fy * p.y() / p.z()};
    }
};

void splat(Eigen::MatrixXd& canvas, double u, double v, double intensity) {
    const Index x0 = static_cast<Index>(std::floor(u));
    const Index y0 = static_cast<Index>(std::floor(v));
    const double fx = u - double(x0);
    const double fy = v - double(y0);
    const double w[2][2] = {{(1 - fy) * (1 - fx), (1 - fy) * fx}, {fy * (1 - fx), fy * fx}};
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            const Index y = y0 + dy, x = x0 + dx;
            if (y < 0 || y >= canvas.rows() || x < 0 || x >= canvas.cols()) continue;
            canvas(y, x) = std::max(canvas(y, x), intensity * w[dy][dx]);
        }
    }
}

void draw_segment(Eigen::MatrixXd& canvas, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                  double intensity) {
    const double len = (b - a).norm();
    const int steps = std::max(1, int(std::ceil(len / 0.4)));
    for (int s = 0; s <= steps; ++s) {
        const Eigen::Vector2d p = a + (b - a) * (double(s) / steps);
        splat(canvas, p.x(), p.y(), intensity);
    }
}

struct SubjectTrack {
    int archetype;
    double amp;
    double phase;
    Eigen::Vector3d start;   // world offset of the local origin
    Eigen::Vector3d end;
    std::int64_t body_id;
};

}  // namespace

DatasetManifest generate_synthetic_dataset(const SynthConfig& config) {
    if (config.classes < 2) {
        throw std::invalid_argument("generate_synthetic_dataset: need at least 2 classes");
    }
    if (config.classes > 8) {
        throw std::invalid_argument("generate_synthetic_dataset: at most 8 motion classes available");
    }
    if (config.per_class < 1 || config.min_frames < 2 || config.max_frames < config.min_frames) {
        throw std::invalid_argument("generate_synthetic_dataset: invalid sample/frame counts");
    }
    namespace fs = std::filesystem;
    const fs::path root(config.out_dir);
    const fs::path sample_dir = root / "samples";
    std::error_code ec;
    fs::create_directories(sample_dir, ec);
    if (ec || !fs::is_directory(sample_dir)) {
        throw std::runtime_error("generate_synthetic_dataset: cannot create " + sample_dir.string());
    }

    const Camera camera;
    DatasetManifest manifest;
    manifest.seed = config.seed;
    manifest.class_count = config.classes;
    manifest.projection = {{"fx", camera.fx}, {"fy", camera.fy}, {"cx", camera.cx}, {"cy", camera.cy}};

    for (int cls = 1; cls <= config.classes; ++cls) {
        const int archetype = cls - 1;  // archetype 3 is the two-subject approach
        for (int i = 0; i < config.per_class; ++i) {
            Rng rng(derive_seed(config.seed, "sample", std::uint64_t(cls), std::uint64_t(i)));

            SampleMeta meta;
            meta.setup_id = 1;
            meta.camera_id = 1 + i % 3;
            meta.performer_id = 1 + i % 8;
            meta.replication_id = 1 + i / 24;
            meta.action_class = cls;
            const std::string name = encode_sample_name(meta);

            const Index frames =
                config.min_frames + Index(rng.uniform_index(std::uint64_t(
                                        config.max_frames - config.min_frames + 1)));
            const double amp = 0.85 + 0.3 * rng.uniform();
            const double phase = rng.uniform();
            const double body_y = -1.15 + 0.1 * rng.uniform();

            std::vector<SubjectTrack> tracks;
            if (archetype == 3) {
                const double gap = 1.6 + 0.5 * rng.uniform();
                const double z = 2.8 + 0.5 * rng.uniform();
                tracks.push_back({3, amp, phase,
                                  {-gap / 2, body_y, z}, {-0.25, body_y, z}, 1});
                tracks.push_back({3, 0.85 + 0.3 * rng.uniform(), rng.uniform(),
                                  {gap / 2, body_y, z + 0.1}, {0.25, body_y, z + 0.1}, 2});
            } else {
                const Eigen::Vector3d at(rng.uniform(-0.55, 0.55), body_y, rng.uniform(2.5, 3.3));
                tracks.push_back({archetype, amp, phase, at, at, 1});
            }

            SkeletonSequence seq;
            seq.frame_count = frames;
            for (const auto& track : tracks) {
                SkeletonSubject subject;
                subject.body_id = track.body_id;
                subject.joints3d.resize(3, kJointCount * frames);
                subject.joints2d.resize(2, kJointCount * frames);
                seq.subjects.push_back(std::move(subject));
            }

            IrSequence ir;
            ir.frames.reserve(std::size_t(frames));
            for (Index t = 0; t < frames; ++t) {
                const double p = double(t) / double(frames - 1);
                Eigen::MatrixXd canvas =
                    Eigen::MatrixXd::Constant(config.ir_height, config.ir_width, 0.04);
                for (std::size_t s = 0; s < tracks.size(); ++s) {
                    const auto& track = tracks[s];
                    Eigen::Matrix3Xd pose = pose_at(track.archetype, p, track.amp, track.phase);
                    const Eigen::Vector3d offset = track.start + (track.end - track.start) * p;
                    pose.colwise() += offset;
                    // capture jitter
                    for (Index j = 0; j < kJointCount; ++j) {
                        pose.col(j) += Eigen::Vector3d(rng.normal(0.0, 0.004), rng.normal(0.0, 0.004),
                                                       rng.normal(0.0, 0.004));
                    }
                    auto& subject = seq.subjects[s];
                    const double brightness = std::clamp(2.3 / offset.z(), 0.35, 0.95);
                    for (Index j = 0; j < kJointCount; ++j) {
                        const Index col = SkeletonSequence::column(j, t);
                        subject.joints3d.col(col) = pose.col(j);
                        subject.joints2d.col(col) = camera.project(pose.col(j));
                    }
                    for (const auto& [a, b] : kBones) {
                        draw_segment(canvas,
                                     subject.joints2d.col(SkeletonSequence::column(a, t)),
                                     subject.joints2d.col(SkeletonSequence::column(b, t)),
                                     brightness);
                    }
                }
                for (Index r = 0; r < canvas.rows(); ++r) {
                    for (Index c = 0; c < canvas.cols(); ++c) {
                        canvas(r, c) =
                            std::clamp(canvas(r, c) + rng.normal(0.0, config.noise_sigma), 0.0, 1.0);
                    }
                }
                ir.frames.push_back(std::move(canvas));
            }

            const std::string skeleton_path = (sample_dir / (name + ".skeleton")).string();
            const std::string ir_path = (sample_dir / (name + ".ir")).string();
            write_skeleton_file(skeleton_path, seq);
            save_ir_raw(ir_path, quantize_sequence(ir, config.bit_depth));

            SampleEntry entry;
            entry.id = name;
            entry.skeleton_path = skeleton_path;
            entry.ir_path = ir_path;
            entry.meta = meta;
            manifest.samples.push_back(std::move(entry));
        }
    }
    manifest.save((root / "manifest.json").string());
    return manifest;
}

}  // namespace fusion
