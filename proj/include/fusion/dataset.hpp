#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusion/image_io.hpp"
#include "fusion/skeleton.hpp"

namespace fusion {

// Ids decoded from the NTU-style file name S{sss}C{ccc}P{ppp}R{rrr}A{aaa}.
struct SampleMeta {
    int setup_id = 1;
    int camera_id = 1;
    int performer_id = 1;
    int replication_id = 1;
    int action_class = 1;
};

SampleMeta decode_sample_name(const std::string& name);
std::string encode_sample_name(const SampleMeta& meta);

struct SampleEntry {
    std::string id;  // S###C###P###R###A###
    std::string skeleton_path;
    std::string ir_path;
    SampleMeta meta;
};

struct DatasetManifest {
    std::vector<SampleEntry> samples;
    std::map<std::string, double> projection;  // fx, fy, cx, cy for synthetic data
    std::uint64_t seed = 0;
    int class_count = 0;

    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
};

// Sample indices assigned to each side of a benchmark split.
struct SplitAssignment {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Cameras 2 and 3 train, camera 1 tests. Any other camera id is an error.
SplitAssignment split_cross_view(const DatasetManifest& manifest);

// Performers in the id list train, the rest test.
SplitAssignment split_cross_subject(const DatasetManifest& manifest,
                                    const std::vector<int>& train_subject_ids);

// The NTU documentation's cross-subject training performers.
const std::vector<int>& default_cs_training_subjects();

// Seeded uniform sample without replacement of round(fraction * n) indices.
// Returns (remaining_train, validation).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    const std::vector<std::size_t>& train, double fraction, std::uint64_t seed);

// NTU skeleton text format: frame count; per frame a body count; per body a
// tracking-info line, the joint count (25), then per joint one line of
// x y z depthX depthY colorX colorY qw qx qy qz trackingState.
// Keeps at most the two highest-displacement bodies, main subject first.
SkeletonSequence parse_skeleton_file(const std::string& path);

void write_skeleton_file(const std::string& path, const SkeletonSequence& seq);

// Synthetic desk-scale dataset in NTU-compatible formats.
struct SynthConfig {
    int classes = 4;
    int per_class = 32;
    std::uint64_t seed = 7;
    std::string out_dir;
    Index ir_height = 120;
    Index ir_width = 160;
    Index min_frames = 36;
    Index max_frames = 64;
    int bit_depth = 8;
    double noise_sigma = 0.02;
};

DatasetManifest generate_synthetic_dataset(const SynthConfig& config);

// A fully loaded sample ready for preprocessing.
struct LoadedSample {
    std::string id;
    SkeletonSequence skeleton;
    IrRaw ir;
    Index label = 0;  // zero-based class index
};

// Loads every manifest sample into memory (desk scale).
std::vector<LoadedSample> load_samples(const DatasetManifest& manifest);

}  // namespace fusion
