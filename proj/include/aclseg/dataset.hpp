#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "aclseg/tensor.hpp"

namespace aclseg {

enum class Split { Unassigned, Train, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SampleRecord {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path mask;
  Split split = Split::Unassigned;
};

inline constexpr int kMaskThreshold = 128;

// Dataset root layout: images/<stem>.png and GTmaps/<stem>.png (a "<stem>_GT.png"
// mask name is also accepted). Records are sorted by stem. If root/manifest.csv
// exists its "stem,split" rows assign the splits.
std::vector<SampleRecord> scan_dataset(const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
void apply_manifest(const std::filesystem::path& path, std::vector<SampleRecord>& records);

// Seeded shuffle, then the first floor(ratio * n) records become train.
std::vector<SampleRecord> split_dataset(std::vector<SampleRecord> records, double ratio,
                                        std::uint64_t seed);

std::vector<SampleRecord> select_split(const std::vector<SampleRecord>& records, Split s);

struct Sample {
  Tensor<float> image;              // 1 x H x W x 3, values / 255
  std::vector<std::uint8_t> mask;   // H x W, 1 where mask value >= 128
  int height = 0;
  int width = 0;
};

Sample load_sample(const SampleRecord& rec);
Tensor<float> load_image(const std::filesystem::path& path);

// Smallest multiple of 16 that is >= target (300 -> 304).
int adjust_target(int target);

enum class PrepMode { Train, Infer };

struct Prepared {
  Tensor<float> image;             // 1 x crop x crop x 3
  std::vector<std::uint8_t> mask;  // crop x crop
  int target = 0;                  // after adjust_target
  int offset_y = 0;
  int offset_x = 0;
};

// Bilinear resize of the image (nearest for the mask) to target x target,
// target rounded up to a multiple of 16, then a seeded crop x crop window.
// crop <= 0 means "no crop" (crop = adjusted target).
Prepared prepare_input(const Tensor<float>& image, const std::vector<std::uint8_t>& mask,
                       int target, int crop, PrepMode mode, std::uint64_t seed);

struct SyntheticSpec {
  int count = 60;
  int size = 64;
  int min_blobs = 1;
  int max_blobs = 4;
  double noise = 0.03;  // noise std as a fraction of full scale
  double night_fraction = 0.3;
  double contour = 0.5;  // mask = blob intensity > contour
  double train_ratio = 0.8;
  std::uint64_t seed = 7;
};

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// Writes images/, GTmaps/ and manifest.csv under out_dir. Byte-identical for
// identical specs.
std::vector<SampleRecord> gen_synthetic(const SyntheticSpec& spec,
                                        const std::filesystem::path& out_dir);

// Hash over every image and mask file of the records (in order).
std::uint64_t dataset_hash(const std::vector<SampleRecord>& records);

}  // namespace aclseg
