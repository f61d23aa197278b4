#include "aclseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "aclseg/image_io.hpp"
#include "aclseg/ops.hpp"
#include "aclseg/rng.hpp"

namespace aclseg {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Test:
      return "test";
    default:
      return "unassigned";
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw DataError("unknown split '" + s + "'");
}

std::vector<SampleRecord> scan_dataset(const fs::path& root) {
  const fs::path images = root / "images", masks = root / "GTmaps";
  if (!fs::is_directory(images) || !fs::is_directory(masks))
    throw DataError("dataset " + root.string() + " must contain images/ and GTmaps/");
  std::vector<SampleRecord> out;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    fs::path mask = masks / (stem + ".png");
    if (!fs::exists(mask)) mask = masks / (stem + "_GT.png");
    if (!fs::exists(mask)) throw DataError("no ground-truth mask for image " + entry.path().string());
    out.push_back({stem, entry.path(), mask, Split::Unassigned});
  }
  if (out.empty()) throw DataError("dataset " + root.string() + " has no PNG images");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });
  if (fs::exists(root / "manifest.csv")) apply_manifest(root / "manifest.csv", out);
  return out;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "stem,split\n";
  for (const auto& r : records) out << r.stem << ',' << to_string(r.split) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

void apply_manifest(const fs::path& path, std::vector<SampleRecord>& records) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::map<std::string, Split> splits;
  std::string line;
  std::getline(in, line);
  if (line.rfind("stem,split", 0) != 0) throw DataError("manifest " + path.string() + " lacks a stem,split header");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed manifest row: " + line);
    splits[line.substr(0, comma)] = parse_split(line.substr(comma + 1));
  }
  for (auto& r : records)
    if (auto it = splits.find(r.stem); it != splits.end()) r.split = it->second;
}

std::vector<SampleRecord> split_dataset(std::vector<SampleRecord> records, double ratio,
                                        std::uint64_t seed) {
  if (records.empty()) throw DataError("split_dataset: no records");
  if (!(ratio > 0 && ratio < 1)) throw ArgumentError("split ratio must be in (0,1)");
  auto rng = make_stream(seed, "split");
  std::shuffle(records.begin(), records.end(), rng);
  // Small epsilon so ratios such as 5/6 of 60 are not lost to rounding.
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * records.size() + 1e-9));
  for (std::size_t i = 0; i < records.size(); ++i)
    records[i].split = i < n_train ? Split::Train : Split::Test;
  return records;
}

std::vector<SampleRecord> select_split(const std::vector<SampleRecord>& records, Split s) {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const SampleRecord& r) { return r.split == s; });
  return out;
}

Tensor<float> load_image(const fs::path& path) {
  const Image8 img = read_png_rgb(path);
  Tensor<float> t(Shape{1, img.height, img.width, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i] / 255.0f;
  return t;
}

Sample load_sample(const SampleRecord& rec) {
  Sample s;
  s.image = load_image(rec.image);
  s.height = s.image.h();
  s.width = s.image.w();
  const Image8 m = read_png_rgb(rec.mask);
  if (m.height != s.height || m.width != s.width)
    throw DataError("mask " + rec.mask.string() + " is " + std::to_string(m.height) + "x" +
                    std::to_string(m.width) + " but image " + rec.image.string() + " is " +
                    std::to_string(s.height) + "x" + std::to_string(s.width));
  s.mask.resize(static_cast<std::size_t>(m.height) * m.width);
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    const int sum = m.pixels[3 * i] + m.pixels[3 * i + 1] + m.pixels[3 * i + 2];
    s.mask[i] = sum >= 3 * kMaskThreshold ? 1 : 0;
  }
  return s;
}

int adjust_target(int target) {
  if (target < 1) throw ArgumentError("resize target must be >= 1");
  return (target + 15) / 16 * 16;
}

Prepared prepare_input(const Tensor<float>& image, const std::vector<std::uint8_t>& mask,
                       int target, int crop, PrepMode mode, std::uint64_t seed) {
  Prepared p;
  p.target = adjust_target(target);
  if (crop <= 0) crop = p.target;
  if (crop > p.target)
    throw ArgumentError("crop " + std::to_string(crop) + " exceeds resize target " +
                        std::to_string(p.target));
  if (mask.size() != static_cast<std::size_t>(image.h()) * image.w())
    throw ShapeError("prepare_input: mask size does not match image");

  const Tensor<float> resized = ops::bilinear_resize(image, p.target, p.target);
  Tensor<float> m(Shape{1, image.h(), image.w(), 1});
  for (std::size_t i = 0; i < mask.size(); ++i) m[i] = mask[i];
  const Tensor<float> mres = ops::nearest_resize(m, p.target, p.target);

  const int slack = p.target - crop;
  if (slack > 0) {
    auto rng = make_stream(seed, mode == PrepMode::Train ? "crop/train" : "crop/infer");
    std::uniform_int_distribution<int> off(0, slack);
    p.offset_y = off(rng);
    p.offset_x = off(rng);
  }
  p.image = Tensor<float>(Shape{1, crop, crop, 3});
  p.mask.resize(static_cast<std::size_t>(crop) * crop);
  for (int i = 0; i < crop; ++i)
    for (int j = 0; j < crop; ++j) {
      for (int c = 0; c < 3; ++c) p.image.at(0, i, j, c) = resized.at(0, i + p.offset_y, j + p.offset_x, c);
      p.mask[static_cast<std::size_t>(i) * crop + j] =
          static_cast<std::uint8_t>(mres.at(0, i + p.offset_y, j + p.offset_x, 0));
    }
  return p;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"count", s.count},         {"size", s.size},
          {"min_blobs", s.min_blobs}, {"max_blobs", s.max_blobs},
          {"noise", s.noise},         {"night_fraction", s.night_fraction},
          {"contour", s.contour},     {"train_ratio", s.train_ratio},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"count", "size", "min_blobs", "max_blobs", "noise",
                                           "night_fraction", "contour", "train_ratio", "seed"};
  if (!j.is_object()) throw ArgumentError("synthetic spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ArgumentError("unknown synthetic spec key: " + key);
  SyntheticSpec s;
  try {
    s.count = j.value("count", s.count);
    s.size = j.value("size", s.size);
    s.min_blobs = j.value("min_blobs", s.min_blobs);
    s.max_blobs = j.value("max_blobs", s.max_blobs);
    s.noise = j.value("noise", s.noise);
    s.night_fraction = j.value("night_fraction", s.night_fraction);
    s.contour = j.value("contour", s.contour);
    s.train_ratio = j.value("train_ratio", s.train_ratio);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("invalid synthetic spec: ") + e.what());
  }
  if (s.count < 1) throw ArgumentError("synthetic count must be >= 1");
  if (s.size < 16 || s.size % 16 != 0) throw ArgumentError("synthetic size must be a positive multiple of 16");
  if (s.min_blobs < 0 || s.max_blobs < s.min_blobs) throw ArgumentError("invalid blob count range");
  if (s.noise < 0) throw ArgumentError("noise must be >= 0");
  if (!(s.contour > 0 && s.contour < 1)) throw ArgumentError("contour must be in (0,1)");
  return s;
}

namespace {

struct Blob {
  double cy, cx, sigma;
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

std::vector<SampleRecord> gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "GTmaps", ec);
  if (ec || !fs::is_directory(out_dir / "images"))
    throw IoError("cannot create dataset directories under " + out_dir.string());

  const int S = spec.size;
  std::vector<SampleRecord> records;
  for (int k = 0; k < spec.count; ++k) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "synth%05d", k);
    auto rng = make_stream(spec.seed, std::string("synth/") + stem);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise * 255.0);

    const bool night = u01(rng) < spec.night_fraction;
    std::uniform_int_distribution<int> nblobs(spec.min_blobs, spec.max_blobs);
    std::vector<Blob> blobs(nblobs(rng));
    for (auto& b : blobs) b = {u01(rng) * S, u01(rng) * S, (0.08 + 0.12 * u01(rng)) * S};

    // Sky gradient top -> bottom; clouds blend towards a bright grey.
    const double top[3] = {night ? 6.0 : 40.0, night ? 10.0 : 90.0, night ? 28.0 : 170.0};
    const double bot[3] = {night ? 20.0 : 110.0, night ? 30.0 : 160.0, night ? 60.0 : 225.0};
    const double cloud[3] = {night ? 150.0 : 238.0, night ? 150.0 : 238.0, night ? 160.0 : 242.0};

    Image8 img{S, S, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(S) * S * 3)};
    Image8 mask{S, S, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(S) * S)};
    for (int i = 0; i < S; ++i) {
      const double t = static_cast<double>(i) / (S - 1);
      for (int j = 0; j < S; ++j) {
        double intensity = 0;
        for (const auto& b : blobs) {
          const double dy = i + 0.5 - b.cy, dx = j + 0.5 - b.cx;
          intensity = std::max(intensity, std::exp(-(dy * dy + dx * dx) / (2 * b.sigma * b.sigma)));
        }
        const std::size_t p = static_cast<std::size_t>(i) * S + j;
        mask.pixels[p] = intensity > spec.contour ? 255 : 0;
        for (int c = 0; c < 3; ++c) {
          const double sky = top[c] + (bot[c] - top[c]) * t;
          img.pixels[3 * p + c] = to_byte(sky + (cloud[c] - sky) * intensity + noise(rng));
        }
      }
    }
    SampleRecord rec{stem, out_dir / "images" / (std::string(stem) + ".png"),
                     out_dir / "GTmaps" / (std::string(stem) + ".png"), Split::Unassigned};
    write_png(rec.image, img);
    write_png(rec.mask, mask);
    records.push_back(rec);
  }

  auto assigned = split_dataset(records, spec.train_ratio, spec.seed);
  std::sort(assigned.begin(), assigned.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });
  write_manifest(out_dir / "manifest.csv", assigned);
  return assigned;
}

std::uint64_t dataset_hash(const std::vector<SampleRecord>& records) {
  std::uint64_t h = fnv1a64("");
  for (const auto& r : records) {
    const auto a = read_file_bytes(r.image);
    const auto b = read_file_bytes(r.mask);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(a.data()), a.size()), h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()), h);
  }
  return h;
}

}  // namespace aclseg
