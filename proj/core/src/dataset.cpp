#include "cgam/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "cgam/png_io.hpp"
#include "cgam/tensor.hpp"
#include "json.hpp"

namespace cgam {
namespace {

// Smooth random field: a coarse grid of standard normals, bilinearly
// upsampled. `cells` controls the dominant frequency.
std::vector<double> smooth_noise(std::mt19937_64& rng, std::size_t size, std::size_t cells) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> grid(cells * cells);
  for (auto& v : grid) v = normal(rng);
  Tape tape;
  Tensor up = ops::bilinear_resize(tape, Tensor::from({1, 1, cells, cells}, std::move(grid)), size, size);
  return {up.data().begin(), up.data().end()};
}

std::vector<double> box_blur(const std::vector<double>& src, std::size_t size, int radius) {
  if (radius <= 0) return src;
  const long n = static_cast<long>(size);
  std::vector<double> tmp(src.size()), out(src.size());
  for (long y = 0; y < n; ++y) {
    for (long x = 0; x < n; ++x) {
      double acc = 0.0;
      int cnt = 0;
      for (long k = std::max(0L, x - radius); k <= std::min(n - 1, x + radius); ++k, ++cnt) {
        acc += src[y * n + k];
      }
      tmp[y * n + x] = acc / cnt;
    }
  }
  for (long y = 0; y < n; ++y) {
    for (long x = 0; x < n; ++x) {
      double acc = 0.0;
      int cnt = 0;
      for (long k = std::max(0L, y - radius); k <= std::min(n - 1, y + radius); ++k, ++cnt) {
        acc += tmp[k * n + x];
      }
      out[y * n + x] = acc / cnt;
    }
  }
  return out;
}

Mask blob_mask(std::mt19937_64& rng, std::size_t size) {
  const double s = static_cast<double>(size);
  std::uniform_int_distribution<int> blob_count(1, 3);
  std::uniform_real_distribution<double> centre(0.15 * s, 0.85 * s);
  std::uniform_real_distribution<double> spread(0.10 * s, 0.24 * s);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int blobs = blob_count(rng);
    std::vector<double> field(size * size, 0.0);
    for (int b = 0; b < blobs; ++b) {
      const double cy = centre(rng), cx = centre(rng), sigma = spread(rng);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          field[y * size + x] += std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
      }
    }
    const auto wobble = smooth_noise(rng, size, 6);
    Mask m = Mask::zeros(size, size);
    for (std::size_t i = 0; i < field.size(); ++i) m.pixels[i] = field[i] + 0.22 * wobble[i] > 0.5;
    const double f = m.fraction();
    if (f >= 0.05 && f <= 0.95) return m;
  }
  // Deterministic fallback: a centred disk covering roughly a third.
  Mask m = Mask::zeros(size, size);
  const double r = 0.33 * s;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - s / 2, dx = static_cast<double>(x) - s / 2;
      m.set(y, x, dy * dy + dx * dx <= r * r);
    }
  }
  return m;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

Sample synth_sample(std::size_t index, std::size_t size, std::uint64_t seed, double ambiguity) {
  if (size < 8) throw std::invalid_argument("synthetic image size must be >= 8");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) {
    throw std::invalid_argument("ambiguity must lie in [0, 1]");
  }
  std::mt19937_64 rng(sample_seed(seed, index));
  Sample s;
  char id[64];
  std::snprintf(id, sizeof(id), "s%llu_%05zu", static_cast<unsigned long long>(seed), index);
  s.id = id;
  s.mask = blob_mask(rng, size);

  // Pink background and purple foreground; separation scales with
  // (1 - 0.85 * ambiguity).
  const double separation = 1.0 - 0.85 * ambiguity;
  const double bg[3] = {0.78, 0.58, 0.72};
  const double shift[3] = {0.42, 0.48, 0.30};
  std::uniform_real_distribution<double> jitter(-0.04, 0.04);
  double fg[3];
  for (int c = 0; c < 3; ++c) fg[c] = bg[c] - separation * shift[c] + jitter(rng);

  std::vector<double> soft(s.mask.pixels.begin(), s.mask.pixels.end());
  soft = box_blur(soft, size, 1 + static_cast<int>(std::lround(3.0 * ambiguity)));

  const auto stain = smooth_noise(rng, size, 4);
  const auto fg_texture = smooth_noise(rng, size, std::max<std::size_t>(4, size / 4));
  const auto bg_texture = smooth_noise(rng, size, std::max<std::size_t>(3, size / 16));
  const double stain_amp = 0.04 + 0.10 * ambiguity;
  std::normal_distribution<double> grain(0.0, 0.03);

  s.image = Image::zeros(3, size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t i = y * size + x;
      const double a = soft[i];
      for (std::size_t c = 0; c < 3; ++c) {
        const double fg_v = fg[c] + 0.09 * fg_texture[i];
        const double bg_v = bg[c] + 0.06 * bg_texture[i];
        const double v = a * fg_v + (1.0 - a) * bg_v + stain_amp * stain[i] + grain(rng);
        s.image.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return s;
}

std::vector<Sample> synth_generate(std::size_t count, std::size_t size, std::uint64_t seed,
                                   double ambiguity, std::size_t first_index) {
  if (count < 1) throw std::invalid_argument("synth_generate needs count >= 1");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(first_index + i, size, seed, ambiguity));
  return out;
}

Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& mask_path,
                   std::string id) {
  Image image, mask_image;
  try {
    image = read_png(image_path);
    mask_image = read_png(mask_path);
  } catch (const PngError& e) {
    throw DatasetError(std::string("cannot load sample: ") + e.what());
  }
  if (image.height != mask_image.height || image.width != mask_image.width) {
    throw DatasetError("size mismatch: " + image_path.string() + " is " +
                       std::to_string(image.height) + "x" + std::to_string(image.width) + " but " +
                       mask_path.string() + " is " + std::to_string(mask_image.height) + "x" +
                       std::to_string(mask_image.width));
  }
  if (image.channels == 1) {
    Image rgb = Image::zeros(3, image.height, image.width);
    for (std::size_t c = 0; c < 3; ++c) {
      std::copy(image.pixels.begin(), image.pixels.end(),
                rgb.pixels.begin() + static_cast<long>(c * image.height * image.width));
    }
    image = std::move(rgb);
  }
  Sample s;
  s.id = id.empty() ? image_path.stem().string() : std::move(id);
  s.image = std::move(image);
  s.mask = binarize(mask_image, 128);
  return s;
}

std::vector<Sample> filter_boundary_patches(const std::vector<Sample>& samples, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("filter_boundary_patches needs lo < hi");
  std::vector<Sample> out;
  for (const auto& s : samples) {
    const double f = s.foreground_fraction();
    if (f >= lo && f <= hi) out.push_back(s);
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const std::vector<std::string>& splits) {
  if (splits.size() != samples.size()) {
    throw std::invalid_argument("write_dataset needs one split label per sample");
  }
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  nlohmann::json manifest;
  manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    write_png(dir / "images" / (s.id + ".png"), s.image);
    write_png(dir / "masks" / (s.id + ".png"), mask_to_image(s.mask));
    manifest["samples"].push_back(
        {{"id", s.id}, {"split", splits[i]}, {"foreground_fraction", s.foreground_fraction()}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DatasetError("missing manifest " + path.string());
  std::vector<ManifestEntry> entries;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("samples")) {
      entries.push_back({e.at("id").get<std::string>(), e.value("split", std::string("train")),
                         e.value("foreground_fraction", 0.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return entries;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir,
                                 const std::optional<std::string>& split) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(dir)) {
    if (split && e.split != *split) continue;
    out.push_back(load_sample(dir / "images" / (e.id + ".png"), dir / "masks" / (e.id + ".png"), e.id));
  }
  return out;
}

}  // namespace cgam
