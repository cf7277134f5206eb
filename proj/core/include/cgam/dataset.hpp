#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgam/image.hpp"

namespace cgam {

struct Sample {
  std::string id;
  Image image;  // 3 x H x W in [0, 1]
  Mask mask;    // H x W

  double foreground_fraction() const { return mask.fraction(); }
  bool operator==(const Sample&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Procedural stand-in for ambiguous-boundary tissue patches. Each mask is one
// to three smooth blobs (Gaussian bumps plus band-limited noise, thresholded)
// covering 5-95% of the image. Foreground and background get different
// colour and texture statistics whose separation shrinks as ambiguity goes
// from 0 to 1; a shared low-frequency stain field and a boundary blur widen
// the uncertain zone. Sample i depends only on (seed, i, size, ambiguity).
std::vector<Sample> synth_generate(std::size_t count, std::size_t size, std::uint64_t seed,
                                   double ambiguity, std::size_t first_index = 0);
Sample synth_sample(std::size_t index, std::size_t size, std::uint64_t seed, double ambiguity);

// RGB image PNG (gray is replicated) and mask PNG binarized at 128.
Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& mask_path,
                   std::string id = {});

// Keeps samples whose foreground fraction lies in the closed range [lo, hi].
std::vector<Sample> filter_boundary_patches(const std::vector<Sample>& samples, double lo = 0.2,
                                            double hi = 0.8);

struct ManifestEntry {
  std::string id;
  std::string split;
  double foreground_fraction = 0.0;
};

// Directory layout: images/<id>.png, masks/<id>.png, manifest.json with
// {"samples": [{"id", "split", "foreground_fraction"}]}.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const std::vector<std::string>& splits);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
std::vector<Sample> load_dataset(const std::filesystem::path& dir,
                                 const std::optional<std::string>& split = std::nullopt);

}  // namespace cgam
