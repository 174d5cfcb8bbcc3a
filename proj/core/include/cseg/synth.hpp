#pragma once

#include <cstdint>
#include <filesystem>

#include "cseg/scribble.hpp"
#include "cseg/session.hpp"

namespace cseg {

/// Procedural scene: a background and a ground band (stuff classes 0 and 1)
/// with elliptic objects of thing classes 2 and 3. The probability map mixes the
/// truth with smooth random blobs so that predictions make area-shaped mistakes.
struct SynthConfig {
  int width = 48;
  int height = 48;
  int objects = 2;
  int superpixel_cell = 4;       // grid cell side in pixels
  bool edge_adherent = true;     // split grid cells along segment boundaries
  double truth_logit = 1.0;      // weight of the true class in the logits
  double blob_strength = 5.0;    // peak logit of a distractor blob
  int blobs = 3;
  double image_noise = 0.05;
  std::uint64_t seed = 1;
};

struct SynthFixture {
  SessionInputs inputs;     // image, grid superpixels, probabilities, truth
  ScribbleSet scribbles;    // one stroke per truth segment
};

SynthFixture make_fixture(const SynthConfig& cfg);

/// 32x32 two-class scene whose probability map carries a confident island of
/// the second class inside the first class's area.
SynthFixture make_island_fixture();

/// Writes image.png, superpixels.png, probmap.cseg, truth.png and scribbles.json.
void save_fixture(const std::filesystem::path& dir, const SynthFixture& f);

}  // namespace cseg
