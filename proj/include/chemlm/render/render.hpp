#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chemlm/chem/molecule.hpp"

namespace chemlm::render {

struct DisconnectedMolecule : Error {
  DisconnectedMolecule() : Error("layout_2d requires a connected molecule") {}
};
struct NonSquareImage : Error {
  NonSquareImage() : Error("rotation requires a square image") {}
};

struct MolImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major RGB

  bool operator==(const MolImage& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

struct Layout2D {
  std::vector<std::array<double, 2>> pos;  // bond-length units
};

// Deterministic coordinates: rings as regular polygons (fused rings on
// shared edges, bridges on fitted arcs), chains as 120-degree zig-zags.
// A seeded constraint-projection refinement kicks in when atoms collide.
// Throws DisconnectedMolecule for multi-fragment input; render() tiles
// fragments itself.
Layout2D layout_2d(const chem::Molecule& m);

MolImage render(const chem::Molecule& m, int res = 64);

// [identity, rot90, rot180, rot270]; rotations are counterclockwise.
std::array<MolImage, 4> augment_rotations(const MolImage& img);

void write_ppm(const std::string& path, const MolImage& img);
MolImage read_ppm(const std::string& path);

}  // namespace chemlm::render
