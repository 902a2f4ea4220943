#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "chemlm/chem/smiles.hpp"
#include "chemlm/render/render.hpp"
#include "doctest.h"

using namespace chemlm::chem;
using namespace chemlm::render;

namespace {

double dist(const Layout2D& l, int a, int b) {
  return std::hypot(l.pos[static_cast<size_t>(a)][0] - l.pos[static_cast<size_t>(b)][0],
                    l.pos[static_cast<size_t>(a)][1] - l.pos[static_cast<size_t>(b)][1]);
}

int count_black(const MolImage& img) {
  int n = 0;
  for (size_t i = 0; i + 2 < img.pixels.size(); i += 3)
    if (img.pixels[i] == 0 && img.pixels[i + 1] == 0 && img.pixels[i + 2] == 0) ++n;
  return n;
}

int count_nonwhite(const MolImage& img) {
  int n = 0;
  for (size_t i = 0; i + 2 < img.pixels.size(); i += 3)
    if (img.pixels[i] != 255 || img.pixels[i + 1] != 255 || img.pixels[i + 2] != 255) ++n;
  return n;
}

const std::vector<std::string>& layout_corpus() {
  static const std::vector<std::string> mols = {
      "C",      "CC",          "CCO",         "CCCC",      "CC(C)(C)C",
      "C1CC1",  "C1CCCCC1",    "c1ccccc1",    "Cc1ccccc1", "c1ccc2ccccc2c1",
      "C1CCOC1", "C1COCCN1",   "CC(=O)Oc1ccccc1C(=O)O",   "O=[N+]([O-])c1ccccc1",
      "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
      "c1ccc(cc1)c1ccccc1", "OCCN1CCOCC1", "CCN(CC)CC", "CC1=CC(=O)CC(C)(C)C1",
  };
  return mols;
}

}  // namespace

TEST_CASE("single atom sits at the origin") {
  Layout2D l = layout_2d(parse_smiles("C"));
  REQUIRE(l.pos.size() == 1);
  CHECK(l.pos[0][0] == 0.0);
  CHECK(l.pos[0][1] == 0.0);
}

TEST_CASE("benzene lays out as a regular hexagon with side 1") {
  Molecule m = parse_smiles("c1ccccc1");
  Layout2D l = layout_2d(m);
  double cx = 0, cy = 0;
  for (const auto& p : l.pos) {
    cx += p[0];
    cy += p[1];
  }
  cx /= 6;
  cy /= 6;
  double circumradius = 0.5 / std::sin(M_PI / 6.0);  // = 1 for a hexagon
  for (int i = 0; i < 6; ++i) {
    double r = std::hypot(l.pos[static_cast<size_t>(i)][0] - cx,
                          l.pos[static_cast<size_t>(i)][1] - cy);
    CHECK(r == doctest::Approx(circumradius).epsilon(1e-9));
  }
  for (const auto& b : m.bonds) CHECK(dist(l, b.a, b.b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("butane forms a unit zig-zag with alternating turns") {
  Molecule m = parse_smiles("CCCC");
  Layout2D l = layout_2d(m);
  for (int i = 0; i + 1 < 4; ++i)
    CHECK(dist(l, i, i + 1) == doctest::Approx(1.0).epsilon(1e-9));
  // interior angles of 120 degrees, bending in opposite directions
  std::vector<double> heading;
  for (int i = 0; i + 1 < 4; ++i)
    heading.push_back(std::atan2(l.pos[static_cast<size_t>(i + 1)][1] - l.pos[static_cast<size_t>(i)][1],
                                 l.pos[static_cast<size_t>(i + 1)][0] - l.pos[static_cast<size_t>(i)][0]));
  double turn1 = std::remainder(heading[1] - heading[0], 2.0 * M_PI);
  double turn2 = std::remainder(heading[2] - heading[1], 2.0 * M_PI);
  CHECK(std::abs(turn1) == doctest::Approx(M_PI / 3.0).epsilon(1e-9));
  CHECK(turn2 == doctest::Approx(-turn1).epsilon(1e-9));
}

TEST_CASE("layout invariants hold across the corpus") {
  for (const auto& s : layout_corpus()) {
    INFO("smiles: " << s);
    Molecule m = parse_smiles(s);
    Layout2D l = layout_2d(m);
    for (const auto& b : m.bonds)
      CHECK(dist(l, b.a, b.b) == doctest::Approx(1.0).epsilon(1e-6));
    for (int i = 0; i < m.num_atoms(); ++i)
      for (int j = i + 1; j < m.num_atoms(); ++j)
        CHECK(dist(l, i, j) >= 0.25);
  }
}

TEST_CASE("multi-fragment molecules refuse a single layout but render tiled") {
  Molecule salt = parse_smiles("[Na+].[Cl-]");
  CHECK_THROWS_AS(layout_2d(salt), DisconnectedMolecule);
  MolImage img = render(salt, 64);
  CHECK(count_nonwhite(img) >= 1);
}

TEST_CASE("rendering is deterministic and never blank") {
  for (const auto& s : layout_corpus()) {
    INFO("smiles: " << s);
    Molecule m = parse_smiles(s);
    MolImage a = render(m, 64);
    MolImage b = render(m, 64);
    CHECK(a == b);
    CHECK(count_nonwhite(a) >= 1);
    CHECK(count_black(a) >= m.num_bonds());
  }
}

TEST_CASE("rotation group axioms") {
  MolImage img = render(parse_smiles("CCO"), 64);
  auto rots = augment_rotations(img);
  CHECK(rots.size() == 4);
  CHECK(rots[0] == img);
  CHECK(augment_rotations(rots[1])[1] == rots[2]);  // rot180 = rot90 twice
  MolImage back = augment_rotations(augment_rotations(rots[1])[1])[1];
  CHECK(augment_rotations(back)[1] == img);  // four rot90s close the loop
  MolImage odd;
  odd.width = 4;
  odd.height = 8;
  odd.pixels.assign(4 * 8 * 3, 0);
  CHECK_THROWS_AS(augment_rotations(odd), NonSquareImage);
}

TEST_CASE("ppm round trip is byte exact") {
  MolImage img = render(parse_smiles("c1ccncc1"), 64);
  auto path = std::filesystem::temp_directory_path() / "chemlm_render_test.ppm";
  write_ppm(path.string(), img);
  MolImage loaded = read_ppm(path.string());
  CHECK(loaded == img);
  std::filesystem::remove(path);
}

TEST_CASE("renders match the frozen golden images") {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"c1ccccc1", "data/fixtures/golden/benzene_64.ppm"},
      {"CCO", "data/fixtures/golden/ethanol_64.ppm"},
      {"CC(=O)Oc1ccccc1C(=O)O", "data/fixtures/golden/aspirin_64.ppm"},
  };
  bool update = std::getenv("CHEMLM_UPDATE_GOLDEN") != nullptr;
  for (const auto& [smiles, path] : cases) {
    MolImage img = render(parse_smiles(smiles), 64);
    if (update) {
      write_ppm(path, img);
      continue;
    }
    INFO("golden: " << path);
    MolImage golden = read_ppm(path);
    CHECK(img == golden);
  }
}
