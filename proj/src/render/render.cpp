#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>

#include "chemlm/render/render.hpp"

namespace chemlm::render {

using chem::BondOrder;
using chem::Molecule;

namespace {

struct Color {
  uint8_t r, g, b;
};

Color element_color(const std::string& elem) {
  static const std::map<std::string, Color> colors = {
      {"N", {0, 0, 230}},   {"O", {230, 0, 0}},   {"S", {180, 150, 0}},
      {"F", {0, 160, 0}},   {"Cl", {0, 160, 0}},  {"Br", {165, 42, 42}},
      {"I", {130, 0, 130}}, {"P", {255, 140, 0}}, {"B", {255, 130, 130}},
  };
  auto it = colors.find(elem);
  return it == colors.end() ? Color{60, 60, 60} : it->second;
}

// 5x7 bitmap glyphs, one byte per row, low 5 bits used
const uint8_t* glyph(char c) {
  static const std::map<char, std::array<uint8_t, 7>> font = {
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x1F}},
      {'N', {0x11, 0x19, 0x15, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
  };
  auto it = font.find(c);
  return it == font.end() ? nullptr : it->second.data();
}

struct Canvas {
  MolImage img;

  explicit Canvas(int res) {
    img.width = res;
    img.height = res;
    img.pixels.assign(static_cast<size_t>(res) * res * 3, 255);
  }

  void put(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
    img.pixels[i] = c.r;
    img.pixels[i + 1] = c.g;
    img.pixels[i + 2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Color c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) put(x, y, c);
  }

  void text(int cx, int cy, const std::string& s, Color c) {
    int w = static_cast<int>(s.size()) * 6 - 1;
    int x0 = cx - w / 2;
    int y0 = cy - 3;
    fill_rect(x0 - 1, y0 - 1, x0 + w, y0 + 7, {255, 255, 255});
    for (size_t ci = 0; ci < s.size(); ++ci) {
      const uint8_t* g = glyph(s[ci]);
      if (!g) continue;
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g[row] & (1 << (4 - col)))
            put(x0 + static_cast<int>(ci) * 6 + col, y0 + row, c);
    }
  }
};

std::string atom_label(const chem::Atom& a) {
  if (a.element == "C" && a.charge == 0) return "";
  std::string s = a.element;
  if (a.charge > 0) s += "+";
  if (a.charge < 0) s += "-";
  return s;
}

Molecule extract_fragment(const Molecule& m, const std::vector<int>& atoms,
                          std::vector<int>& index_of) {
  Molecule out;
  std::map<int, int> remap;
  for (int a : atoms) {
    remap[a] = static_cast<int>(out.atoms.size());
    out.atoms.push_back(m.atoms[static_cast<size_t>(a)]);
    out.adj.emplace_back();
    index_of.push_back(a);
  }
  for (const auto& b : m.bonds) {
    auto ia = remap.find(b.a);
    auto ib = remap.find(b.b);
    if (ia == remap.end() || ib == remap.end()) continue;
    chem::Bond nb = b;
    nb.a = ia->second;
    nb.b = ib->second;
    int bi = static_cast<int>(out.bonds.size());
    out.bonds.push_back(nb);
    out.adj[static_cast<size_t>(nb.a)].push_back(bi);
    out.adj[static_cast<size_t>(nb.b)].push_back(bi);
  }
  for (const auto& ring : m.rings) {
    bool inside = true;
    for (int a : ring)
      if (!remap.count(a)) inside = false;
    if (!inside) continue;
    std::vector<int> r;
    for (int a : ring) r.push_back(remap[a]);
    out.rings.push_back(std::move(r));
  }
  return out;
}

}  // namespace

MolImage render(const Molecule& m, int res) {
  // per-fragment layout, tiled left to right with a one-bond gap
  std::vector<std::array<double, 2>> pos(m.atoms.size());
  double cursor_x = 0.0;
  for (const auto& frag : m.fragments()) {
    std::vector<int> index_of;
    Molecule sub = extract_fragment(m, frag, index_of);
    Layout2D lay = layout_2d(sub);
    double min_x = 1e18, max_x = -1e18;
    for (const auto& p : lay.pos) {
      min_x = std::min(min_x, p[0]);
      max_x = std::max(max_x, p[0]);
    }
    for (size_t i = 0; i < lay.pos.size(); ++i)
      pos[static_cast<size_t>(index_of[i])] = {lay.pos[i][0] - min_x + cursor_x,
                                               lay.pos[i][1]};
    cursor_x += (max_x - min_x) + 1.5;
  }

  double min_x = 1e18, min_y = 1e18, max_x = -1e18, max_y = -1e18;
  for (const auto& p : pos) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  double span = std::max(std::max(max_x - min_x, max_y - min_y), 1e-6);
  double scale = std::min(res * 0.8 / span, res * 0.22);
  double off_x = (res - scale * (max_x - min_x)) / 2.0;
  double off_y = (res - scale * (max_y - min_y)) / 2.0;
  auto to_px = [&](std::array<double, 2> p) {
    return std::array<int, 2>{
        static_cast<int>(std::lround((p[0] - min_x) * scale + off_x)),
        static_cast<int>(std::lround((max_y - p[1]) * scale + off_y))};
  };

  Canvas canvas(res);
  Color bond_color = {0, 0, 0};
  int off = std::max(1, static_cast<int>(std::lround(scale * 0.10)));
  for (const auto& b : m.bonds) {
    auto pa = to_px(pos[static_cast<size_t>(b.a)]);
    auto pb = to_px(pos[static_cast<size_t>(b.b)]);
    double dx = pb[0] - pa[0], dy = pb[1] - pa[1];
    double len = std::hypot(dx, dy);
    int nx = 0, ny = 0;
    if (len > 1e-9) {
      nx = static_cast<int>(std::lround(-dy / len * off));
      ny = static_cast<int>(std::lround(dx / len * off));
    }
    switch (b.order) {
      case BondOrder::Single:
        canvas.line(pa[0], pa[1], pb[0], pb[1], bond_color);
        break;
      case BondOrder::Double:
        canvas.line(pa[0] + nx, pa[1] + ny, pb[0] + nx, pb[1] + ny, bond_color);
        canvas.line(pa[0] - nx, pa[1] - ny, pb[0] - nx, pb[1] - ny, bond_color);
        break;
      case BondOrder::Triple:
        canvas.line(pa[0], pa[1], pb[0], pb[1], bond_color);
        canvas.line(pa[0] + nx, pa[1] + ny, pb[0] + nx, pb[1] + ny, bond_color);
        canvas.line(pa[0] - nx, pa[1] - ny, pb[0] - nx, pb[1] - ny, bond_color);
        break;
      case BondOrder::Aromatic: {
        canvas.line(pa[0], pa[1], pb[0], pb[1], bond_color);
        // short inner stroke marks aromatic bonds; offset toward the ring
        int sign = 1;
        for (const auto& ring : m.rings) {
          bool has_a = std::find(ring.begin(), ring.end(), b.a) != ring.end();
          bool has_b = std::find(ring.begin(), ring.end(), b.b) != ring.end();
          if (!has_a || !has_b) continue;
          double cxr = 0, cyr = 0;
          for (int a : ring) {
            auto p = to_px(pos[static_cast<size_t>(a)]);
            cxr += p[0];
            cyr += p[1];
          }
          cxr /= ring.size();
          cyr /= ring.size();
          double mid_x = 0.5 * (pa[0] + pb[0]), mid_y = 0.5 * (pa[1] + pb[1]);
          sign = ((cxr - mid_x) * nx + (cyr - mid_y) * ny) >= 0 ? 1 : -1;
          break;
        }
        int ax = pa[0] + sign * nx, ay = pa[1] + sign * ny;
        int bx = pb[0] + sign * nx, by = pb[1] + sign * ny;
        int sx = ax + (bx - ax) / 5, sy = ay + (by - ay) / 5;
        int ex = bx - (bx - ax) / 5, ey = by - (by - ay) / 5;
        canvas.line(sx, sy, ex, ey, bond_color);
        break;
      }
    }
  }
  for (int i = 0; i < m.num_atoms(); ++i) {
    std::string label = atom_label(m.atoms[static_cast<size_t>(i)]);
    // a bare carbon with no bonds would otherwise leave the canvas empty
    if (label.empty() && m.degree(i) == 0) label = m.atoms[static_cast<size_t>(i)].element;
    if (label.empty()) continue;
    auto p = to_px(pos[static_cast<size_t>(i)]);
    canvas.text(p[0], p[1], label, element_color(m.atoms[static_cast<size_t>(i)].element));
  }
  return canvas.img;
}

std::array<MolImage, 4> augment_rotations(const MolImage& img) {
  if (img.width != img.height) throw NonSquareImage();
  int n = img.width;
  auto rot90 = [n](const MolImage& in) {
    MolImage out;
    out.width = n;
    out.height = n;
    out.pixels.resize(in.pixels.size());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        // counterclockwise: the right edge becomes the top row
        size_t src = (static_cast<size_t>(x) * n + (n - 1 - y)) * 3;
        size_t dst = (static_cast<size_t>(y) * n + x) * 3;
        out.pixels[dst] = in.pixels[src];
        out.pixels[dst + 1] = in.pixels[src + 1];
        out.pixels[dst + 2] = in.pixels[src + 2];
      }
    return out;
  };
  std::array<MolImage, 4> out;
  out[0] = img;
  out[1] = rot90(img);
  out[2] = rot90(out[1]);
  out[3] = rot90(out[2]);
  return out;
}

void write_ppm(const std::string& path, const MolImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

MolImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingUpstreamArtifact("cannot read " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw Error(path + ": not a P6 ppm");
  int w, h, maxval;
  in >> w >> h >> maxval;
  in.get();  // single whitespace after the header
  MolImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw Error(path + ": truncated pixel data");
  return img;
}

}  // namespace chemlm::render
