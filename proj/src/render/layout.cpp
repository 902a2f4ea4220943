#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "chemlm/render/render.hpp"
#include "chemlm/util/rng.hpp"

namespace chemlm::render {

using chem::Molecule;

namespace {

constexpr double kPi = 3.14159265358979323846;

using Vec = std::array<double, 2>;

Vec operator+(Vec a, Vec b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec operator-(Vec a, Vec b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec operator*(Vec a, double s) { return {a[0] * s, a[1] * s}; }
double norm(Vec a) { return std::hypot(a[0], a[1]); }
Vec rotate(Vec a, double rad) {
  double c = std::cos(rad), s = std::sin(rad);
  return {a[0] * c - a[1] * s, a[0] * s + a[1] * c};
}

// Equal-chord arc fit: k points between fixed A and B, every segment exactly
// 1. Solves the per-segment angle by bisection, then walks the circle.
std::vector<Vec> arc_points(Vec a, Vec b, int k, bool flip) {
  double d = norm(b - a);
  int segs = k + 1;
  if (d >= segs - 1e-9) {
    // nearly straight: spread evenly (degenerate, bond lengths best-effort)
    std::vector<Vec> out;
    for (int i = 1; i <= k; ++i) out.push_back(a + (b - a) * (double(i) / segs));
    return out;
  }
  double lo = 1e-9, hi = 2.0 * kPi / segs - 1e-9;
  auto f = [&](double th) { return std::sin(segs * th / 2.0) - d * std::sin(th / 2.0); };
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0) lo = mid;
    else hi = mid;
  }
  double theta = 0.5 * (lo + hi);
  double r = 1.0 / (2.0 * std::sin(theta / 2.0));
  Vec mid = (a + b) * 0.5;
  double h2 = r * r - d * d / 4.0;
  double h = h2 > 0 ? std::sqrt(h2) : 0.0;
  Vec ab = b - a;
  Vec n = {-ab[1] / d, ab[0] / d};
  // the arc needs to subtend segs*theta; if that exceeds pi the center sits
  // on the same side as the bulge
  if (segs * theta > kPi) h = -h;
  Vec center = flip ? mid - n * h : mid + n * h;
  double ang_a = std::atan2(a[1] - center[1], a[0] - center[0]);
  double ang_b = std::atan2(b[1] - center[1], b[0] - center[0]);
  // pick the rotation direction that lands on B after segs steps
  double best_err = 1e18;
  int best_sign = 1;
  for (int sign : {1, -1}) {
    double end = ang_a + sign * segs * theta;
    double err = std::abs(std::remainder(end - ang_b, 2.0 * kPi));
    if (err < best_err) {
      best_err = err;
      best_sign = sign;
    }
  }
  std::vector<Vec> out;
  for (int i = 1; i <= k; ++i) {
    double ang = ang_a + best_sign * i * theta;
    out.push_back(center + Vec{r * std::cos(ang), r * std::sin(ang)});
  }
  return out;
}

struct Placer {
  const Molecule& m;
  std::vector<char> placed;
  std::vector<Vec> pos;
  std::vector<char> ring_done;
  std::vector<int> zig;

  explicit Placer(const Molecule& mol)
      : m(mol), placed(mol.atoms.size(), 0), pos(mol.atoms.size(), {0, 0}),
        ring_done(mol.rings.size(), 0), zig(mol.atoms.size(), 1) {}

  double clearance(Vec p, int self) const {
    double best = 1e18;
    for (int i = 0; i < m.num_atoms(); ++i) {
      if (!placed[static_cast<size_t>(i)] || i == self) continue;
      best = std::min(best, norm(p - pos[static_cast<size_t>(i)]));
    }
    return best;
  }

  Vec placed_centroid(const std::set<int>& exclude) const {
    Vec c = {0, 0};
    int n = 0;
    for (int i = 0; i < m.num_atoms(); ++i) {
      if (!placed[static_cast<size_t>(i)] || exclude.count(i)) continue;
      c = c + pos[static_cast<size_t>(i)];
      ++n;
    }
    if (n == 0) return {0.0, -1.0};
    return c * (1.0 / n);
  }

  void place_ring(int ri) {
    const auto& ring = m.rings[static_cast<size_t>(ri)];
    ring_done[static_cast<size_t>(ri)] = 1;
    int n = static_cast<int>(ring.size());
    double r = 0.5 / std::sin(kPi / n);
    std::vector<int> anchors;
    for (int i = 0; i < n; ++i)
      if (placed[static_cast<size_t>(ring[static_cast<size_t>(i)])]) anchors.push_back(i);

    if (anchors.empty()) {
      for (int i = 0; i < n; ++i) {
        double ang = kPi / 2.0 + 2.0 * kPi * i / n;
        set_pos(ring[static_cast<size_t>(i)], {r * std::cos(ang), r * std::sin(ang)});
      }
      return;
    }
    if (anchors.size() == 1) {
      // spiro or chain attachment: hang the polygon off the anchor, pointing
      // away from whatever is already drawn near it
      int ai = anchors[0];
      int a = ring[static_cast<size_t>(ai)];
      Vec away = {0, 1};
      Vec nb = {0, 0};
      int count = 0;
      for (int bi : m.adj[static_cast<size_t>(a)]) {
        int v = m.other_end(bi, a);
        if (placed[static_cast<size_t>(v)]) {
          nb = nb + (pos[static_cast<size_t>(v)] - pos[static_cast<size_t>(a)]);
          ++count;
        }
      }
      if (count > 0 && norm(nb) > 1e-9) away = nb * (-1.0 / norm(nb));
      Vec center = pos[static_cast<size_t>(a)] + away * r;
      double ang0 = std::atan2(pos[static_cast<size_t>(a)][1] - center[1],
                               pos[static_cast<size_t>(a)][0] - center[0]);
      for (int i = 1; i < n; ++i) {
        double ang = ang0 + 2.0 * kPi * i / n;
        set_pos(ring[static_cast<size_t>((ai + i) % n)],
                {center[0] + r * std::cos(ang), center[1] + r * std::sin(ang)});
      }
      return;
    }
    // general case: fill every run of unplaced atoms between consecutive
    // anchors with an equal-chord arc, bulging away from the placed bulk
    std::set<int> ring_set(ring.begin(), ring.end());
    Vec ref = placed_centroid(ring_set);
    for (size_t aidx = 0; aidx < anchors.size(); ++aidx) {
      int s = anchors[aidx];
      int e = anchors[(aidx + 1) % anchors.size()];
      int gap = (e - s + n) % n;
      if (gap <= 1) continue;  // no unplaced atoms in between
      int k = gap - 1;
      Vec pa = pos[static_cast<size_t>(ring[static_cast<size_t>(s)])];
      Vec pb = pos[static_cast<size_t>(ring[static_cast<size_t>(e)])];
      auto side_a = arc_points(pa, pb, k, false);
      auto side_b = arc_points(pa, pb, k, true);
      auto score = [&](const std::vector<Vec>& pts) {
        double worst = 1e18;
        Vec centroid = {0, 0};
        for (const auto& p : pts) {
          worst = std::min(worst, clearance(p, -1));
          centroid = centroid + p;
        }
        centroid = centroid * (1.0 / pts.size());
        return std::pair<double, double>(worst, norm(centroid - ref));
      };
      const auto& pick = score(side_a) >= score(side_b) ? side_a : side_b;
      for (int i = 1; i <= k; ++i)
        set_pos(ring[static_cast<size_t>((s + i) % n)], pick[static_cast<size_t>(i - 1)]);
    }
  }

  void set_pos(int atom, Vec p) {
    pos[static_cast<size_t>(atom)] = p;
    placed[static_cast<size_t>(atom)] = 1;
  }

  void place_chain_atom(int u, int v, Rng* shuffler) {
    std::vector<Vec> dirs;
    for (int bi : m.adj[static_cast<size_t>(u)]) {
      int w = m.other_end(bi, u);
      if (placed[static_cast<size_t>(w)] && w != v) {
        Vec d = pos[static_cast<size_t>(w)] - pos[static_cast<size_t>(u)];
        double l = norm(d);
        if (l > 1e-9) dirs.push_back(d * (1.0 / l));
      }
    }
    std::vector<Vec> candidates;
    if (dirs.empty()) {
      candidates.push_back(rotate({1, 0}, zig[static_cast<size_t>(u)] * kPi / 6.0));
      candidates.push_back(rotate({1, 0}, -zig[static_cast<size_t>(u)] * kPi / 6.0));
    } else if (dirs.size() == 1) {
      Vec in = dirs[0] * -1.0;  // straight-ahead direction
      double pref = zig[static_cast<size_t>(u)] * kPi / 3.0;
      for (double ang : {pref, -pref, zig[static_cast<size_t>(u)] * 2.0 * kPi / 3.0,
                         -zig[static_cast<size_t>(u)] * 2.0 * kPi / 3.0, 0.0})
        candidates.push_back(rotate(in, ang));
    } else {
      // widest angular gap between existing substituents
      std::vector<double> angs;
      for (const auto& d : dirs) angs.push_back(std::atan2(d[1], d[0]));
      std::sort(angs.begin(), angs.end());
      double best_gap = -1, best_mid = 0;
      for (size_t i = 0; i < angs.size(); ++i) {
        double a0 = angs[i];
        double a1 = (i + 1 < angs.size()) ? angs[i + 1] : angs[0] + 2.0 * kPi;
        if (a1 - a0 > best_gap) {
          best_gap = a1 - a0;
          best_mid = 0.5 * (a0 + a1);
        }
      }
      candidates.push_back({std::cos(best_mid), std::sin(best_mid)});
      candidates.push_back(rotate({std::cos(best_mid), std::sin(best_mid)}, kPi / 6.0));
      candidates.push_back(rotate({std::cos(best_mid), std::sin(best_mid)}, -kPi / 6.0));
    }
    if (shuffler) {
      for (size_t i = candidates.size(); i > 1; --i)
        std::swap(candidates[i - 1], candidates[shuffler->next_below(i)]);
    }
    Vec best = candidates[0];
    double best_clear = -1;
    for (const auto& c : candidates) {
      Vec p = pos[static_cast<size_t>(u)] + c;
      double cl = clearance(p, u);
      if (cl >= 0.9) {
        best = c;
        best_clear = cl;
        break;
      }
      if (cl > best_clear) {
        best_clear = cl;
        best = c;
      }
    }
    set_pos(v, pos[static_cast<size_t>(u)] + best);
    zig[static_cast<size_t>(v)] = -zig[static_cast<size_t>(u)];
  }

  void run(Rng* shuffler) {
    int start = 0;
    if (!m.rings.empty()) start = m.rings[0][0];
    if (!m.rings.empty()) {
      place_ring(0);
    } else {
      set_pos(start, {0, 0});
    }
    std::deque<int> queue;
    for (int i = 0; i < m.num_atoms(); ++i)
      if (placed[static_cast<size_t>(i)]) queue.push_back(i);
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (size_t ri = 0; ri < m.rings.size(); ++ri) {
        if (ring_done[ri]) continue;
        const auto& ring = m.rings[ri];
        if (std::find(ring.begin(), ring.end(), u) == ring.end()) continue;
        std::vector<int> fresh;
        for (int a : ring)
          if (!placed[static_cast<size_t>(a)]) fresh.push_back(a);
        place_ring(static_cast<int>(ri));
        for (int a : fresh) queue.push_back(a);
      }
      for (int bi : m.adj[static_cast<size_t>(u)]) {
        int v = m.other_end(bi, u);
        if (placed[static_cast<size_t>(v)]) continue;
        place_chain_atom(u, v, shuffler);
        queue.push_back(v);
      }
    }
  }

  double min_nonadjacent_distance() const {
    double best = 1e18;
    for (int i = 0; i < m.num_atoms(); ++i)
      for (int j = i + 1; j < m.num_atoms(); ++j) {
        if (m.bond_between(i, j)) continue;
        best = std::min(best, norm(pos[static_cast<size_t>(i)] - pos[static_cast<size_t>(j)]));
      }
    return best;
  }
};

// Position-based refinement: push colliding pairs apart, then re-project
// every bond back to length 1 until the constraint holds to 1e-9.
void refine(const Molecule& m, std::vector<Vec>& pos, uint64_t seed) {
  Rng rng(seed);
  for (int iter = 0; iter < 150; ++iter) {
    bool any = false;
    for (int i = 0; i < m.num_atoms(); ++i)
      for (int j = i + 1; j < m.num_atoms(); ++j) {
        if (m.bond_between(i, j)) continue;
        Vec d = pos[static_cast<size_t>(j)] - pos[static_cast<size_t>(i)];
        double l = norm(d);
        if (l >= 0.5) continue;
        any = true;
        Vec push = l > 1e-9 ? d * (1.0 / l)
                            : rotate({1, 0}, rng.next_uniform(0.0, 2.0 * kPi));
        double amount = 0.5 * (0.5 - l) + 0.01;
        pos[static_cast<size_t>(i)] = pos[static_cast<size_t>(i)] - push * amount;
        pos[static_cast<size_t>(j)] = pos[static_cast<size_t>(j)] + push * amount;
      }
    for (int proj = 0; proj < 40; ++proj)
      for (const auto& b : m.bonds) {
        Vec d = pos[static_cast<size_t>(b.b)] - pos[static_cast<size_t>(b.a)];
        double l = norm(d);
        if (l < 1e-9) continue;
        Vec corr = d * (0.5 * (l - 1.0) / l);
        pos[static_cast<size_t>(b.a)] = pos[static_cast<size_t>(b.a)] + corr;
        pos[static_cast<size_t>(b.b)] = pos[static_cast<size_t>(b.b)] - corr;
      }
    if (!any) break;
  }
  // final tightening of the bond constraint
  for (int proj = 0; proj < 2000; ++proj) {
    double worst = 0.0;
    for (const auto& b : m.bonds) {
      Vec d = pos[static_cast<size_t>(b.b)] - pos[static_cast<size_t>(b.a)];
      double l = norm(d);
      worst = std::max(worst, std::abs(l - 1.0));
      if (l < 1e-9) continue;
      Vec corr = d * (0.5 * (l - 1.0) / l);
      pos[static_cast<size_t>(b.a)] = pos[static_cast<size_t>(b.a)] + corr;
      pos[static_cast<size_t>(b.b)] = pos[static_cast<size_t>(b.b)] - corr;
    }
    if (worst < 1e-9) break;
  }
}

}  // namespace

Layout2D layout_2d(const Molecule& m) {
  if (m.num_atoms() == 0) throw ConfigInvalid("layout_2d: empty molecule");
  if (m.fragments().size() != 1) throw DisconnectedMolecule();

  std::vector<Vec> best_pos;
  double best_score = -1e18;
  {
    Placer first(m);
    first.run(nullptr);
    best_pos = first.pos;
    best_score = first.min_nonadjacent_distance();
  }
  for (uint64_t variant = 1; variant <= 40 && best_score < 0.25; ++variant) {
    Placer trial(m);
    Rng shuffler(variant);
    trial.run(&shuffler);
    double score = trial.min_nonadjacent_distance();
    if (score > best_score) {
      best_score = score;
      best_pos = trial.pos;
    }
  }
  if (best_score < 0.25 && m.num_bonds() > 0) refine(m, best_pos, 7);
  Layout2D out;
  out.pos = std::move(best_pos);
  return out;
}

}  // namespace chemlm::render
