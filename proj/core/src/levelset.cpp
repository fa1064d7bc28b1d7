#include "pfsim/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "pfsim/error.hpp"

namespace pfsim {

namespace {
constexpr double kSaturation = 60.0;
}

double heaviside(double phi, double k) {
  const double a = 2.0 * k * phi;
  if (a > kSaturation) return 0.0;
  if (a < -kSaturation) return 1.0;
  return 1.0 / (1.0 + std::exp(a));
}

double heaviside_prime(double phi, double k) {
  const double a = 2.0 * k * phi;
  if (std::abs(a) > kSaturation) return 0.0;
  const double e = std::exp(a);
  return -2.0 * k * e / ((1.0 + e) * (1.0 + e));
}

double heaviside_sharpness(double domain_length, double band_width) {
  if (!(band_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "band width must be positive");
  return domain_length / band_width;
}

double smoothed_density(double phi, double k, double rho_liquid, double rho_air) {
  return (rho_liquid - rho_air) * heaviside(phi, k) + rho_air;
}

ComponentLabels connected_components(const CellField& phi) {
  const GridDesc& g = phi.desc();
  ComponentLabels out;
  out.label.assign(g.cell_count(), -1);
  std::vector<int> stack;
  for (int start = 0; start < g.cell_count(); ++start) {
    if (phi[start] >= 0.0 || out.label[start] >= 0) continue;
    const int id = out.count++;
    out.label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      const int i = c % g.nx, j = c / g.nx;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      for (int q = 0; q < 4; ++q) {
        if (!g.in_cells(ni[q], nj[q])) continue;
        const int n = g.cell_index(ni[q], nj[q]);
        if (phi[n] < 0.0 && out.label[n] < 0) {
          out.label[n] = id;
          stack.push_back(n);
        }
      }
    }
  }
  return out;
}

std::vector<int> attribute_cells(const CellField& phi, const ComponentLabels& labels) {
  const GridDesc& g = phi.desc();
  std::vector<int> attr = labels.label;
  if (labels.count == 0) return attr;
  std::vector<int> frontier;
  for (int c = 0; c < g.cell_count(); ++c) {
    if (attr[c] >= 0) frontier.push_back(c);
  }
  std::vector<int> next;
  std::vector<int> candidates;
  while (!frontier.empty()) {
    candidates.clear();
    for (int c : frontier) {
      const int i = c % g.nx, j = c / g.nx;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      for (int q = 0; q < 4; ++q) {
        if (!g.in_cells(ni[q], nj[q])) continue;
        const int n = g.cell_index(ni[q], nj[q]);
        if (attr[n] < 0) candidates.push_back(n);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    next.clear();
    std::vector<int> chosen(candidates.size(), -1);
    for (size_t q = 0; q < candidates.size(); ++q) {
      const int c = candidates[q];
      const int i = c % g.nx, j = c / g.nx;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      double best = std::numeric_limits<double>::infinity();
      int best_cell = std::numeric_limits<int>::max();
      for (int s = 0; s < 4; ++s) {
        if (!g.in_cells(ni[s], nj[s])) continue;
        const int n = g.cell_index(ni[s], nj[s]);
        if (attr[n] < 0) continue;
        const double a = std::abs(phi[n]);
        if (a < best || (a == best && n < best_cell)) {
          best = a;
          best_cell = n;
        }
      }
      chosen[q] = attr[best_cell];
    }
    for (size_t q = 0; q < candidates.size(); ++q) {
      attr[candidates[q]] = chosen[q];
      next.push_back(candidates[q]);
    }
    frontier.swap(next);
  }
  return attr;
}

std::vector<double> discrete_volume(const CellField& phi, double k, const ComponentLabels& labels) {
  std::vector<double> vol(labels.count, 0.0);
  if (labels.count == 0) return vol;
  const std::vector<int> attr = attribute_cells(phi, labels);
  const double vc = phi.desc().cell_volume();
  for (int c = 0; c < phi.size(); ++c) {
    if (attr[c] >= 0) vol[attr[c]] += heaviside(phi[c], k) * vc;
  }
  return vol;
}

std::vector<double> discrete_volume(const LevelSet& ls) {
  return discrete_volume(ls.phi, ls.sharpness, ls.components);
}

double total_volume(const CellField& phi, double k) {
  double v = 0.0;
  for (int c = 0; c < phi.size(); ++c) v += heaviside(phi[c], k);
  return v * phi.desc().cell_volume();
}

double sharp_volume(const CellField& phi) {
  const auto n = std::count_if(phi.data().begin(), phi.data().end(), [](double v) { return v < 0; });
  return static_cast<double>(n) * phi.desc().cell_volume();
}

namespace {

constexpr double kExactBandCells = 12.0;

}  // namespace

CellField redistance(const CellField& phi) {
  const GridDesc& g = phi.desc();
  const double dx = g.dx;
  const double inf = std::numeric_limits<double>::infinity();
  const int n = g.cell_count();
  std::vector<double> dist(n, inf);
  std::vector<char> accepted(n, 0);

  auto opposite = [](double a, double b) { return (a < 0.0) != (b < 0.0); };

  // Cells next to a sign change are seeded with phi / |grad phi| and project
  // to a foot point on the interface. Cells within the band take the
  // distance to the nearest foot point; fast marching covers the rest.
  std::vector<Vec2> feet;
  bool any_interface = false;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int c = g.cell_index(i, j);
      const double p = phi[c];
      if (p == 0.0) {
        dist[c] = 0.0;
        accepted[c] = 1;
        any_interface = true;
        feet.push_back(g.cell_center(i, j));
        continue;
      }
      double ax = inf, ay = inf;
      for (int s = -1; s <= 1; s += 2) {
        if (g.in_cells(i + s, j) && opposite(p, phi(i + s, j))) {
          ax = std::min(ax, p / (p - phi(i + s, j)) * dx);
        }
        if (g.in_cells(i, j + s) && opposite(p, phi(i, j + s))) {
          ay = std::min(ay, p / (p - phi(i, j + s)) * dx);
        }
      }
      if (ax == inf && ay == inf) continue;
      any_interface = true;
      const double crossing =
          (ax < inf && ay < inf) ? 1.0 / std::sqrt(1.0 / (ax * ax) + 1.0 / (ay * ay)) : std::min(ax, ay);
      const Vec2 grad = cell_gradient(phi, i, j);
      const double gn = grad.norm();
      double d = crossing;
      if (gn > 0.5) {
        // Values that already look like distances are kept so a second pass
        // reproduces the first.
        const bool distance_like = gn > 0.8 && gn < 1.25;
        d = std::min(distance_like ? std::abs(p) : std::abs(p) / gn, std::min(ax, ay));
        feet.push_back(g.cell_center(i, j) - std::copysign(d, p) * grad / gn);
      }
      dist[c] = d;
      accepted[c] = 1;
    }
  }
  if (!any_interface) throw Error(ErrorCode::NoInterface, "level set has no sign change");

  const int reach = static_cast<int>(std::ceil(kExactBandCells));
  std::vector<double> foot_dist(n, inf);
  for (const Vec2& f : feet) {
    const Vec2 r = (f - g.origin) / dx - Vec2(0.5, 0.5);
    const int ic = static_cast<int>(std::floor(r.x())), jc = static_cast<int>(std::floor(r.y()));
    for (int j = std::max(0, jc - reach); j <= std::min(g.ny - 1, jc + reach + 1); ++j) {
      for (int i = std::max(0, ic - reach); i <= std::min(g.nx - 1, ic + reach + 1); ++i) {
        const int c = g.cell_index(i, j);
        foot_dist[c] = std::min(foot_dist[c], (g.cell_center(i, j) - f).norm());
      }
    }
  }
  for (int c = 0; c < n; ++c) {
    if (!accepted[c] && foot_dist[c] <= kExactBandCells * dx) {
      dist[c] = foot_dist[c];
      accepted[c] = 1;
    }
  }

  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;

  auto update = [&](int i, int j) {
    const int c = g.cell_index(i, j);
    if (accepted[c]) return;
    auto acc = [&](int a, int b) {
      if (!g.in_cells(a, b)) return inf;
      const int q = g.cell_index(a, b);
      return accepted[q] ? dist[q] : inf;
    };
    const double a = std::min(acc(i - 1, j), acc(i + 1, j));
    const double b = std::min(acc(i, j - 1), acc(i, j + 1));
    double d;
    if (a == inf && b == inf) return;
    if (a == inf || b == inf || std::abs(a - b) >= dx) {
      d = std::min(a, b) + dx;
    } else {
      d = 0.5 * (a + b + std::sqrt(2.0 * dx * dx - (a - b) * (a - b)));
    }
    if (d < dist[c]) {
      dist[c] = d;
      heap.emplace(d, c);
    }
  };

  for (int c = 0; c < n; ++c) {
    if (!accepted[c]) continue;
    const int i = c % g.nx, j = c / g.nx;
    if (g.in_cells(i - 1, j)) update(i - 1, j);
    if (g.in_cells(i + 1, j)) update(i + 1, j);
    if (g.in_cells(i, j - 1)) update(i, j - 1);
    if (g.in_cells(i, j + 1)) update(i, j + 1);
  }
  while (!heap.empty()) {
    const auto [d, c] = heap.top();
    heap.pop();
    if (accepted[c] || d > dist[c]) continue;
    accepted[c] = 1;
    const int i = c % g.nx, j = c / g.nx;
    if (g.in_cells(i - 1, j)) update(i - 1, j);
    if (g.in_cells(i + 1, j)) update(i + 1, j);
    if (g.in_cells(i, j - 1)) update(i, j - 1);
    if (g.in_cells(i, j + 1)) update(i, j + 1);
  }

  CellField out(g);
  for (int c = 0; c < n; ++c) {
    const double s = phi[c] < 0.0 ? -1.0 : (phi[c] > 0.0 ? 1.0 : 0.0);
    out[c] = s * dist[c];
  }
  return out;
}

Vec2 cell_gradient(const CellField& phi, int i, int j) {
  const GridDesc& g = phi.desc();
  auto diff = [&](int n, int idx, double lo, double mid, double hi) {
    if (idx == 0) return (hi - mid) / g.dx;
    if (idx == n - 1) return (mid - lo) / g.dx;
    return (hi - lo) / (2.0 * g.dx);
  };
  const double c = phi(i, j);
  return Vec2(diff(g.nx, i, phi.clamped(i - 1, j), c, phi.clamped(i + 1, j)),
              diff(g.ny, j, phi.clamped(i, j - 1), c, phi.clamped(i, j + 1)));
}

double cell_curvature(const CellField& phi, int i, int j) {
  const double dx = phi.desc().dx;
  const Vec2 gr = cell_gradient(phi, i, j);
  const double norm = gr.norm();
  if (norm < 1e-8) return 0.0;
  const double c = phi(i, j);
  const double pxx = (phi.clamped(i + 1, j) - 2.0 * c + phi.clamped(i - 1, j)) / (dx * dx);
  const double pyy = (phi.clamped(i, j + 1) - 2.0 * c + phi.clamped(i, j - 1)) / (dx * dx);
  const double pxy = (phi.clamped(i + 1, j + 1) - phi.clamped(i + 1, j - 1) -
                      phi.clamped(i - 1, j + 1) + phi.clamped(i - 1, j - 1)) /
                     (4.0 * dx * dx);
  const double px = gr.x(), py = gr.y();
  const double kappa =
      (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (norm * norm * norm);
  return std::clamp(kappa, -1.0 / dx, 1.0 / dx);
}

SurfaceGeometry normal_and_curvature(const CellField& phi, const Vec2& x) {
  const GridDesc& g = phi.desc();
  const InterpStencil st = bilinear_stencil(g, x);
  Vec2 grad = Vec2::Zero();
  double kappa = 0.0;
  for (int q = 0; q < st.count; ++q) {
    const int c = st.cells[q];
    const int i = c % g.nx, j = c / g.nx;
    grad += st.weights[q] * cell_gradient(phi, i, j);
    kappa += st.weights[q] * cell_curvature(phi, i, j);
  }
  SurfaceGeometry out;
  const double norm = grad.norm();
  if (norm < 1e-8) {
    out.degenerate = true;
    return out;
  }
  out.normal = grad / norm;
  out.curvature = std::clamp(kappa, -1.0 / g.dx, 1.0 / g.dx);
  return out;
}

double narrowband_width(double max_speed, double dt, double dx) {
  return std::max(3.0 * max_speed * dt, 3.0 * dx);
}

NarrowbandSet select_narrowband(const CellField& phi_star, double eps) {
  NarrowbandSet nb;
  nb.eps = std::max(eps, 3.0 * phi_star.desc().dx);
  nb.index_of.assign(phi_star.size(), -1);
  nb.no_fluid = std::none_of(phi_star.data().begin(), phi_star.data().end(),
                             [](double v) { return v < 0.0; });
  for (int c = 0; c < phi_star.size(); ++c) {
    if (std::abs(phi_star[c]) < nb.eps) {
      nb.index_of[c] = static_cast<int>(nb.cells.size());
      nb.cells.push_back(c);
    }
  }
  return nb;
}

std::vector<double> update_component_targets(const ComponentLabels& prev,
                                             const std::vector<double>& prev_targets,
                                             const ComponentLabels& next,
                                             const std::vector<double>& next_volumes,
                                             const std::vector<int>* prev_attribution,
                                             const std::vector<int>* next_attribution) {
  if (static_cast<int>(prev_targets.size()) != prev.count ||
      static_cast<int>(next_volumes.size()) != next.count || prev.label.size() != next.label.size()) {
    throw Error(ErrorCode::InvalidArgument, "component bookkeeping size mismatch");
  }
  const int P = prev.count, N = next.count;
  std::vector<int> parent(P + N);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  std::vector<char> prev_linked(P, 0), next_linked(N, 0);
  for (size_t c = 0; c < next.label.size(); ++c) {
    if (prev.label[c] >= 0 && next.label[c] >= 0) {
      unite(prev.label[c], P + next.label[c]);
      prev_linked[prev.label[c]] = 1;
      next_linked[next.label[c]] = 1;
    }
  }
  // Components without overlap attach to the components owning their cells in
  // the other state's attribution map; a sizeable minority owner is linked too
  // so a blob landing between two others is shared rather than handed to one.
  auto attach = [&](const ComponentLabels& own, const std::vector<char>& linked, int own_offset,
                    const std::vector<int>& other_attr, int other_count, int other_offset) {
    std::vector<std::vector<int>> votes(own.count);
    for (int a = 0; a < own.count; ++a) {
      if (!linked[a]) votes[a].assign(other_count, 0);
    }
    for (size_t c = 0; c < own.label.size(); ++c) {
      const int a = own.label[c];
      const int b = other_attr[c];
      if (a >= 0 && b >= 0 && b < other_count && !votes[a].empty()) ++votes[a][b];
    }
    for (int a = 0; a < own.count; ++a) {
      if (votes[a].empty()) continue;
      const int best = *std::max_element(votes[a].begin(), votes[a].end());
      if (best == 0) continue;
      for (int b = 0; b < other_count; ++b) {
        if (4 * votes[a][b] >= best) unite(own_offset + a, other_offset + b);
      }
    }
  };
  if (next_attribution != nullptr && N > 0) attach(prev, prev_linked, 0, *next_attribution, N, P);
  if (prev_attribution != nullptr && P > 0) attach(next, next_linked, P, *prev_attribution, P, 0);

  std::vector<double> group_target(P + N, 0.0);
  std::vector<double> group_volume(P + N, 0.0);
  std::vector<int> group_parents(P + N, 0);
  std::vector<int> group_children(P + N, 0);
  for (int p = 0; p < P; ++p) {
    group_target[find(p)] += prev_targets[p];
    group_parents[find(p)]++;
  }
  for (int q = 0; q < N; ++q) {
    group_volume[find(P + q)] += next_volumes[q];
    group_children[find(P + q)]++;
  }
  std::vector<double> out(N, 0.0);
  for (int q = 0; q < N; ++q) {
    const int r = find(P + q);
    if (group_parents[r] == 0) {
      out[q] = next_volumes[q];
    } else if (group_volume[r] > 0.0) {
      out[q] = group_target[r] * next_volumes[q] / group_volume[r];
    } else {
      out[q] = group_target[r] / group_children[r];
    }
  }
  return out;
}

std::vector<double> pool_touching_targets(const std::vector<double>& targets,
                                          const std::vector<double>& volumes, const CellField& phi,
                                          const std::vector<int>& attribution, double k, double h_min) {
  const GridDesc& g = phi.desc();
  const int N = static_cast<int>(targets.size());
  if (static_cast<int>(volumes.size()) != N || static_cast<int>(attribution.size()) != g.cell_count()) {
    throw Error(ErrorCode::InvalidArgument, "pool_touching_targets size mismatch");
  }
  std::vector<int> parent(N);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto link = [&](int c, int q) {
    const int a = attribution[c], b = attribution[q];
    if (a < 0 || b < 0 || a == b || a >= N || b >= N) return;
    if (heaviside(phi[c], k) < h_min || heaviside(phi[q], k) < h_min) return;
    const int ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  };
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int c = g.cell_index(i, j);
      if (i + 1 < g.nx) link(c, g.cell_index(i + 1, j));
      if (j + 1 < g.ny) link(c, g.cell_index(i, j + 1));
    }
  }
  std::vector<double> group_target(N, 0.0), group_volume(N, 0.0);
  std::vector<int> group_size(N, 0);
  for (int q = 0; q < N; ++q) {
    group_target[find(q)] += targets[q];
    group_volume[find(q)] += volumes[q];
    group_size[find(q)]++;
  }
  std::vector<double> out = targets;
  for (int q = 0; q < N; ++q) {
    const int r = find(q);
    if (group_size[r] < 2) continue;
    out[q] = group_volume[r] > 0.0 ? group_target[r] * volumes[q] / group_volume[r]
                                   : group_target[r] / group_size[r];
  }
  return out;
}

}  // namespace pfsim
