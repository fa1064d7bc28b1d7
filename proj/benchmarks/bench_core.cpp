#include <benchmark/benchmark.h>

#include "pfsim/fluid.hpp"
#include "pfsim/levelset.hpp"
#include "pfsim/scene.hpp"
#include "pfsim/sim.hpp"

using namespace pfsim;

namespace {

GridDesc square_grid(int n) {
  GridDesc g;
  g.nx = g.ny = n;
  g.dx = 1.0 / n;
  return g;
}

// Circular drop above a flat pool.
CellField drop_and_pool(const GridDesc& g) {
  CellField phi(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 p = g.cell_center(i, j);
      phi(i, j) = std::min((p - Vec2(0.5, 0.65)).norm() - 0.15, p.y() - 0.3);
    }
  }
  return phi;
}

FaceField swirl(const GridDesc& g) {
  FaceField u(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i <= g.nx; ++i) u.u(i, j) = std::sin(3.0 * g.xface_center(i, j).y());
  }
  for (int j = 0; j <= g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) u.v(i, j) = -0.5 + std::cos(2.0 * g.yface_center(i, j).x());
  }
  return u;
}

void BM_Project(benchmark::State& state) {
  const GridDesc g = square_grid(static_cast<int>(state.range(0)));
  const CellField phi = drop_and_pool(g);
  const FaceField u = swirl(g);
  int iters = 0;
  for (auto _ : state) {
    const ProjectResult r = project(u, phi, {}, 0.01, 1000.0);
    iters = r.iterations;
    benchmark::DoNotOptimize(r.u);
  }
  state.counters["cg_iters"] = iters;
}
BENCHMARK(BM_Project)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Redistance(benchmark::State& state) {
  const GridDesc g = square_grid(static_cast<int>(state.range(0)));
  CellField phi = drop_and_pool(g);
  for (double& v : phi.data()) v *= 2.5;
  for (auto _ : state) benchmark::DoNotOptimize(redistance(phi));
}
BENCHMARK(BM_Redistance)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Advect(benchmark::State& state) {
  const GridDesc g = square_grid(static_cast<int>(state.range(0)));
  const CellField phi = drop_and_pool(g);
  const FaceField u = swirl(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(advect_semilagrangian(u, phi, 0.01));
    benchmark::DoNotOptimize(advect_semilagrangian(u, u, 0.01));
  }
}
BENCHMARK(BM_Advect)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SimStep(benchmark::State& state, const char* scene) {
  const SceneConfig cfg = load_scene(scene);
  Simulator warm(cfg);
  // Advance past the first frames so contact and the volume solve are active.
  for (int k = 0; k < 20; ++k) warm.step(warm.cfl_step());
  for (auto _ : state) {
    state.PauseTiming();
    Simulator sim = warm;
    const double dt = sim.cfl_step();
    state.ResumeTiming();
    benchmark::DoNotOptimize(sim.step(dt));
  }
}
BENCHMARK_CAPTURE(BM_SimStep, porous_wall, "porous_wall")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SimStep, particle_collision, "particle_collision")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
