#include "pfsim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "pfsim/error.hpp"

namespace pfsim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NoInterface: return "NoInterface";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorCode::StepFailed: return "StepFailed";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void GridDesc::validate() const {
  if (nx < 4 || ny < 4) {
    throw Error(ErrorCode::InvalidArgument, "grid needs at least 4x4 cells");
  }
  if (!(dx > 0.0) || !std::isfinite(dx)) {
    throw Error(ErrorCode::InvalidArgument, "grid cell size must be positive");
  }
}

CellField::CellField(const GridDesc& desc, double value)
    : desc_(desc), data_(static_cast<size_t>(desc.nx) * desc.ny, value) {}

double CellField::clamped(int i, int j) const {
  i = std::clamp(i, 0, desc_.nx - 1);
  j = std::clamp(j, 0, desc_.ny - 1);
  return (*this)(i, j);
}

double CellField::min() const { return *std::min_element(data_.begin(), data_.end()); }
double CellField::max() const { return *std::max_element(data_.begin(), data_.end()); }

bool CellField::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

FaceField::FaceField(const GridDesc& desc, double value)
    : desc_(desc),
      u_(static_cast<size_t>(desc.nx + 1) * desc.ny, value),
      v_(static_cast<size_t>(desc.nx) * (desc.ny + 1), value) {}

double FaceField::max_abs() const {
  double m = 0.0;
  for (double a : u_) m = std::max(m, std::abs(a));
  for (double a : v_) m = std::max(m, std::abs(a));
  return m;
}

bool FaceField::all_finite() const {
  auto fin = [](double v) { return std::isfinite(v); };
  return std::all_of(u_.begin(), u_.end(), fin) && std::all_of(v_.begin(), v_.end(), fin);
}

namespace {

// Lattice-coordinate bilinear setup shared by cell and face interpolation.
// `s` is the continuous index along one axis, `n` the number of samples.
struct Lin1D {
  int i0;
  double fr;
  bool clamped;
};

Lin1D linear_1d(double s, int n) {
  Lin1D r{};
  const double lo = 0.0;
  const double hi = static_cast<double>(n - 1);
  r.clamped = s < lo || s > hi;
  s = std::clamp(s, lo, hi);
  r.i0 = std::min(static_cast<int>(std::floor(s)), n - 2);
  r.fr = s - r.i0;
  return r;
}

struct Quad1D {
  int c;
  std::array<double, 3> w;
  std::array<double, 3> dw;  // d w / d s
};

Quad1D quadratic_1d(double s, int n) {
  Quad1D r{};
  const double lo = 0.5;
  const double hi = n - 1.5;
  const bool clamped = s < lo || s > hi;
  s = std::clamp(s, lo, hi);
  r.c = std::clamp(static_cast<int>(std::floor(s + 0.5)), 1, n - 2);
  const double t = s - r.c;
  r.w = {0.5 * (0.5 - t) * (0.5 - t), 0.75 - t * t, 0.5 * (0.5 + t) * (0.5 + t)};
  if (clamped) {
    r.dw = {0.0, 0.0, 0.0};
  } else {
    r.dw = {-(0.5 - t), -2.0 * t, 0.5 + t};
  }
  return r;
}

}  // namespace

InterpStencil bilinear_stencil(const GridDesc& g, const Vec2& x) {
  const Vec2 s = (x - g.origin) / g.dx - Vec2(0.5, 0.5);
  const Lin1D a = linear_1d(s.x(), g.nx);
  const Lin1D b = linear_1d(s.y(), g.ny);
  const double fx = a.fr, fy = b.fr;
  const double dfx = a.clamped ? 0.0 : 1.0 / g.dx;
  const double dfy = b.clamped ? 0.0 : 1.0 / g.dx;

  InterpStencil st;
  st.count = 4;
  st.cells = {g.cell_index(a.i0, b.i0), g.cell_index(a.i0 + 1, b.i0), g.cell_index(a.i0, b.i0 + 1),
              g.cell_index(a.i0 + 1, b.i0 + 1)};
  st.weights = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  st.grads[0] = Vec2(-(1 - fy) * dfx, -(1 - fx) * dfy);
  st.grads[1] = Vec2((1 - fy) * dfx, -fx * dfy);
  st.grads[2] = Vec2(-fy * dfx, (1 - fx) * dfy);
  st.grads[3] = Vec2(fy * dfx, fx * dfy);
  return st;
}

InterpStencil quadratic_stencil(const GridDesc& g, const Vec2& x) {
  const Vec2 s = (x - g.origin) / g.dx - Vec2(0.5, 0.5);
  const Quad1D a = quadratic_1d(s.x(), g.nx);
  const Quad1D b = quadratic_1d(s.y(), g.ny);
  InterpStencil st;
  st.count = 9;
  int k = 0;
  for (int jj = 0; jj < 3; ++jj) {
    for (int ii = 0; ii < 3; ++ii) {
      st.cells[k] = g.cell_index(a.c - 1 + ii, b.c - 1 + jj);
      st.weights[k] = a.w[ii] * b.w[jj];
      st.grads[k] = Vec2(a.dw[ii] * b.w[jj], a.w[ii] * b.dw[jj]) / g.dx;
      ++k;
    }
  }
  return st;
}

namespace {
double apply(const InterpStencil& st, const CellField& f) {
  double acc = 0.0;
  for (int k = 0; k < st.count; ++k) acc += st.weights[k] * f[st.cells[k]];
  return acc;
}
}  // namespace

double bilinear_cell_interp(const CellField& f, const Vec2& x) {
  return apply(bilinear_stencil(f.desc(), x), f);
}

double quadratic_cell_interp(const CellField& f, const Vec2& x) {
  return apply(quadratic_stencil(f.desc(), x), f);
}

Vec2 quadratic_cell_gradient(const CellField& f, const Vec2& x) {
  const InterpStencil st = quadratic_stencil(f.desc(), x);
  Vec2 acc = Vec2::Zero();
  for (int k = 0; k < st.count; ++k) acc += st.grads[k] * f[st.cells[k]];
  return acc;
}

double interp_u(const FaceField& vel, const Vec2& x) {
  const GridDesc& g = vel.desc();
  const Vec2 s = (x - g.origin) / g.dx - Vec2(0.0, 0.5);
  const Lin1D a = linear_1d(s.x(), g.nx + 1);
  const Lin1D b = linear_1d(s.y(), g.ny);
  return (1 - a.fr) * (1 - b.fr) * vel.u(a.i0, b.i0) + a.fr * (1 - b.fr) * vel.u(a.i0 + 1, b.i0) +
         (1 - a.fr) * b.fr * vel.u(a.i0, b.i0 + 1) + a.fr * b.fr * vel.u(a.i0 + 1, b.i0 + 1);
}

double interp_v(const FaceField& vel, const Vec2& x) {
  const GridDesc& g = vel.desc();
  const Vec2 s = (x - g.origin) / g.dx - Vec2(0.5, 0.0);
  const Lin1D a = linear_1d(s.x(), g.nx);
  const Lin1D b = linear_1d(s.y(), g.ny + 1);
  return (1 - a.fr) * (1 - b.fr) * vel.v(a.i0, b.i0) + a.fr * (1 - b.fr) * vel.v(a.i0 + 1, b.i0) +
         (1 - a.fr) * b.fr * vel.v(a.i0, b.i0 + 1) + a.fr * b.fr * vel.v(a.i0 + 1, b.i0 + 1);
}

Vec2 face_interp(const FaceField& vel, const Vec2& x) { return Vec2(interp_u(vel, x), interp_v(vel, x)); }

CellField divergence(const FaceField& vel) {
  const GridDesc& g = vel.desc();
  CellField div(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      div(i, j) = (vel.u(i + 1, j) - vel.u(i, j) + vel.v(i, j + 1) - vel.v(i, j)) / g.dx;
    }
  }
  return div;
}

FaceField cell_gradient_to_faces(const CellField& p) {
  const GridDesc& g = p.desc();
  FaceField grad(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 1; i < g.nx; ++i) grad.u(i, j) = (p(i, j) - p(i - 1, j)) / g.dx;
  }
  for (int j = 1; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) grad.v(i, j) = (p(i, j) - p(i, j - 1)) / g.dx;
  }
  return grad;
}

namespace {

void write_header(std::ostream& os, const GridDesc& g, const std::string& kind) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << g.nx << ' ' << g.ny << ' ' << g.dx << ' ' << g.origin.x() << ' ' << g.origin.y() << ' '
     << kind << '\n';
}

void write_rows(std::ostream& os, const std::vector<double>& data, int cols, int rows) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) os << ' ';
      os << data[static_cast<size_t>(r) * cols + c];
    }
    os << '\n';
  }
}

}  // namespace

void write_cell_field(std::ostream& os, const CellField& f, const std::string& kind) {
  const GridDesc& g = f.desc();
  write_header(os, g, kind);
  write_rows(os, f.data(), g.nx, g.ny);
}

void write_face_fields(std::ostream& os_x, std::ostream& os_y, const FaceField& f) {
  const GridDesc& g = f.desc();
  write_header(os_x, g, "facex");
  write_rows(os_x, f.u_data(), g.nx + 1, g.ny);
  write_header(os_y, g, "facey");
  write_rows(os_y, f.v_data(), g.nx, g.ny + 1);
}

CellField read_cell_field(std::istream& is) {
  GridDesc g;
  double ox = 0, oy = 0;
  std::string kind;
  if (!(is >> g.nx >> g.ny >> g.dx >> ox >> oy >> kind)) {
    throw Error(ErrorCode::IoError, "bad field header");
  }
  if (kind != "cell" && kind != "label") {
    throw Error(ErrorCode::IoError, "expected a cell field, got '" + kind + "'");
  }
  g.origin = Vec2(ox, oy);
  g.validate();
  CellField f(g);
  for (double& v : f.data()) {
    if (!(is >> v)) throw Error(ErrorCode::IoError, "truncated field data");
  }
  return f;
}

}  // namespace pfsim
