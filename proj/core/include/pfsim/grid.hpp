#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pfsim {

using Vec2 = Eigen::Vector2d;

/// Uniform square-cell grid. Cell (i, j) spans
/// [origin + (i, j) dx, origin + (i + 1, j + 1) dx].
struct GridDesc {
  int nx = 0;
  int ny = 0;
  double dx = 0.0;
  Vec2 origin = Vec2::Zero();

  void validate() const;

  int cell_count() const { return nx * ny; }
  int cell_index(int i, int j) const { return j * nx + i; }
  bool in_cells(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
  Vec2 cell_center(int i, int j) const {
    return origin + Vec2((i + 0.5) * dx, (j + 0.5) * dx);
  }
  Vec2 xface_center(int i, int j) const { return origin + Vec2(i * dx, (j + 0.5) * dx); }
  Vec2 yface_center(int i, int j) const { return origin + Vec2((i + 0.5) * dx, j * dx); }
  Vec2 extent() const { return Vec2(nx * dx, ny * dx); }
  double cell_volume() const { return dx * dx; }

  bool operator==(const GridDesc& o) const {
    return nx == o.nx && ny == o.ny && dx == o.dx && origin == o.origin;
  }
};

/// Scalar samples at cell centers.
class CellField {
 public:
  CellField() = default;
  explicit CellField(const GridDesc& desc, double value = 0.0);

  const GridDesc& desc() const { return desc_; }
  int size() const { return static_cast<int>(data_.size()); }

  double& operator()(int i, int j) { return data_[desc_.cell_index(i, j)]; }
  double operator()(int i, int j) const { return data_[desc_.cell_index(i, j)]; }
  double& operator[](int idx) { return data_[idx]; }
  double operator[](int idx) const { return data_[idx]; }

  /// Clamped lookup; indices outside the grid read the nearest boundary cell.
  double clamped(int i, int j) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double min() const;
  double max() const;
  bool all_finite() const;

 private:
  GridDesc desc_;
  std::vector<double> data_;
};

enum class Axis { X = 0, Y = 1 };

/// Staggered velocity: u on x-faces ((nx+1) x ny), v on y-faces (nx x (ny+1)).
class FaceField {
 public:
  FaceField() = default;
  explicit FaceField(const GridDesc& desc, double value = 0.0);

  const GridDesc& desc() const { return desc_; }

  double& u(int i, int j) { return u_[j * (desc_.nx + 1) + i]; }
  double u(int i, int j) const { return u_[j * (desc_.nx + 1) + i]; }
  double& v(int i, int j) { return v_[j * desc_.nx + i]; }
  double v(int i, int j) const { return v_[j * desc_.nx + i]; }

  double& face(Axis a, int i, int j) { return a == Axis::X ? u(i, j) : v(i, j); }
  double face(Axis a, int i, int j) const { return a == Axis::X ? u(i, j) : v(i, j); }

  std::vector<double>& u_data() { return u_; }
  const std::vector<double>& u_data() const { return u_; }
  std::vector<double>& v_data() { return v_; }
  const std::vector<double>& v_data() const { return v_; }

  int u_size() const { return static_cast<int>(u_.size()); }
  int v_size() const { return static_cast<int>(v_.size()); }

  double max_abs() const;
  bool all_finite() const;

 private:
  GridDesc desc_;
  std::vector<double> u_;
  std::vector<double> v_;
};

/// Up to nine (cell, weight, weight-gradient) entries describing one
/// interpolation query. Weights are a partition of unity.
struct InterpStencil {
  std::array<int, 9> cells{};
  std::array<double, 9> weights{};
  std::array<Vec2, 9> grads{};
  int count = 0;
};

/// Bilinear weights over the dual cell containing x (clamped to the grid).
InterpStencil bilinear_stencil(const GridDesc& g, const Vec2& x);
/// Quadratic B-spline weights over a 3x3 patch of cell centers (clamped).
InterpStencil quadratic_stencil(const GridDesc& g, const Vec2& x);

double bilinear_cell_interp(const CellField& f, const Vec2& x);
double quadratic_cell_interp(const CellField& f, const Vec2& x);
Vec2 quadratic_cell_gradient(const CellField& f, const Vec2& x);

double interp_u(const FaceField& vel, const Vec2& x);
double interp_v(const FaceField& vel, const Vec2& x);
Vec2 face_interp(const FaceField& vel, const Vec2& x);

CellField divergence(const FaceField& vel);
/// Interior faces get the one-sided difference of neighboring cells; boundary faces get 0.
FaceField cell_gradient_to_faces(const CellField& p);

// Text dumps: header "nx ny dx ox oy kind", then one row of samples per line.
void write_cell_field(std::ostream& os, const CellField& f, const std::string& kind = "cell");
void write_face_fields(std::ostream& os_x, std::ostream& os_y, const FaceField& f);
CellField read_cell_field(std::istream& is);

}  // namespace pfsim
