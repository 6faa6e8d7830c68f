#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddc::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a Tape. Rows index batch samples, columns index features.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode tape over dense matrices. Nodes are append-only; backward()
// walks them in reverse creation order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Mat value);
  Var leaf(Mat value);  // gradient tracked

  Var push(Mat value, std::vector<int> parents, BackwardFn backward);

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  const Mat& grad(Var v) const { return grad(v.id); }
  bool tracks(int id) const { return nodes_[id].requires_grad; }

  // Adds g into the gradient buffer of node `id` (allocated lazily).
  void accumulate(int id, const Mat& g);

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Convolution geometry for a square kernel with symmetric zero padding.
struct ConvGeometry {
  int channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  int patch_size() const { return channels * kernel * kernel; }
};

// Unrolls every kernel window of a batch (B x C*H*W) into rows of a
// (B*Ho*Wo) x (C*k*k) matrix. col2im is its adjoint.
Mat im2col(const Mat& input, const ConvGeometry& g);
Mat col2im(const Mat& cols, const ConvGeometry& g, Eigen::Index batch);

// --- elementwise and linear algebra -------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var add_row(Var a, Var row);     // broadcast 1 x n over rows of a
Var scale_rows(Var a, Var col);  // a(i,:) * col(i)
Var relu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var detach(Var a);

// --- reductions ----------------------------------------------------------
Var sum(Var a);       // -> 1x1
Var sum_cols(Var a);  // B x n -> B x 1
Var mean_rows(Var a); // B x n -> 1 x n

// --- shape ----------------------------------------------------------------
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

// --- per-sample small matrices stored row-major in a row ------------------
// a: B x (r*c) holds one r x c matrix per row, x: B x c -> B x r.
Var batched_matvec(Var a, Var x, int r, int c);
// Solves A_i z_i = y_i for each row i, A: B x (n*n), y: B x n.
Var batched_solve(Var a, Var y, int n);
// Sum_j u_j v_j^T for each row: u, v: B x (n*rank), columns j*n..j*n+n-1.
Var batched_lowrank(Var u, Var v, int n, int rank);
// Scaling s in (0, 1] so that det(I + s*M) >= floor, where M = V^T U per row
// (rank x rank). s = 1 when the unscaled determinant already clears the floor,
// otherwise the smallest s in (0,1) reaching det = floor. Differentiated
// through the implicit equation.
Var determinant_guard(Var u, Var v, int n, int rank, double floor);

// --- convolution ---------------------------------------------------------
// weight: Cout x (Cin*k*k), bias: 1 x Cout. input: B x Cin*H*W.
Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& g);
// Adjoint of conv2d w.r.t. its input, plus bias: maps B x Cin*Hi*Wi to
// B x Cout*H*W where `out` describes the (larger) output image geometry.
// weight: Cin x (Cout*k*k), bias: 1 x Cout.
Var conv_transpose2d(Var input, Var weight, Var bias, const ConvGeometry& out);

}  // namespace ddc::ad
