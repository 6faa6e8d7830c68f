#include "ddc/autodiff.hpp"

#include "ddc/transition.hpp"

#include <cmath>
#include <stdexcept>

namespace ddc::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::logic_error("ad: variables live on different tapes");
  return *a.tape;
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("ad::") + op + ": shape mismatch");
}

double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// (B x C*P) <-> (B*P x C)
Mat channels_to_rows(const Mat& x, Eigen::Index channels) {
  const Eigen::Index batch = x.rows();
  const Eigen::Index plane = x.cols() / channels;
  Mat out(batch * plane, channels);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (Eigen::Index p = 0; p < plane; ++p)
      for (Eigen::Index b = 0; b < batch; ++b) out(b * plane + p, c) = x(b, c * plane + p);
  return out;
}

Mat rows_to_channels(const Mat& r, Eigen::Index batch) {
  const Eigen::Index channels = r.cols();
  const Eigen::Index plane = r.rows() / batch;
  Mat out(batch, channels * plane);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (Eigen::Index p = 0; p < plane; ++p)
      for (Eigen::Index b = 0; b < batch; ++b) out(b, c * plane + p) = r(b * plane + p, c);
  return out;
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape;
  Mat out = a.value().unaryExpr(fwd);
  const int ia = a.id;
  return t.push(std::move(out), {ia}, [ia, deriv](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    const Mat& y = tp.value(self);
    Mat g(x.rows(), x.cols());
    const Mat& gy = tp.grad(self);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) g(i, j) = gy(i, j) * deriv(x(i, j), y(i, j));
    tp.accumulate(ia, g);
  });
}

}  // namespace

const Mat& Var::value() const { return tape->value(id); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, true});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, std::vector<int> parents, BackwardFn backward) {
  bool rg = false;
  for (int p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), Mat(), rg ? std::move(backward) : nullptr, rg});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("ad: root belongs to another tape");
  if (nodes_[root.id].value.size() != 1) throw std::invalid_argument("ad: backward root must be scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id].grad = Mat::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

Mat im2col(const Mat& input, const ConvGeometry& g) {
  const RowMat in = input;
  const Eigen::Index batch = input.rows();
  const int ho = g.out_height(), wo = g.out_width();
  const int k = g.kernel;
  RowMat cols = RowMat::Zero(batch * ho * wo, g.patch_size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double* src = in.data() + b * in.cols();
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double* dst = cols.data() + ((b * ho + oy) * wo + ox) * cols.cols();
        for (int c = 0; c < g.channels; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.width) continue;
              dst[(c * k + ky) * k + kx] = src[(c * g.height + iy) * g.width + ix];
            }
          }
      }
  }
  return cols;
}

Mat col2im(const Mat& columns, const ConvGeometry& g, Eigen::Index batch) {
  const RowMat cols = columns;
  const int ho = g.out_height(), wo = g.out_width();
  const int k = g.kernel;
  RowMat out = RowMat::Zero(batch, static_cast<Eigen::Index>(g.channels) * g.height * g.width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    double* dst = out.data() + b * out.cols();
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const double* src = cols.data() + ((b * ho + oy) * wo + ox) * cols.cols();
        for (int c = 0; c < g.channels; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.width) continue;
              dst[(c * g.height + iy) * g.width + ix] += src[(c * k + ky) * k + kx];
            }
          }
      }
  }
  return out;
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& tp, int self) {
    if (tp.tracks(ia)) tp.accumulate(ia, tp.grad(self).cwiseProduct(tp.value(ib)));
    if (tp.tracks(ib)) tp.accumulate(ib, tp.grad(self).cwiseProduct(tp.value(ia)));
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "div");
  const int ia = a.id, ib = b.id;
  return t.push(a.value().cwiseQuotient(b.value()), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    const Mat& bv = tp.value(ib);
    if (tp.tracks(ia)) tp.accumulate(ia, gy.cwiseQuotient(bv));
    if (tp.tracks(ib)) tp.accumulate(ib, -gy.cwiseProduct(tp.value(self)).cwiseQuotient(bv));
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, {ia}, [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value().array() + s, {ia}, [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("ad::matmul: inner dimension mismatch");
  const int ia = a.id, ib = b.id;
  return t.push(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    if (tp.tracks(ia)) tp.accumulate(ia, gy * tp.value(ib).transpose());
    if (tp.tracks(ib)) tp.accumulate(ib, tp.value(ia).transpose() * gy);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("ad::add_row: bad row shape");
  const int ia = a.id, ir = row.id;
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), {ia, ir}, [ia, ir](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.tracks(ir)) tp.accumulate(ir, tp.grad(self).colwise().sum());
  });
}

Var scale_rows(Var a, Var col) {
  Tape& t = tape_of(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("ad::scale_rows: bad column shape");
  const int ia = a.id, ic = col.id;
  Mat out = a.value().array().colwise() * col.value().col(0).array();
  return t.push(std::move(out), {ia, ic}, [ia, ic](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    if (tp.tracks(ia)) {
      Mat g = gy.array().colwise() * tp.value(ic).col(0).array();
      tp.accumulate(ia, g);
    }
    if (tp.tracks(ic)) tp.accumulate(ic, gy.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(a, softplus_scalar, [](double x, double) { return sigmoid_scalar(x); });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var sum(Var a) {
  const int ia = a.id;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), {ia}, [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    tp.accumulate(ia, Mat::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var sum_cols(Var a) {
  const int ia = a.id;
  return a.tape->push(a.value().rowwise().sum(), {ia}, [ia](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = tp.grad(self).col(0).replicate(1, x.cols());
    tp.accumulate(ia, g);
  });
}

Var mean_rows(Var a) {
  const int ia = a.id;
  const double n = static_cast<double>(a.rows());
  return a.tape->push(a.value().colwise().mean(), {ia}, [ia, n](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = (tp.grad(self) / n).replicate(x.rows(), 1);
    tp.accumulate(ia, g);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("ad::concat_cols: row mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index na = a.cols(), nb = b.cols();
  return t.push(std::move(out), {ia, ib}, [ia, ib, na, nb](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    if (tp.tracks(ia)) tp.accumulate(ia, gy.leftCols(na));
    if (tp.tracks(ib)) tp.accumulate(ib, gy.rightCols(nb));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::invalid_argument("ad::slice_cols: out of range");
  const int ia = a.id;
  return a.tape->push(a.value().middleCols(start, count), {ia}, [ia, start, count](Tape& tp, int self) {
    const Mat& x = tp.value(ia);
    Mat g = Mat::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var batched_matvec(Var a, Var x, int r, int c) {
  Tape& t = tape_of(a, x);
  if (a.cols() != r * c || x.cols() != c || a.rows() != x.rows())
    throw std::invalid_argument("ad::batched_matvec: shape mismatch");
  const Eigen::Index batch = a.rows();
  Mat out(batch, r);
  for (Eigen::Index i = 0; i < batch; ++i)
    for (int row = 0; row < r; ++row) {
      double s = 0.0;
      for (int col = 0; col < c; ++col) s += a.value()(i, row * c + col) * x.value()(i, col);
      out(i, row) = s;
    }
  const int ia = a.id, ix = x.id;
  return t.push(std::move(out), {ia, ix}, [ia, ix, r, c](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    const Mat& av = tp.value(ia);
    const Mat& xv = tp.value(ix);
    const Eigen::Index n = av.rows();
    if (tp.tracks(ia)) {
      Mat ga(n, r * c);
      for (Eigen::Index i = 0; i < n; ++i)
        for (int row = 0; row < r; ++row)
          for (int col = 0; col < c; ++col) ga(i, row * c + col) = gy(i, row) * xv(i, col);
      tp.accumulate(ia, ga);
    }
    if (tp.tracks(ix)) {
      Mat gx = Mat::Zero(n, c);
      for (Eigen::Index i = 0; i < n; ++i)
        for (int row = 0; row < r; ++row)
          for (int col = 0; col < c; ++col) gx(i, col) += av(i, row * c + col) * gy(i, row);
      tp.accumulate(ix, gx);
    }
  });
}

namespace {
Eigen::MatrixXd unpack(const Mat& flat, Eigen::Index row, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = flat(row, i * c + j);
  return m;
}
}  // namespace

Var batched_solve(Var a, Var y, int n) {
  Tape& t = tape_of(a, y);
  if (a.cols() != n * n || y.cols() != n || a.rows() != y.rows())
    throw std::invalid_argument("ad::batched_solve: shape mismatch");
  const Eigen::Index batch = a.rows();
  Mat out(batch, n);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Eigen::MatrixXd A = unpack(a.value(), i, n, n);
    out.row(i) = A.partialPivLu().solve(y.value().row(i).transpose()).transpose();
  }
  const int ia = a.id, iy = y.id;
  return t.push(std::move(out), {ia, iy}, [ia, iy, n](Tape& tp, int self) {
    const Mat& gz = tp.grad(self);
    const Mat& z = tp.value(self);
    const Eigen::Index batch = z.rows();
    Mat gy(batch, n);
    for (Eigen::Index i = 0; i < batch; ++i) {
      const Eigen::MatrixXd A = unpack(tp.value(ia), i, n, n);
      gy.row(i) = A.transpose().partialPivLu().solve(gz.row(i).transpose()).transpose();
    }
    if (tp.tracks(ia)) {
      Mat ga(batch, n * n);
      for (Eigen::Index i = 0; i < batch; ++i)
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c) ga(i, r * n + c) = -gy(i, r) * z(i, c);
      tp.accumulate(ia, ga);
    }
    tp.accumulate(iy, gy);
  });
}

Var batched_lowrank(Var u, Var v, int n, int rank) {
  Tape& t = tape_of(u, v);
  if (u.cols() != n * rank || v.cols() != n * rank || u.rows() != v.rows())
    throw std::invalid_argument("ad::batched_lowrank: shape mismatch");
  const Eigen::Index batch = u.rows();
  Mat out = Mat::Zero(batch, n * n);
  for (Eigen::Index i = 0; i < batch; ++i)
    for (int j = 0; j < rank; ++j)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) out(i, r * n + c) += u.value()(i, j * n + r) * v.value()(i, j * n + c);
  const int iu = u.id, iv = v.id;
  return t.push(std::move(out), {iu, iv}, [iu, iv, n, rank](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& uv = tp.value(iu);
    const Mat& vv = tp.value(iv);
    const Eigen::Index batch = g.rows();
    Mat gu = Mat::Zero(batch, n * rank), gv = Mat::Zero(batch, n * rank);
    for (Eigen::Index i = 0; i < batch; ++i)
      for (int j = 0; j < rank; ++j)
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c) {
            const double gi = g(i, r * n + c);
            gu(i, j * n + r) += gi * vv(i, j * n + c);
            gv(i, j * n + c) += gi * uv(i, j * n + r);
          }
    tp.accumulate(iu, gu);
    tp.accumulate(iv, gv);
  });
}

namespace {

// Columns of the per-row factor as an n x rank matrix.
Eigen::MatrixXd factor(const Mat& flat, Eigen::Index row, int n, int rank) {
  Eigen::MatrixXd m(n, rank);
  for (int j = 0; j < rank; ++j)
    for (int r = 0; r < n; ++r) m(r, j) = flat(row, j * n + r);
  return m;
}

}  // namespace

Var determinant_guard(Var u, Var v, int n, int rank, double floor) {
  Tape& t = tape_of(u, v);
  if (u.cols() != n * rank || v.cols() != n * rank || u.rows() != v.rows())
    throw std::invalid_argument("ad::determinant_guard: shape mismatch");
  const Eigen::Index batch = u.rows();
  Mat s(batch, 1);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Eigen::MatrixXd M = factor(v.value(), i, n, rank).transpose() * factor(u.value(), i, n, rank);
    s(i, 0) = determinant_guard_scale(M, floor);
  }
  const int iu = u.id, iv = v.id;
  return t.push(std::move(s), {iu, iv}, [iu, iv, n, rank](Tape& tp, int self) {
    const Mat& gs = tp.grad(self);
    const Mat& sv = tp.value(self);
    const Eigen::Index batch = sv.rows();
    Mat gu = Mat::Zero(batch, n * rank), gv = Mat::Zero(batch, n * rank);
    for (Eigen::Index i = 0; i < batch; ++i) {
      const double si = sv(i, 0);
      if (si >= 1.0) continue;
      const Eigen::MatrixXd U = factor(tp.value(iu), i, n, rank);
      const Eigen::MatrixXd V = factor(tp.value(iv), i, n, rank);
      const Eigen::MatrixXd M = V.transpose() * U;
      const Eigen::MatrixXd inv =
          (Eigen::MatrixXd::Identity(rank, rank) + si * M).inverse();
      // det(I + sM) = floor defines s(M); ds/dM = -s inv^T / tr(inv M).
      const Eigen::MatrixXd dsdM = -si * inv.transpose() / (inv * M).trace();
      const Eigen::MatrixXd G = gs(i, 0) * dsdM;
      const Eigen::MatrixXd dU = V * G;
      const Eigen::MatrixXd dV = U * G.transpose();
      for (int j = 0; j < rank; ++j)
        for (int r = 0; r < n; ++r) {
          gu(i, j * n + r) = dU(r, j);
          gv(i, j * n + r) = dV(r, j);
        }
    }
    tp.accumulate(iu, gu);
    tp.accumulate(iv, gv);
  });
}

Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& g) {
  Tape& t = tape_of(input, weight);
  if (input.cols() != static_cast<Eigen::Index>(g.channels) * g.height * g.width)
    throw std::invalid_argument("ad::conv2d: input size does not match geometry");
  if (weight.cols() != g.patch_size() || bias.cols() != weight.rows() || bias.rows() != 1)
    throw std::invalid_argument("ad::conv2d: weight/bias shape mismatch");
  const Eigen::Index batch = input.rows();
  Mat cols = im2col(input.value(), g);
  Mat r = cols * weight.value().transpose();
  r.rowwise() += bias.value().row(0);
  Mat out = rows_to_channels(r, batch);
  const int ii = input.id, iw = weight.id, ib = bias.id;
  return t.push(std::move(out), {ii, iw, ib}, [ii, iw, ib, g, cols = std::move(cols)](Tape& tp, int self) {
    const Eigen::Index batch = tp.value(ii).rows();
    const Mat G = channels_to_rows(tp.grad(self), tp.value(iw).rows());
    if (tp.tracks(iw)) tp.accumulate(iw, G.transpose() * cols);
    if (tp.tracks(ib)) tp.accumulate(ib, G.colwise().sum());
    if (tp.tracks(ii)) tp.accumulate(ii, col2im(G * tp.value(iw), g, batch));
  });
}

Var conv_transpose2d(Var input, Var weight, Var bias, const ConvGeometry& out) {
  Tape& t = tape_of(input, weight);
  const Eigen::Index cin = weight.rows();
  const Eigen::Index plane_in = static_cast<Eigen::Index>(out.out_height()) * out.out_width();
  if (input.cols() != cin * plane_in) throw std::invalid_argument("ad::conv_transpose2d: input size mismatch");
  if (weight.cols() != out.patch_size() || bias.cols() != out.channels || bias.rows() != 1)
    throw std::invalid_argument("ad::conv_transpose2d: weight/bias shape mismatch");
  const Eigen::Index batch = input.rows();
  Mat xr = channels_to_rows(input.value(), cin);
  Mat y = col2im(xr * weight.value(), out, batch);
  const Eigen::Index plane_out = static_cast<Eigen::Index>(out.height) * out.width;
  for (int c = 0; c < out.channels; ++c) y.middleCols(c * plane_out, plane_out).array() += bias.value()(0, c);
  const int ii = input.id, iw = weight.id, ib = bias.id;
  return t.push(std::move(y), {ii, iw, ib}, [ii, iw, ib, out, plane_out, xr = std::move(xr)](Tape& tp, int self) {
    const Mat& gy = tp.grad(self);
    const Eigen::Index batch = gy.rows();
    const Mat dcols = im2col(gy, out);
    if (tp.tracks(iw)) tp.accumulate(iw, xr.transpose() * dcols);
    if (tp.tracks(ib)) {
      Mat gb(1, out.channels);
      for (int c = 0; c < out.channels; ++c) gb(0, c) = gy.middleCols(c * plane_out, plane_out).sum();
      tp.accumulate(ib, gb);
    }
    if (tp.tracks(ii)) tp.accumulate(ii, rows_to_channels(dcols * tp.value(iw).transpose(), batch));
  });
}

}  // namespace ddc::ad
