// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace molfm::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

template <typename T>
ConstMapMatrix<T> AsMatrix(const Tensor<T>& t) {
  return ConstMapMatrix<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                           static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MapMatrix<T> AsMatrix(Tensor<T>& t) {
  return MapMatrix<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                      static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void ShapeError(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + ShapeString(a) +
                              " and " + ShapeString(b));
}

template <typename T>
void RequireSameShape(const char* op, Var<T> a, Var<T> b) {
  if (!a.value().SameShape(b.value())) {
    ShapeError(op, a.value().shape(), b.value().shape());
  }
}

template <typename T>
bool Wants(Tape<T>& t, Var<T> v) {
  return t.NeedsGrad(v);
}

template <typename T>
Tensor<T> Like(const Tensor<T>& t) {
  return Tensor<T>::Matrix(t.rows(), t.cols());
}

}  // namespace

template <typename T>
Var<T> MatMul(Var<T> a, Var<T> b, bool transpose_b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t inner_b = transpose_b ? bv.cols() : bv.rows();
  if (av.cols() != inner_b) ShapeError("matmul", av.shape(), bv.shape());
  const std::size_t n = transpose_b ? bv.rows() : bv.cols();
  Tensor<T> out = Tensor<T>::Matrix(av.rows(), n);
  if (transpose_b) {
    AsMatrix(out).noalias() = AsMatrix(av) * AsMatrix(bv).transpose();
  } else {
    AsMatrix(out).noalias() = AsMatrix(av) * AsMatrix(bv);
  }
  return a.tape().Record(
      std::move(out), {a, b},
      [a, b, transpose_b](Tape<T>& t, const Tensor<T>& g) {
        const auto gm = AsMatrix(g);
        if (Wants(t, a)) {
          auto ga = AsMatrix(t.GradRef(a.id()));
          if (transpose_b) {
            ga.noalias() += gm * AsMatrix(b.value());
          } else {
            ga.noalias() += gm * AsMatrix(b.value()).transpose();
          }
        }
        if (Wants(t, b)) {
          auto gb = AsMatrix(t.GradRef(b.id()));
          if (transpose_b) {
            gb.noalias() += gm.transpose() * AsMatrix(a.value());
          } else {
            gb.noalias() += AsMatrix(a.value()).transpose() * gm;
          }
        }
      });
}

template <typename T>
Var<T> Add(Var<T> a, Var<T> b) {
  RequireSameShape("add", a, b);
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape().Record(std::move(out), {a, b},
                         [a, b](Tape<T>& t, const Tensor<T>& g) {
                           for (Var<T> v : {a, b}) {
                             if (!Wants(t, v)) continue;
                             Tensor<T>& gv = t.GradRef(v.id());
                             for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
                           }
                         });
}

template <typename T>
Var<T> Sub(Var<T> a, Var<T> b) {
  RequireSameShape("sub", a, b);
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().Record(std::move(out), {a, b},
                         [a, b](Tape<T>& t, const Tensor<T>& g) {
                           if (Wants(t, a)) {
                             Tensor<T>& ga = t.GradRef(a.id());
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (Wants(t, b)) {
                             Tensor<T>& gb = t.GradRef(b.id());
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

template <typename T>
Var<T> Mul(Var<T> a, Var<T> b) {
  RequireSameShape("mul", a, b);
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().Record(std::move(out), {a, b},
                         [a, b](Tape<T>& t, const Tensor<T>& g) {
                           if (Wants(t, a)) {
                             Tensor<T>& ga = t.GradRef(a.id());
                             const Tensor<T>& bv = b.value();
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (Wants(t, b)) {
                             Tensor<T>& gb = t.GradRef(b.id());
                             const Tensor<T>& av = a.value();
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         });
}

template <typename T>
Var<T> AddRow(Var<T> a, Var<T> row) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& rv = row.value();
  if (rv.size() != av.cols()) ShapeError("add_row", av.shape(), rv.shape());
  Tensor<T> out = Like(av);
  const std::size_t cols = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = av(r, c) + rv[c];
  }
  return a.tape().Record(std::move(out), {a, row},
                         [a, row, cols](Tape<T>& t, const Tensor<T>& g) {
                           if (Wants(t, a)) {
                             Tensor<T>& ga = t.GradRef(a.id());
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (Wants(t, row)) {
                             Tensor<T>& gr = t.GradRef(row.id());
                             for (std::size_t i = 0; i < g.size(); ++i) gr[i % cols] += g[i];
                           }
                         });
}

template <typename T>
Var<T> MulCol(Var<T> a, Var<T> col) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& cv = col.value();
  if (cv.size() != av.rows()) ShapeError("mul_col", av.shape(), cv.shape());
  Tensor<T> out = Like(av);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) * cv[r];
  }
  return a.tape().Record(std::move(out), {a, col},
                         [a, col](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& av = a.value();
                           const Tensor<T>& cv = col.value();
                           if (Wants(t, a)) {
                             Tensor<T>& ga = t.GradRef(a.id());
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t c = 0; c < g.cols(); ++c)
                                 ga(r, c) += g(r, c) * cv[r];
                           }
                           if (Wants(t, col)) {
                             Tensor<T>& gc = t.GradRef(col.id());
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               T acc{0};
                               for (std::size_t c = 0; c < g.cols(); ++c)
                                 acc += g(r, c) * av(r, c);
                               gc[r] += acc;
                             }
                           }
                         });
}

template <typename T>
Var<T> MulScalar(Var<T> a, Var<T> s) {
  if (s.value().size() != 1) ShapeError("mul_scalar", a.value().shape(), s.value().shape());
  const T sv = s.value()[0];
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * a.value()[i];
  return a.tape().Record(std::move(out), {a, s},
                         [a, s](Tape<T>& t, const Tensor<T>& g) {
                           const T sv = s.value()[0];
                           if (Wants(t, a)) {
                             Tensor<T>& ga = t.GradRef(a.id());
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
                           }
                           if (Wants(t, s)) {
                             T acc{0};
                             for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.value()[i];
                             t.GradRef(s.id())[0] += acc;
                           }
                         });
}

template <typename T>
Var<T> Scale(Var<T> a, double factor) {
  const T f = static_cast<T>(factor);
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f * a.value()[i];
  return a.tape().Record(std::move(out), {a}, [a, f](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.GradRef(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += f * g[i];
  });
}

template <typename T>
Var<T> MulConst(Var<T> a, const Tensor<T>& c) {
  if (c.size() != a.value().size()) ShapeError("mul_const", a.value().shape(), c.shape());
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c[i];
  return a.tape().Record(std::move(out), {a}, [a, c](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.GradRef(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  });
}

template <typename T>
Var<T> Relu(Var<T> a) {
  Tape<T>& tape = a.tape();
  Tensor<T> out = Like(a.value());
  std::uint64_t sig = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool on = a.value()[i] > T{0};
    out[i] = on ? a.value()[i] : T{0};
    if (tape.track_kinks() && on) sig = (sig ^ (i + 1)) * 1099511628211ull;
  }
  if (tape.track_kinks()) tape.MixKinkSignature(sig);
  return tape.Record(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.GradRef(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (a.value()[i] > T{0}) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> ShiftedSoftplus(Var<T> a) {
  // ln(0.5 e^x + 0.5) = softplus(x) - ln 2, evaluated stably.
  const T ln2 = static_cast<T>(std::log(2.0));
  Tensor<T> out = Like(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a.value()[i];
    out[i] = std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x))) - ln2;
  }
  return a.tape().Record(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.GradRef(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = a.value()[i];
      const T sig = x >= 0 ? T{1} / (T{1} + std::exp(-x))
                           : std::exp(x) / (T{1} + std::exp(x));
      ga[i] += g[i] * sig;
    }
  });
}

template <typename T>
Var<T> Sum(Var<T> a) {
  T acc{0};
  for (T x : a.value().values()) acc += x;
  return a.tape().Record(Tensor<T>({1, 1}, std::vector<T>{acc}), {a},
                         [a](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& ga = t.GradRef(a.id());
                           for (auto& x : ga.values()) x += g[0];
                         });
}

template <typename T>
Var<T> Mean(Var<T> a) {
  if (a.value().empty()) throw std::invalid_argument("mean of empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> SoftmaxRows(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Like(av);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row(r);
    auto o = out.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T z{0};
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (auto& x : o) x /= z;
  }
  Tensor<T> y = out;
  return a.tape().Record(std::move(out), {a}, [a, y = std::move(y)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.GradRef(a.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot{0};
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

template <typename T>
Var<T> LayerNorm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.cols();
  if (n == 0) throw std::invalid_argument("layer_norm: zero-size feature dim");
  if (gain.value().size() != n || bias.value().size() != n) {
    ShapeError("layer_norm", xv.shape(), gain.value().shape());
  }
  Tensor<T> xhat = Like(xv);
  std::vector<T> inv_std(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    T mean{0};
    for (T v : in) mean += v;
    mean /= static_cast<T>(n);
    T var{0};
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    inv_std[r] = T{1} / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t c = 0; c < n; ++c) xhat(r, c) = (in[c] - mean) * inv_std[r];
  }
  Tensor<T> out = Like(xv);
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  return x.tape().Record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const std::size_t n = xhat.cols();
        const Tensor<T>& gv = gain.value();
        if (Wants(t, gain)) {
          Tensor<T>& gg = t.GradRef(gain.id());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (Wants(t, bias)) {
          Tensor<T>& gb = t.GradRef(bias.id());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += g(r, c);
        }
        if (Wants(t, x)) {
          Tensor<T>& gx = t.GradRef(x.id());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            T mean_dy{0}, mean_dy_xhat{0};
            for (std::size_t c = 0; c < n; ++c) {
              const T dy = g(r, c) * gv[c];
              mean_dy += dy;
              mean_dy_xhat += dy * xhat(r, c);
            }
            mean_dy /= static_cast<T>(n);
            mean_dy_xhat /= static_cast<T>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const T dy = g(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (dy - mean_dy - xhat(r, c) * mean_dy_xhat);
            }
          }
        }
      });
}

template <typename T>
Var<T> BatchNormTrain(Var<T> x, Var<T> gain, Var<T> bias, double eps,
                      std::vector<T>* batch_mean, std::vector<T>* batch_var) {
  const Tensor<T>& xv = x.value();
  const std::size_t m = xv.rows();
  const std::size_t n = xv.cols();
  if (n == 0) throw std::invalid_argument("batch_norm: zero-size feature dim");
  if (m == 0) throw std::invalid_argument("batch_norm: empty batch");
  std::vector<T> mean(n, T{0}), var(n, T{0}), inv_std(n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) mean[c] += xv(r, c);
  for (auto& v : mean) v /= static_cast<T>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const T d = xv(r, c) - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < n; ++c) {
    var[c] /= static_cast<T>(m);
    inv_std[c] = T{1} / std::sqrt(var[c] + static_cast<T>(eps));
  }
  Tensor<T> xhat = Like(xv);
  Tensor<T> out = Like(xv);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
      out(r, c) = xhat(r, c) * gain.value()[c] + bias.value()[c];
    }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return x.tape().Record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const std::size_t m = xhat.rows();
        const std::size_t n = xhat.cols();
        std::vector<T> sum_dy(n, T{0}), sum_dy_xhat(n, T{0});
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            sum_dy[c] += g(r, c);
            sum_dy_xhat[c] += g(r, c) * xhat(r, c);
          }
        if (Wants(t, gain)) {
          Tensor<T>& gg = t.GradRef(gain.id());
          for (std::size_t c = 0; c < n; ++c) gg[c] += sum_dy_xhat[c];
        }
        if (Wants(t, bias)) {
          Tensor<T>& gb = t.GradRef(bias.id());
          for (std::size_t c = 0; c < n; ++c) gb[c] += sum_dy[c];
        }
        if (Wants(t, x)) {
          Tensor<T>& gx = t.GradRef(x.id());
          const T inv_m = T{1} / static_cast<T>(m);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) {
              const T gam = gain.value()[c];
              gx(r, c) += gam * inv_std[c] *
                          (g(r, c) - inv_m * sum_dy[c] - xhat(r, c) * inv_m * sum_dy_xhat[c]);
            }
        }
      });
}

template <typename T>
Var<T> BatchNormEval(Var<T> x, Var<T> gain, Var<T> bias,
                     const Tensor<T>& running_mean,
                     const Tensor<T>& running_var, double eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.cols();
  if (n == 0) throw std::invalid_argument("batch_norm: zero-size feature dim");
  std::vector<T> inv_std(n);
  for (std::size_t c = 0; c < n; ++c) {
    inv_std[c] = T{1} / std::sqrt(running_var[c] + static_cast<T>(eps));
  }
  Tensor<T> out = Like(xv);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c)
      out(r, c) = (xv(r, c) - running_mean[c]) * inv_std[c] * gain.value()[c] +
                  bias.value()[c];
  return x.tape().Record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, running_mean, inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const std::size_t n = g.cols();
        const Tensor<T>& xv = x.value();
        if (Wants(t, gain)) {
          Tensor<T>& gg = t.GradRef(gain.id());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c)
              gg[c] += g(r, c) * (xv(r, c) - running_mean[c]) * inv_std[c];
        }
        if (Wants(t, bias)) {
          Tensor<T>& gb = t.GradRef(bias.id());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += g(r, c);
        }
        if (Wants(t, x)) {
          Tensor<T>& gx = t.GradRef(x.id());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c)
              gx(r, c) += g(r, c) * inv_std[c] * gain.value()[c];
        }
      });
}

template <typename T>
Var<T> Dropout(Var<T> x, double p, Rng& rng, bool active) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!active || p == 0.0) return x;
  Tensor<T> mask = Like(x.value());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.values()) m = Uniform01(rng) < p ? T{0} : keep_scale;
  return MulConst(x, mask);
}

template <typename T>
Var<T> GatherRows(Var<T> x, std::span<const std::size_t> index) {
  const Tensor<T>& xv = x.value();
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::Matrix(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(xv.data() + index[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape().Record(std::move(out), {x},
                         [x, idx = std::move(idx)](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.GradRef(x.id());
                           const std::size_t cols = g.cols();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < cols; ++c)
                               gx(idx[i], c) += g(i, c);
                         });
}

template <typename T>
Var<T> IndexAddRows(Var<T> src, std::span<const std::size_t> index,
                    std::size_t rows) {
  const Tensor<T>& sv = src.value();
  if (index.size() != sv.rows()) {
    throw std::invalid_argument("index_add_rows: index length != source rows");
  }
  const std::size_t cols = sv.cols();
  Tensor<T> out = Tensor<T>::Matrix(rows, cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw std::out_of_range("index_add_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out(index[i], c) += sv(i, c);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return src.tape().Record(std::move(out), {src},
                           [src, idx = std::move(idx)](Tape<T>& t, const Tensor<T>& g) {
                             Tensor<T>& gs = t.GradRef(src.id());
                             const std::size_t cols = g.cols();
                             for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t c = 0; c < cols; ++c)
                                 gs(i, c) += g(idx[i], c);
                           });
}

template <typename T>
Var<T> SegmentMeanRows(Var<T> x, std::span<const std::size_t> segment,
                       std::size_t num_segments) {
  const Tensor<T>& xv = x.value();
  if (segment.size() != xv.rows()) {
    throw std::invalid_argument("segment_mean: segment length != rows");
  }
  std::vector<T> count(num_segments, T{0});
  for (std::size_t s : segment) {
    if (s >= num_segments) throw std::out_of_range("segment_mean: segment id out of range");
    count[s] += T{1};
  }
  for (T c : count) {
    if (c == T{0}) throw std::invalid_argument("segment_mean: empty segment");
  }
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::Matrix(num_segments, cols);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(segment[r], c) += xv(r, c);
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t c = 0; c < cols; ++c) out(s, c) /= count[s];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return x.tape().Record(
      std::move(out), {x},
      [x, seg = std::move(seg), count = std::move(count)](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gx = t.GradRef(x.id());
        const std::size_t cols = g.cols();
        for (std::size_t r = 0; r < seg.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(seg[r], c) / count[seg[r]];
      });
}

namespace {
void CheckOffsets(std::span<const std::size_t> offsets, std::size_t rows,
                  const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows) {
    throw std::invalid_argument(std::string(op) + ": offsets must span [0, rows]");
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) {
      throw std::invalid_argument(std::string(op) + ": empty or unordered group");
    }
  }
}
}  // namespace

template <typename T>
Var<T> SegmentSoftmax(Var<T> col, std::span<const std::size_t> offsets) {
  const Tensor<T>& cv = col.value();
  if (cv.cols() != 1) throw std::invalid_argument("segment_softmax: expects a column");
  CheckOffsets(offsets, cv.rows(), "segment_softmax");
  Tensor<T> out = Like(cv);
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) mx = std::max(mx, cv[i]);
    T z{0};
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) {
      out[i] = std::exp(cv[i] - mx);
      z += out[i];
    }
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) out[i] /= z;
  }
  Tensor<T> y = out;
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return col.tape().Record(
      std::move(out), {col},
      [col, y = std::move(y), off = std::move(off)](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gc = t.GradRef(col.id());
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          T dot{0};
          for (std::size_t i = off[s]; i < off[s + 1]; ++i) dot += g[i] * y[i];
          for (std::size_t i = off[s]; i < off[s + 1]; ++i) gc[i] += y[i] * (g[i] - dot);
        }
      });
}

template <typename T>
Var<T> SegmentSumRows(Var<T> x, std::span<const std::size_t> offsets) {
  const Tensor<T>& xv = x.value();
  CheckOffsets(offsets, xv.rows(), "segment_sum");
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::Matrix(offsets.size() - 1, cols);
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
    for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r)
      for (std::size_t c = 0; c < cols; ++c) out(g, c) += xv(r, c);
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return x.tape().Record(std::move(out), {x},
                         [x, off = std::move(off)](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.GradRef(x.id());
                           const std::size_t cols = g.cols();
                           for (std::size_t s = 0; s + 1 < off.size(); ++s)
                             for (std::size_t r = off[s]; r < off[s + 1]; ++r)
                               for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(s, c);
                         });
}

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) ShapeError("concat_cols", parts.front().value().shape(), p.value().shape());
    cols += p.cols();
  }
  Tensor<T> out = Tensor<T>::Matrix(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * cols + offset);
    offset += pv.cols();
  }
  return parts.front().tape().Record(
      std::move(out), parts, [parts](Tape<T>& t, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const std::size_t pc = p.cols();
          if (Wants(t, p)) {
            Tensor<T>& gp = t.GradRef(p.id());
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, offset + c);
          }
          offset += pc;
        }
      });
}

template <typename T>
Var<T> SliceCols(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (begin + count > xv.cols()) throw std::out_of_range("slice_cols: range exceeds columns");
  Tensor<T> out = Tensor<T>::Matrix(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  return x.tape().Record(std::move(out), {x},
                         [x, begin](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.GradRef(x.id());
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < g.cols(); ++c)
                               gx(r, begin + c) += g(r, c);
                         });
}

template <typename T>
Var<T> L2NormalizeRows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out = Like(xv);
  std::vector<T> norm(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    T ss{0};
    for (T v : xv.row(r)) ss += v * v;
    if (ss == T{0}) {
      throw std::invalid_argument("l2_normalize: zero-norm row " + std::to_string(r));
    }
    norm[r] = std::sqrt(ss);
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) / norm[r];
  }
  Tensor<T> y = out;
  return x.tape().Record(
      std::move(out), {x},
      [x, y = std::move(y), norm = std::move(norm)](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gx = t.GradRef(x.id());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          T dot{0};
          for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < g.cols(); ++c)
            gx(r, c) += (g(r, c) - y(r, c) * dot) / norm[r];
        }
      });
}

template <typename T>
Var<T> SoftmaxCrossEntropy(Var<T> logits, std::span<const std::size_t> targets) {
  const Tensor<T>& lv = logits.value();
  if (targets.size() != lv.rows() || lv.rows() == 0) {
    throw std::invalid_argument("softmax_cross_entropy: need one target per row");
  }
  Tensor<T> prob = Like(lv);
  T loss{0};
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] >= lv.cols()) throw std::out_of_range("softmax_cross_entropy: target out of range");
    auto in = lv.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T z{0};
    for (std::size_t c = 0; c < in.size(); ++c) {
      prob(r, c) = std::exp(in[c] - mx);
      z += prob(r, c);
    }
    for (std::size_t c = 0; c < in.size(); ++c) prob(r, c) /= z;
    loss += -(in[targets[r]] - mx - std::log(z));
  }
  const T inv_n = T{1} / static_cast<T>(lv.rows());
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return logits.tape().Record(
      Tensor<T>({1, 1}, std::vector<T>{loss * inv_n}), {logits},
      [logits, prob = std::move(prob), tgt = std::move(tgt), inv_n](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gl = t.GradRef(logits.id());
        for (std::size_t r = 0; r < prob.rows(); ++r)
          for (std::size_t c = 0; c < prob.cols(); ++c)
            gl(r, c) += g[0] * inv_n * (prob(r, c) - (c == tgt[r] ? T{1} : T{0}));
      });
}

template <typename T>
Var<T> BinaryCrossEntropyWithLogits(Var<T> logits, const Tensor<T>& targets,
                                    const Tensor<T>& mask) {
  const Tensor<T>& lv = logits.value();
  if (targets.size() != lv.size() || mask.size() != lv.size()) {
    ShapeError("bce_with_logits", lv.shape(), targets.shape());
  }
  T count{0};
  for (T m : mask.values()) count += (m != T{0}) ? T{1} : T{0};
  if (count == T{0}) throw std::invalid_argument("bce_with_logits: every label is missing");
  T loss{0};
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (mask[i] == T{0}) continue;
    const T x = lv[i];
    // max(x,0) - x*y + log(1 + exp(-|x|))
    loss += std::max(x, T{0}) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return logits.tape().Record(
      Tensor<T>({1, 1}, std::vector<T>{loss / count}), {logits},
      [logits, targets, mask, count](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gl = t.GradRef(logits.id());
        const Tensor<T>& lv = logits.value();
        for (std::size_t i = 0; i < lv.size(); ++i) {
          if (mask[i] == T{0}) continue;
          const T x = lv[i];
          const T sig = x >= 0 ? T{1} / (T{1} + std::exp(-x))
                               : std::exp(x) / (T{1} + std::exp(x));
          gl[i] += g[0] * (sig - targets[i]) / count;
        }
      });
}

template <typename T>
Var<T> MaskedMeanSquaredError(Var<T> pred, const Tensor<T>& targets,
                              const Tensor<T>& mask) {
  const Tensor<T>& pv = pred.value();
  if (targets.size() != pv.size() || mask.size() != pv.size()) {
    ShapeError("mse", pv.shape(), targets.shape());
  }
  T count{0};
  T loss{0};
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mask[i] == T{0}) continue;
    count += T{1};
    const T d = pv[i] - targets[i];
    loss += d * d;
  }
  if (count == T{0}) throw std::invalid_argument("mse: every label is missing");
  return pred.tape().Record(
      Tensor<T>({1, 1}, std::vector<T>{loss / count}), {pred},
      [pred, targets, mask, count](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gp = t.GradRef(pred.id());
        const Tensor<T>& pv = pred.value();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          if (mask[i] == T{0}) continue;
          gp[i] += g[0] * T{2} * (pv[i] - targets[i]) / count;
        }
      });
}

template <typename T>
Var<T> MultiHeadAttention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch,
                          std::size_t q_len, std::size_t kv_len,
                          std::size_t heads,
                          std::span<const std::uint8_t> key_valid) {
  const Tensor<T>& qv = q.value();
  const Tensor<T>& kv = k.value();
  const Tensor<T>& vv = v.value();
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention: feature dim not divisible by heads");
  }
  if (qv.rows() != batch * q_len || kv.rows() != batch * kv_len ||
      vv.rows() != batch * kv_len || kv.cols() != d || vv.cols() != d ||
      key_valid.size() != batch * kv_len) {
    ShapeError("attention", qv.shape(), kv.shape());
  }
  const std::size_t dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  // probs[((b * heads + h) * q_len + i) * kv_len + j]
  std::vector<T> probs(batch * heads * q_len * kv_len, T{0});
  Tensor<T> out = Tensor<T>::Matrix(batch * q_len, d);
  std::vector<T> scores(kv_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* valid = key_valid.data() + b * kv_len;
    if (std::none_of(valid, valid + kv_len, [](std::uint8_t x) { return x != 0; })) {
      throw std::invalid_argument("attention: item " + std::to_string(b) + " has no valid key");
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < q_len; ++i) {
        const T* qi = qv.data() + (b * q_len + i) * d + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < kv_len; ++j) {
          if (!valid[j]) continue;
          const T* kj = kv.data() + (b * kv_len + j) * d + off;
          T s{0};
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        T* p = probs.data() + ((b * heads + h) * q_len + i) * kv_len;
        T z{0};
        for (std::size_t j = 0; j < kv_len; ++j) {
          if (!valid[j]) continue;
          p[j] = std::exp(scores[j] - mx);
          z += p[j];
        }
        T* oi = out.data() + (b * q_len + i) * d + off;
        for (std::size_t j = 0; j < kv_len; ++j) {
          if (!valid[j]) continue;
          p[j] /= z;
          const T* vj = vv.data() + (b * kv_len + j) * d + off;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  std::vector<std::uint8_t> valid_copy(key_valid.begin(), key_valid.end());
  return q.tape().Record(
      std::move(out), {q, k, v},
      [q, k, v, batch, q_len, kv_len, heads, dh, scale, probs = std::move(probs),
       valid_all = std::move(valid_copy)](Tape<T>& t, const Tensor<T>& g) {
        const std::size_t d = heads * dh;
        const Tensor<T>& qv = q.value();
        const Tensor<T>& kv = k.value();
        const Tensor<T>& vv = v.value();
        const bool wq = Wants(t, q), wk = Wants(t, k), wv = Wants(t, v);
        Tensor<T>* gq = wq ? &t.GradRef(q.id()) : nullptr;
        Tensor<T>* gk = wk ? &t.GradRef(k.id()) : nullptr;
        Tensor<T>* gvv = wv ? &t.GradRef(v.id()) : nullptr;
        std::vector<T> dp(kv_len);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::uint8_t* valid = valid_all.data() + b * kv_len;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < q_len; ++i) {
              const T* p = probs.data() + ((b * heads + h) * q_len + i) * kv_len;
              const T* gi = g.data() + (b * q_len + i) * d + off;
              T dot{0};
              for (std::size_t j = 0; j < kv_len; ++j) {
                if (!valid[j]) continue;
                const T* vj = vv.data() + (b * kv_len + j) * d + off;
                T s{0};
                for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                dp[j] = s;
                dot += s * p[j];
                if (wv) {
                  T* gvj = gvv->data() + (b * kv_len + j) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * gi[c];
                }
              }
              if (!wq && !wk) continue;
              const T* qi = qv.data() + (b * q_len + i) * d + off;
              for (std::size_t j = 0; j < kv_len; ++j) {
                if (!valid[j]) continue;
                const T ds = p[j] * (dp[j] - dot) * scale;
                if (ds == T{0}) continue;
                const T* kj = kv.data() + (b * kv_len + j) * d + off;
                if (wq) {
                  T* gqi = gq->data() + (b * q_len + i) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (wk) {
                  T* gkj = gk->data() + (b * kv_len + j) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

#define MOLFM_INSTANTIATE_OPS(T)                                                          \
  template Var<T> MatMul(Var<T>, Var<T>, bool);                                          \
  template Var<T> Add(Var<T>, Var<T>);                                                   \
  template Var<T> Sub(Var<T>, Var<T>);                                                   \
  template Var<T> Mul(Var<T>, Var<T>);                                                   \
  template Var<T> AddRow(Var<T>, Var<T>);                                                \
  template Var<T> MulCol(Var<T>, Var<T>);                                                \
  template Var<T> MulScalar(Var<T>, Var<T>);                                             \
  template Var<T> Scale(Var<T>, double);                                                 \
  template Var<T> MulConst(Var<T>, const Tensor<T>&);                                    \
  template Var<T> Relu(Var<T>);                                                          \
  template Var<T> ShiftedSoftplus(Var<T>);                                               \
  template Var<T> Sum(Var<T>);                                                           \
  template Var<T> Mean(Var<T>);                                                          \
  template Var<T> SoftmaxRows(Var<T>);                                                   \
  template Var<T> LayerNorm(Var<T>, Var<T>, Var<T>, double);                             \
  template Var<T> BatchNormTrain(Var<T>, Var<T>, Var<T>, double, std::vector<T>*,        \
                                 std::vector<T>*);                                       \
  template Var<T> BatchNormEval(Var<T>, Var<T>, Var<T>, const Tensor<T>&,                \
                                const Tensor<T>&, double);                               \
  template Var<T> Dropout(Var<T>, double, Rng&, bool);                                   \
  template Var<T> GatherRows(Var<T>, std::span<const std::size_t>);                      \
  template Var<T> IndexAddRows(Var<T>, std::span<const std::size_t>, std::size_t);       \
  template Var<T> SegmentMeanRows(Var<T>, std::span<const std::size_t>, std::size_t);    \
  template Var<T> SegmentSoftmax(Var<T>, std::span<const std::size_t>);                  \
  template Var<T> SegmentSumRows(Var<T>, std::span<const std::size_t>);                  \
  template Var<T> ConcatCols(const std::vector<Var<T>>&);                                \
  template Var<T> SliceCols(Var<T>, std::size_t, std::size_t);                           \
  template Var<T> L2NormalizeRows(Var<T>);                                               \
  template Var<T> SoftmaxCrossEntropy(Var<T>, std::span<const std::size_t>);             \
  template Var<T> BinaryCrossEntropyWithLogits(Var<T>, const Tensor<T>&,                 \
                                               const Tensor<T>&);                        \
  template Var<T> MaskedMeanSquaredError(Var<T>, const Tensor<T>&, const Tensor<T>&);    \
  template Var<T> MultiHeadAttention(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t,   \
                                     std::size_t, std::size_t,                          \
                                     std::span<const std::uint8_t>);

MOLFM_INSTANTIATE_OPS(float)
MOLFM_INSTANTIATE_OPS(double)

#undef MOLFM_INSTANTIATE_OPS

}  // namespace molfm::nn
