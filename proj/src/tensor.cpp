#include "uge/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uge {

namespace {

constexpr double kProbLo = 1e-12;
constexpr double kProbHi = 1.0 - 1e-12;
constexpr double kBnEps = 1e-8;

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    if (!tape)
      tape = t->tape();
    else if (tape != t->tape())
      throw std::invalid_argument("op inputs were recorded on different tapes");
  }
  return tape;
}

double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

}  // namespace

Tensor Tape::watch(const Tensor& t) {
  if (t.on_tape()) throw std::invalid_argument("watch: tensor is already on a tape");
  Tensor out = t;
  out.tape_ = this;
  nodes_.push_back({nullptr, t.rows(), t.cols()});
  grads_.push_back(nullptr);
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  return out;
}

Tensor Tape::make_node(Matrix value, BackFn back) {
  Tensor out{std::move(value)};
  out.tape_ = this;
  nodes_.push_back({std::move(back), out.rows(), out.cols()});
  grads_.push_back(nullptr);
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  return out;
}

void Tape::accumulate(int node, const Matrix& g) {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw std::logic_error("accumulate: node id out of range");
  if (g.rows() != nodes_[node].rows || g.cols() != nodes_[node].cols)
    throw std::logic_error("accumulate: gradient shape " + g.shape_str() +
                           " does not match node value shape");
  if (!grads_[node])
    grads_[node] = std::make_unique<Matrix>(g);
  else
    add_in_place(*grads_[node], g);
}

const Matrix* Tape::node_grad(int node) const {
  if (node < 0 || node >= static_cast<int>(grads_.size())) return nullptr;
  return grads_[node].get();
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this)
    throw std::invalid_argument("backward: loss tensor is not on this tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " +
                                loss.value().shape_str());
  grads_.clear();
  grads_.resize(nodes_.size());
  accumulate(loss.node(), Matrix(1, 1, {1.0}));
  for (int k = loss.node(); k >= 0; --k) {
    if (grads_[k] && nodes_[k].back) nodes_[k].back(*this, *grads_[k]);
  }
  ran_backward_ = true;
}

Matrix Tape::grad(const Tensor& t) const {
  if (t.tape() != this)
    throw std::invalid_argument("grad: tensor is not on this tape");
  if (!ran_backward_) throw std::runtime_error("grad: backward has not run on this tape");
  if (grads_[t.node()]) return *grads_[t.node()];
  return Matrix(t.rows(), t.cols());
}

// --- ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Matrix value = matmul(a.value(), b.value());
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, b](Tape& t, const Matrix& up) {
    if (a.node() >= 0) t.accumulate(a.node(), matmul_nt(up, b.value()));
    if (b.node() >= 0) t.accumulate(b.node(), matmul_tn(a.value(), up));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Matrix value = add(a.value(), b.value());
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, b](Tape& t, const Matrix& up) {
    if (a.node() >= 0) t.accumulate(a.node(), up);
    if (b.node() >= 0) t.accumulate(b.node(), up);
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    throw std::invalid_argument("add_rowvec: expected 1x" + std::to_string(a.cols()) +
                                " row vector, got " + b.value().shape_str());
  Matrix value = a.value();
  for (int i = 0; i < value.rows(); ++i)
    for (int j = 0; j < value.cols(); ++j) value(i, j) += b.value()(0, j);
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, b](Tape& t, const Matrix& up) {
    if (a.node() >= 0) t.accumulate(a.node(), up);
    if (b.node() >= 0) {
      Matrix db(1, up.cols());
      for (int i = 0; i < up.rows(); ++i)
        for (int j = 0; j < up.cols(); ++j) db(0, j) += up(i, j);
      t.accumulate(b.node(), db);
    }
  });
}

Tensor scalar_mul(const Tensor& a, double s) {
  Matrix value = scale(a.value(), s);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, s](Tape& t, const Matrix& up) {
    if (a.node() >= 0) t.accumulate(a.node(), scale(up, s));
  });
}

Tensor elementwise_pow(const Tensor& a, int p) {
  if (p < 1)
    throw std::invalid_argument("elementwise_pow: p must be >= 1, got " + std::to_string(p) +
                                " (p = 0 would erase the input)");
  Matrix value = a.value();
  for (double& v : value.values()) v = ipow(v, p);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, p](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da = up;
    for (size_t i = 0; i < da.size(); ++i)
      da.values()[i] *= p * ipow(a.value().values()[i], p - 1);
    t.accumulate(a.node(), da);
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix value = a.value();
  for (double& v : value.values()) {
    if (v >= 0.0)
      v = 1.0 / (1.0 + std::exp(-v));
    else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  Matrix y = value;
  return tape->make_node(std::move(value), [a, y](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da = up;
    for (size_t i = 0; i < da.size(); ++i) {
      const double s = y.values()[i];
      da.values()[i] *= s * (1.0 - s);
    }
    t.accumulate(a.node(), da);
  });
}

Tensor relu(const Tensor& a) {
  Matrix value = a.value();
  for (double& v : value.values()) v = v > 0.0 ? v : 0.0;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da = up;
    for (size_t i = 0; i < da.size(); ++i)
      if (a.value().values()[i] <= 0.0) da.values()[i] = 0.0;
    t.accumulate(a.node(), da);
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  int rows = parts[0].rows(), cols = parts[0].cols();
  for (size_t i = 1; i < parts.size(); ++i) {
    if (axis == 0) {
      if (parts[i].cols() != cols)
        throw std::invalid_argument("concat: column mismatch at input " + std::to_string(i));
      rows += parts[i].rows();
    } else {
      if (parts[i].rows() != rows)
        throw std::invalid_argument("concat: row mismatch at input " + std::to_string(i));
      cols += parts[i].cols();
    }
  }
  Matrix value(rows, cols);
  int at = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) {
        if (axis == 0)
          value(at + i, j) = p.value()(i, j);
        else
          value(i, at + j) = p.value()(i, j);
      }
    at += axis == 0 ? p.rows() : p.cols();
  }

  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (!p.on_tape()) continue;
    if (!tape)
      tape = p.tape();
    else if (tape != p.tape())
      throw std::invalid_argument("concat: inputs recorded on different tapes");
  }
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [parts, axis](Tape& t, const Matrix& up) {
    int at = 0;
    for (const Tensor& p : parts) {
      if (p.node() >= 0) {
        Matrix dp(p.rows(), p.cols());
        for (int i = 0; i < p.rows(); ++i)
          for (int j = 0; j < p.cols(); ++j)
            dp(i, j) = axis == 0 ? up(at + i, j) : up(i, at + j);
        t.accumulate(p.node(), dp);
      }
      at += axis == 0 ? p.rows() : p.cols();
    }
  });
}

Tensor sum_over_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum_over_axis: axis must be 0 or 1");
  Matrix value = axis == 0 ? Matrix(1, a.cols()) : Matrix(a.rows(), 1);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      if (axis == 0)
        value(0, j) += a.value()(i, j);
      else
        value(i, 0) += a.value()(i, j);
    }
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, axis](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da(a.rows(), a.cols());
    for (int i = 0; i < da.rows(); ++i)
      for (int j = 0; j < da.cols(); ++j) da(i, j) = axis == 0 ? up(0, j) : up(i, 0);
    t.accumulate(a.node(), da);
  });
}

Tensor mean_over_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("mean_over_axis: axis must be 0 or 1");
  const int count = axis == 0 ? a.rows() : a.cols();
  if (count == 0) throw std::invalid_argument("mean_over_axis: empty reduction axis");
  return scalar_mul(sum_over_axis(a, axis), 1.0 / count);
}

Tensor transpose(const Tensor& a) {
  Matrix value = transpose(a.value());
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a](Tape& t, const Matrix& up) {
    if (a.node() >= 0) t.accumulate(a.node(), transpose(up));
  });
}

Tensor bilinear(const Tensor& zi, const Tensor& w, const Tensor& zj) {
  if (zi.rows() != 1 || zj.rows() != 1)
    throw std::invalid_argument("bilinear: z_i and z_j must be row vectors");
  if (w.rows() != zi.cols() || w.cols() != zj.cols())
    throw std::invalid_argument("bilinear: weight is " + w.value().shape_str() +
                                ", expected " + std::to_string(zi.cols()) + "x" +
                                std::to_string(zj.cols()));
  return matmul(matmul(zi, w), transpose(zj));
}

Tensor bce(const Tensor& probs, const Tensor& targets) {
  if (targets.on_tape()) throw std::invalid_argument("bce: targets must be a constant tensor");
  if (!probs.value().same_shape(targets.value()))
    throw std::invalid_argument("bce: shape mismatch " + probs.value().shape_str() + " vs " +
                                targets.value().shape_str());
  const size_t count = probs.value().size();
  if (count == 0) throw std::invalid_argument("bce: empty input");
  for (double tv : targets.value().values())
    if (tv < 0.0 || tv > 1.0)
      throw std::invalid_argument("bce: targets must lie in [0, 1]");

  double loss = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double p =
        std::min(kProbHi, std::max(kProbLo, probs.value().values()[i]));
    const double tv = targets.value().values()[i];
    loss += -(tv * std::log(p) + (1.0 - tv) * std::log(1.0 - p));
  }
  Matrix value(1, 1, {loss / static_cast<double>(count)});

  Tape* tape = common_tape({&probs});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [probs, targets, count](Tape& t, const Matrix& up) {
    if (probs.node() < 0) return;
    Matrix dp(probs.rows(), probs.cols());
    const double u = up(0, 0) / static_cast<double>(count);
    for (size_t i = 0; i < count; ++i) {
      const double p = probs.value().values()[i];
      if (p <= kProbLo || p >= kProbHi) continue;  // clamped region: flat
      const double tv = targets.value().values()[i];
      dp.values()[i] = u * (-tv / p + (1.0 - tv) / (1.0 - p));
    }
    t.accumulate(probs.node(), dp);
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("mse: shape mismatch " + a.value().shape_str() + " vs " +
                                b.value().shape_str());
  const size_t count = a.value().size();
  if (count == 0) throw std::invalid_argument("mse: empty input");
  double loss = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double d = a.value().values()[i] - b.value().values()[i];
    loss += d * d;
  }
  Matrix value(1, 1, {loss / static_cast<double>(count)});
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, b, count](Tape& t, const Matrix& up) {
    const double u = 2.0 * up(0, 0) / static_cast<double>(count);
    if (a.node() >= 0) {
      Matrix da(a.rows(), a.cols());
      for (size_t i = 0; i < count; ++i)
        da.values()[i] = u * (a.value().values()[i] - b.value().values()[i]);
      t.accumulate(a.node(), da);
    }
    if (b.node() >= 0) {
      Matrix db(b.rows(), b.cols());
      for (size_t i = 0; i < count; ++i)
        db.values()[i] = u * (b.value().values()[i] - a.value().values()[i]);
      t.accumulate(b.node(), db);
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int rows = logits.rows(), cols = logits.cols();
  if (static_cast<int>(labels.size()) != rows)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(rows) + " rows");
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("softmax_cross_entropy: empty logits");
  for (int y : labels)
    if (y < 0 || y >= cols)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " outside 0.." + std::to_string(cols - 1));

  Matrix soft(rows, cols);
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    double mx = logits.value()(i, 0);
    for (int j = 1; j < cols; ++j) mx = std::max(mx, logits.value()(i, j));
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(logits.value()(i, j) - mx);
    for (int j = 0; j < cols; ++j) soft(i, j) = std::exp(logits.value()(i, j) - mx) / z;
    loss += mx + std::log(z) - logits.value()(i, labels[i]);
  }
  Matrix value(1, 1, {loss / rows});

  Tape* tape = common_tape({&logits});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value),
                         [logits, labels, soft, rows](Tape& t, const Matrix& up) {
    if (logits.node() < 0) return;
    Matrix dz = soft;
    for (int i = 0; i < rows; ++i) dz(i, labels[i]) -= 1.0;
    const double u = up(0, 0) / rows;
    for (double& v : dz.values()) v *= u;
    t.accumulate(logits.node(), dz);
  });
}

Tensor dropout(const Tensor& a, double rate, bool train) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!train || rate == 0.0) return a;

  const double keep = 1.0 - rate;
  Matrix mask(a.rows(), a.cols());
  CounterRng fallback(0, 0x9D0u);
  CounterRng& rng = a.on_tape() ? a.tape()->dropout_rng() : fallback;
  for (double& m : mask.values()) m = rng.next_uniform() >= rate ? 1.0 / keep : 0.0;

  Matrix value = a.value();
  for (size_t i = 0; i < value.size(); ++i) value.values()[i] *= mask.values()[i];
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, mask](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da = up;
    for (size_t i = 0; i < da.size(); ++i) da.values()[i] *= mask.values()[i];
    t.accumulate(a.node(), da);
  });
}

Tensor batch_norm(const Tensor& a, BatchNormState& state, bool train,
                  const std::vector<double>* mask, double momentum) {
  const int rows = a.rows(), cols = a.cols();
  if (state.running_mean.cols() != cols || state.running_var.cols() != cols)
    throw std::invalid_argument("batch_norm: state tracks " +
                                std::to_string(state.running_mean.cols()) +
                                " channels, input has " + std::to_string(cols));
  if (mask && static_cast<int>(mask->size()) != rows)
    throw std::invalid_argument("batch_norm: mask size does not match row count");

  std::vector<char> real(rows, 1);
  int m = rows;
  if (mask) {
    m = 0;
    for (int i = 0; i < rows; ++i) {
      real[i] = (*mask)[i] > 0.5 ? 1 : 0;
      m += real[i];
    }
  }
  if (m < 1) throw std::invalid_argument("batch_norm: mask selects no rows");

  Tape* tape = common_tape({&a});

  if (!train) {
    std::vector<double> inv(cols);
    for (int j = 0; j < cols; ++j)
      inv[j] = 1.0 / std::sqrt(state.running_var(0, j) + kBnEps);
    Matrix value(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        value(i, j) = (a.value()(i, j) - state.running_mean(0, j)) * inv[j];
    if (!tape) return Tensor{std::move(value)};
    return tape->make_node(std::move(value), [a, inv](Tape& t, const Matrix& up) {
      if (a.node() < 0) return;
      Matrix da = up;
      for (int i = 0; i < da.rows(); ++i)
        for (int j = 0; j < da.cols(); ++j) da(i, j) *= inv[j];
      t.accumulate(a.node(), da);
    });
  }

  std::vector<double> mean(cols, 0.0), var(cols, 0.0), inv(cols);
  for (int i = 0; i < rows; ++i) {
    if (!real[i]) continue;
    for (int j = 0; j < cols; ++j) mean[j] += a.value()(i, j);
  }
  for (int j = 0; j < cols; ++j) mean[j] /= m;
  for (int i = 0; i < rows; ++i) {
    if (!real[i]) continue;
    for (int j = 0; j < cols; ++j) {
      const double d = a.value()(i, j) - mean[j];
      var[j] += d * d;
    }
  }
  for (int j = 0; j < cols; ++j) {
    var[j] /= m;
    inv[j] = 1.0 / std::sqrt(var[j] + kBnEps);
  }
  for (int j = 0; j < cols; ++j) {
    state.running_mean(0, j) = momentum * state.running_mean(0, j) + (1.0 - momentum) * mean[j];
    state.running_var(0, j) = momentum * state.running_var(0, j) + (1.0 - momentum) * var[j];
  }

  Matrix value(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) value(i, j) = (a.value()(i, j) - mean[j]) * inv[j];
  if (!tape) return Tensor{std::move(value)};

  Matrix y = value;
  return tape->make_node(std::move(value), [a, y, inv, real, m](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    const int rows = up.rows(), cols = up.cols();
    // Every output row is normalized with the real-row statistics, so
    // upstream gradient from any row (masked ones included) flows back into
    // the real rows through the mean/variance pathway.
    std::vector<double> s1(cols, 0.0), s2(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        s1[j] += up(i, j);
        s2[j] += up(i, j) * y(i, j);
      }
    }
    Matrix da(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        if (real[i])
          da(i, j) = inv[j] * (up(i, j) - s1[j] / m - y(i, j) * s2[j] / m);
        else
          da(i, j) = inv[j] * up(i, j);
      }
    t.accumulate(a.node(), da);
  });
}

namespace {

void check_blocks(const std::vector<Matrix>& filters, const std::vector<int>& offsets,
                  int rows) {
  if (filters.empty() || filters.size() != offsets.size())
    throw std::invalid_argument("graph_conv: filters and offsets must pair up");
  int prev_end = 0;
  for (size_t i = 0; i < filters.size(); ++i) {
    if (filters[i].rows() != filters[i].cols())
      throw std::invalid_argument("graph_conv: filter " + std::to_string(i) + " is " +
                                  filters[i].shape_str() + ", not square");
    if (offsets[i] < prev_end)
      throw std::invalid_argument("graph_conv: block " + std::to_string(i) +
                                  " overlaps the previous block");
    prev_end = offsets[i] + filters[i].rows();
    if (prev_end > rows)
      throw std::invalid_argument("graph_conv: block " + std::to_string(i) +
                                  " runs past the input rows");
  }
}

// dst rows [off, off+n) += (transpose_g ? g^T : g) * src rows [off, off+n)
void block_apply(const Matrix& g, bool transpose_g, const Matrix& src, int off, Matrix& dst) {
  const int n = g.rows(), cols = src.cols();
  for (int i = 0; i < n; ++i) {
    double* out = dst.row(off + i);
    for (int k = 0; k < n; ++k) {
      const double w = transpose_g ? g(k, i) : g(i, k);
      if (w == 0.0) continue;
      const double* in = src.row(off + k);
      for (int j = 0; j < cols; ++j) out[j] += w * in[j];
    }
  }
}

}  // namespace

Tensor graph_conv(const Tensor& a, const std::vector<Matrix>& filters,
                  const std::vector<int>& offsets) {
  check_blocks(filters, offsets, a.rows());
  Matrix value(a.rows(), a.cols());
  for (size_t i = 0; i < filters.size(); ++i)
    block_apply(filters[i], false, a.value(), offsets[i], value);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, filters, offsets](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da(a.rows(), a.cols());
    for (size_t i = 0; i < filters.size(); ++i)
      block_apply(filters[i], true, up, offsets[i], da);
    t.accumulate(a.node(), da);
  });
}

Tensor row_slice(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 <= r0 || r1 > a.rows())
    throw std::invalid_argument("row_slice: range [" + std::to_string(r0) + ", " +
                                std::to_string(r1) + ") invalid for " +
                                std::to_string(a.rows()) + " rows");
  Matrix value(r1 - r0, a.cols());
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < a.cols(); ++j) value(i - r0, j) = a.value()(i, j);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, r0, r1](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da(a.rows(), a.cols());
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < a.cols(); ++j) da(i, j) = up(i - r0, j);
    t.accumulate(a.node(), da);
  });
}

Tensor segment_pool(const Tensor& a, const std::vector<int>& offsets,
                    const std::vector<int>& sizes) {
  if (offsets.empty() || offsets.size() != sizes.size())
    throw std::invalid_argument("segment_pool: offsets and sizes must pair up");
  const int b = static_cast<int>(offsets.size());
  for (int i = 0; i < b; ++i) {
    if (sizes[i] < 1)
      throw std::invalid_argument("segment_pool: segment " + std::to_string(i) + " is empty");
    if (offsets[i] < 0 || offsets[i] + sizes[i] > a.rows())
      throw std::invalid_argument("segment_pool: segment " + std::to_string(i) +
                                  " runs past the input rows");
  }
  Matrix value(b, a.cols());
  for (int s = 0; s < b; ++s)
    for (int i = 0; i < sizes[s]; ++i)
      for (int j = 0; j < a.cols(); ++j) value(s, j) += a.value()(offsets[s] + i, j);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor{std::move(value)};
  return tape->make_node(std::move(value), [a, offsets, sizes](Tape& t, const Matrix& up) {
    if (a.node() < 0) return;
    Matrix da(a.rows(), a.cols());
    for (int s = 0; s < static_cast<int>(offsets.size()); ++s)
      for (int i = 0; i < sizes[s]; ++i)
        for (int j = 0; j < a.cols(); ++j) da(offsets[s] + i, j) += up(s, j);
    t.accumulate(a.node(), da);
  });
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Matrix& x0,
                  double eps) {
  if (!(eps > 0.0) || eps > 1e-2)
    throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");

  Tape tape;
  Tensor x = tape.watch(Tensor{x0});
  Tensor y = f(tape, x);
  if (y.rows() != 1 || y.cols() != 1)
    throw std::invalid_argument("grad_check: f must return a scalar, got " +
                                y.value().shape_str());
  tape.backward(y);
  const Matrix analytic = tape.grad(x);

  auto eval = [&f](const Matrix& xm) {
    Tape t;
    Tensor xt = t.watch(Tensor{xm});
    Tensor yt = f(t, xt);
    if (yt.rows() != 1 || yt.cols() != 1)
      throw std::invalid_argument("grad_check: f must return a scalar");
    return yt.value()(0, 0);
  };

  double worst = 0.0;
  Matrix xm = x0;
  for (size_t i = 0; i < xm.size(); ++i) {
    const double keep = xm.values()[i];
    xm.values()[i] = keep + eps;
    const double fp = eval(xm);
    xm.values()[i] = keep - eps;
    const double fm = eval(xm);
    xm.values()[i] = keep;
    const double central = (fp - fm) / (2.0 * eps);
    const double err =
        std::fabs(analytic.values()[i] - central) / std::max(1.0, std::fabs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace uge
