#include "seqattn/ops.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <string>

#include "seqattn/error.h"
#include "seqattn/logging.h"

namespace seqattn {

namespace {

// Rounds freshly written values through float32 when running in single
// precision. Called on op outputs and on gradients right after accumulation.
void seal(std::vector<double>& values) {
  if (default_precision() != Precision::Single) return;
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

bool wants_grad(const Tape& tape, std::initializer_list<const TensorPtr*> inputs) {
  if (!tape.recording()) return false;
  for (const TensorPtr* t : inputs) {
    if (*t && (*t)->requires_grad) return true;
  }
  return false;
}

TensorPtr result(std::vector<int> shape, bool requires_grad) {
  return Tensor::create(std::move(shape), requires_grad);
}

void check(const TensorPtr& t, const char* op) {
  if (!t) throw DimensionError(std::string(op) + ": null input");
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                         " vs " + shape_str(b->shape));
  }
}

}  // namespace

TensorPtr affine(Tape& tape, const TensorPtr& x, const TensorPtr& W, const TensorPtr& b) {
  check(x, "affine");
  check(W, "affine");
  if (W->rank() != 2) throw DimensionError("affine: weight must be rank 2, got " + shape_str(W->shape));
  const int out_dim = W->dim(0);
  const int in_dim = W->dim(1);
  const bool vector_input = x->rank() == 1;
  const int rows = vector_input ? 1 : x->dim(0);
  const int x_cols = vector_input ? x->dim(0) : x->dim(1);
  if (x->rank() > 2 || x_cols != in_dim) {
    throw DimensionError("affine: input " + shape_str(x->shape) + " does not match weight " +
                         shape_str(W->shape));
  }
  if (b && (b->rank() != 1 || b->dim(0) != out_dim)) {
    throw DimensionError("affine: bias " + shape_str(b->shape) + " does not match weight " +
                         shape_str(W->shape));
  }

  bool rg = wants_grad(tape, {&x, &W, &b});
  auto y = result(vector_input ? std::vector<int>{out_dim} : std::vector<int>{rows, out_dim}, rg);
  for (int i = 0; i < rows; ++i) {
    const double* xr = x->data.data() + static_cast<std::size_t>(i) * in_dim;
    double* yr = y->data.data() + static_cast<std::size_t>(i) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* wr = W->data.data() + static_cast<std::size_t>(o) * in_dim;
      double acc = b ? b->data[static_cast<std::size_t>(o)] : 0.0;
      for (int k = 0; k < in_dim; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
  seal(y->data);

  if (rg) {
    tape.record([x, W, b, y, rows, in_dim, out_dim]() {
      for (int i = 0; i < rows; ++i) {
        const double* gy = y->grad.data() + static_cast<std::size_t>(i) * out_dim;
        const double* xr = x->data.data() + static_cast<std::size_t>(i) * in_dim;
        if (x->requires_grad) {
          double* gx = x->grad.data() + static_cast<std::size_t>(i) * in_dim;
          for (int o = 0; o < out_dim; ++o) {
            const double g = gy[o];
            const double* wr = W->data.data() + static_cast<std::size_t>(o) * in_dim;
            for (int k = 0; k < in_dim; ++k) gx[k] += g * wr[k];
          }
        }
        if (W->requires_grad) {
          for (int o = 0; o < out_dim; ++o) {
            const double g = gy[o];
            double* gw = W->grad.data() + static_cast<std::size_t>(o) * in_dim;
            for (int k = 0; k < in_dim; ++k) gw[k] += g * xr[k];
          }
        }
        if (b && b->requires_grad) {
          for (int o = 0; o < out_dim; ++o) b->grad[static_cast<std::size_t>(o)] += gy[o];
        }
      }
      if (x->requires_grad) seal(x->grad);
      if (W->requires_grad) seal(W->grad);
      if (b && b->requires_grad) seal(b->grad);
    });
  }
  return y;
}

TensorPtr matvec(Tape& tape, const TensorPtr& X, const TensorPtr& v) {
  check(X, "matvec");
  check(v, "matvec");
  if (X->rank() != 2 || v->rank() != 1 || X->dim(1) != v->dim(0)) {
    throw DimensionError("matvec: " + shape_str(X->shape) + " vs " + shape_str(v->shape));
  }
  const int rows = X->dim(0);
  const int cols = X->dim(1);
  bool rg = wants_grad(tape, {&X, &v});
  auto y = result({rows}, rg);
  for (int i = 0; i < rows; ++i) {
    const double* xr = X->data.data() + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (int k = 0; k < cols; ++k) acc += xr[k] * v->data[static_cast<std::size_t>(k)];
    y->data[static_cast<std::size_t>(i)] = acc;
  }
  seal(y->data);

  if (rg) {
    tape.record([X, v, y, rows, cols]() {
      for (int i = 0; i < rows; ++i) {
        const double g = y->grad[static_cast<std::size_t>(i)];
        const double* xr = X->data.data() + static_cast<std::size_t>(i) * cols;
        if (X->requires_grad) {
          double* gx = X->grad.data() + static_cast<std::size_t>(i) * cols;
          for (int k = 0; k < cols; ++k) gx[k] += g * v->data[static_cast<std::size_t>(k)];
        }
        if (v->requires_grad) {
          for (int k = 0; k < cols; ++k) v->grad[static_cast<std::size_t>(k)] += g * xr[k];
        }
      }
      if (X->requires_grad) seal(X->grad);
      if (v->requires_grad) seal(v->grad);
    });
  }
  return y;
}

TensorPtr conv1d_same(Tape& tape, const TensorPtr& x, const TensorPtr& filter) {
  check(x, "conv1d_same");
  check(filter, "conv1d_same");
  if (x->rank() != 2 || filter->rank() != 3) {
    throw DimensionError("conv1d_same: input " + shape_str(x->shape) + ", filter " +
                         shape_str(filter->shape));
  }
  const int steps = x->dim(0);
  const int in_ch = x->dim(1);
  const int width = filter->dim(1);
  const int out_ch = filter->dim(2);
  if (filter->dim(0) != in_ch) {
    throw DimensionError("conv1d_same: input channels " + shape_str(x->shape) +
                         " do not match filter " + shape_str(filter->shape));
  }
  if (width % 2 == 0) throw ConfigError("conv1d_same: width must be odd, got " + std::to_string(width));
  if (width > 2 * steps + 1) {
    static std::set<int> warned;
    static std::mutex warned_mutex;
    bool first;
    {
      std::lock_guard<std::mutex> lock(warned_mutex);
      first = warned.insert(width).second;
    }
    if (first) {
      log_warn("conv1d_same: width " + std::to_string(width) + " exceeds 2*" +
               std::to_string(steps) + "+1; taps beyond the padded input are dead");
    }
  }
  const int half = width / 2;

  bool rg = wants_grad(tape, {&x, &filter});
  auto y = result({steps, out_ch}, rg);
  for (int s = 0; s < steps; ++s) {
    double* yr = y->data.data() + static_cast<std::size_t>(s) * out_ch;
    const int k_lo = std::max(0, half - s);
    const int k_hi = std::min(width, steps + half - s);
    for (int k = k_lo; k < k_hi; ++k) {
      const double* xr = x->data.data() + static_cast<std::size_t>(s + k - half) * in_ch;
      for (int ci = 0; ci < in_ch; ++ci) {
        const double xv = xr[ci];
        const double* fr = filter->data.data() + (static_cast<std::size_t>(ci) * width + k) * out_ch;
        for (int co = 0; co < out_ch; ++co) yr[co] += xv * fr[co];
      }
    }
  }
  seal(y->data);

  if (rg) {
    tape.record([x, filter, y, steps, in_ch, width, out_ch, half]() {
      for (int s = 0; s < steps; ++s) {
        const double* gy = y->grad.data() + static_cast<std::size_t>(s) * out_ch;
        const int k_lo = std::max(0, half - s);
        const int k_hi = std::min(width, steps + half - s);
        for (int k = k_lo; k < k_hi; ++k) {
          const std::size_t xoff = static_cast<std::size_t>(s + k - half) * in_ch;
          for (int ci = 0; ci < in_ch; ++ci) {
            const double* fr = filter->data.data() + (static_cast<std::size_t>(ci) * width + k) * out_ch;
            if (x->requires_grad) {
              double acc = 0.0;
              for (int co = 0; co < out_ch; ++co) acc += gy[co] * fr[co];
              x->grad[xoff + static_cast<std::size_t>(ci)] += acc;
            }
            if (filter->requires_grad) {
              const double xv = x->data[xoff + static_cast<std::size_t>(ci)];
              double* gf = filter->grad.data() + (static_cast<std::size_t>(ci) * width + k) * out_ch;
              for (int co = 0; co < out_ch; ++co) gf[co] += xv * gy[co];
            }
          }
        }
      }
      if (x->requires_grad) seal(x->grad);
      if (filter->requires_grad) seal(filter->grad);
    });
  }
  return y;
}

TensorPtr activation(Tape& tape, const TensorPtr& x, Act kind, double slope) {
  check(x, "activation");
  bool rg = wants_grad(tape, {&x});
  auto y = result(x->shape, rg);
  const std::size_t n = x->data.size();
  switch (kind) {
    case Act::LeakyRelu:
      for (std::size_t i = 0; i < n; ++i) {
        const double v = x->data[i];
        y->data[i] = v >= 0.0 ? v : slope * v;
      }
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < n; ++i) y->data[i] = std::tanh(x->data[i]);
      break;
    case Act::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) y->data[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
      break;
  }
  seal(y->data);

  if (rg) {
    tape.record([x, y, kind, slope, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (kind) {
          case Act::LeakyRelu: d = x->data[i] >= 0.0 ? 1.0 : slope; break;
          case Act::Tanh: d = 1.0 - y->data[i] * y->data[i]; break;
          case Act::Sigmoid: d = y->data[i] * (1.0 - y->data[i]); break;
        }
        x->grad[i] += d * y->grad[i];
      }
      seal(x->grad);
    });
  }
  return y;
}

namespace {

TensorPtr softmax_impl(Tape& tape, const TensorPtr& scores, int valid) {
  const int n = scores->dim(0);
  bool rg = wants_grad(tape, {&scores});
  auto y = result({n}, rg);
  double hi = scores->data[0];
  for (int i = 1; i < valid; ++i) hi = std::max(hi, scores->data[static_cast<std::size_t>(i)]);
  double z = 0.0;
  for (int i = 0; i < valid; ++i) {
    const double e = std::exp(scores->data[static_cast<std::size_t>(i)] - hi);
    y->data[static_cast<std::size_t>(i)] = e;
    z += e;
  }
  for (int i = 0; i < valid; ++i) y->data[static_cast<std::size_t>(i)] /= z;
  seal(y->data);

  if (rg) {
    tape.record([scores, y, valid]() {
      double dot_gy = 0.0;
      for (int i = 0; i < valid; ++i) {
        dot_gy += y->grad[static_cast<std::size_t>(i)] * y->data[static_cast<std::size_t>(i)];
      }
      for (int i = 0; i < valid; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        scores->grad[k] += y->data[k] * (y->grad[k] - dot_gy);
      }
      seal(scores->grad);
    });
  }
  return y;
}

}  // namespace

TensorPtr softmax_masked(Tape& tape, const TensorPtr& scores, const Mask& mask) {
  check(scores, "softmax_masked");
  if (scores->rank() != 1) {
    throw DimensionError("softmax_masked: expected vector, got " + shape_str(scores->shape));
  }
  mask.validate(scores->dim(0));
  return softmax_impl(tape, scores, mask.length);
}

TensorPtr softmax(Tape& tape, const TensorPtr& v) {
  check(v, "softmax");
  if (v->rank() != 1) throw DimensionError("softmax: expected vector, got " + shape_str(v->shape));
  return softmax_impl(tape, v, v->dim(0));
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check(a, "add");
  check(b, "add");
  check_same_shape(a, b, "add");
  bool rg = wants_grad(tape, {&a, &b});
  auto y = result(a->shape, rg);
  for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = a->data[i] + b->data[i];
  seal(y->data);
  if (rg) {
    tape.record([a, b, y]() {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < y->grad.size(); ++i) a->grad[i] += y->grad[i];
        seal(a->grad);
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < y->grad.size(); ++i) b->grad[i] += y->grad[i];
        seal(b->grad);
      }
    });
  }
  return y;
}

TensorPtr add_all(Tape& tape, const std::vector<TensorPtr>& items) {
  if (items.empty()) throw DimensionError("add_all: no inputs");
  TensorPtr acc = items[0];
  for (std::size_t i = 1; i < items.size(); ++i) acc = add(tape, acc, items[i]);
  return acc;
}

TensorPtr add_rowvec(Tape& tape, const TensorPtr& X, const TensorPtr& v) {
  check(X, "add_rowvec");
  check(v, "add_rowvec");
  if (X->rank() != 2 || v->rank() != 1 || X->dim(1) != v->dim(0)) {
    throw DimensionError("add_rowvec: " + shape_str(X->shape) + " vs " + shape_str(v->shape));
  }
  const int rows = X->dim(0);
  const int cols = X->dim(1);
  bool rg = wants_grad(tape, {&X, &v});
  auto y = result({rows, cols}, rg);
  for (int i = 0; i < rows; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * cols;
    for (int k = 0; k < cols; ++k) {
      y->data[off + k] = X->data[off + k] + v->data[static_cast<std::size_t>(k)];
    }
  }
  seal(y->data);
  if (rg) {
    tape.record([X, v, y, rows, cols]() {
      if (X->requires_grad) {
        for (std::size_t i = 0; i < y->grad.size(); ++i) X->grad[i] += y->grad[i];
        seal(X->grad);
      }
      if (v->requires_grad) {
        for (int i = 0; i < rows; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * cols;
          for (int k = 0; k < cols; ++k) v->grad[static_cast<std::size_t>(k)] += y->grad[off + k];
        }
        seal(v->grad);
      }
    });
  }
  return y;
}

TensorPtr emul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check(a, "emul");
  check(b, "emul");
  check_same_shape(a, b, "emul");
  bool rg = wants_grad(tape, {&a, &b});
  auto y = result(a->shape, rg);
  for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = a->data[i] * b->data[i];
  seal(y->data);
  if (rg) {
    tape.record([a, b, y]() {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < y->grad.size(); ++i) a->grad[i] += b->data[i] * y->grad[i];
        seal(a->grad);
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < y->grad.size(); ++i) b->grad[i] += a->data[i] * y->grad[i];
        seal(b->grad);
      }
    });
  }
  return y;
}

TensorPtr mix(Tape& tape, const std::vector<TensorPtr>& items, const TensorPtr& weights) {
  if (items.empty()) throw DimensionError("mix: no inputs");
  check(weights, "mix");
  if (weights->rank() != 1 || weights->dim(0) != static_cast<int>(items.size())) {
    throw DimensionError("mix: " + std::to_string(items.size()) + " items vs weights " +
                         shape_str(weights->shape));
  }
  for (const auto& it : items) {
    check(it, "mix");
    check_same_shape(items[0], it, "mix");
  }
  bool rg = tape.recording() && weights->requires_grad;
  for (const auto& it : items) rg = rg || (tape.recording() && it->requires_grad);
  auto y = result(items[0]->shape, rg);
  for (std::size_t j = 0; j < items.size(); ++j) {
    const double w = weights->data[j];
    for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] += w * items[j]->data[i];
  }
  seal(y->data);
  if (rg) {
    tape.record([items, weights, y]() {
      for (std::size_t j = 0; j < items.size(); ++j) {
        const auto& f = items[j];
        if (f->requires_grad) {
          const double w = weights->data[j];
          for (std::size_t i = 0; i < y->grad.size(); ++i) f->grad[i] += w * y->grad[i];
          seal(f->grad);
        }
        if (weights->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < y->grad.size(); ++i) acc += f->data[i] * y->grad[i];
          weights->grad[j] += acc;
        }
      }
      if (weights->requires_grad) seal(weights->grad);
    });
  }
  return y;
}

TensorPtr concat_cols(Tape& tape, const std::vector<TensorPtr>& items) {
  if (items.empty()) throw DimensionError("concat_cols: no inputs");
  const int rows = items[0]->rank() == 2 ? items[0]->dim(0) : -1;
  int total_cols = 0;
  for (const auto& it : items) {
    check(it, "concat_cols");
    if (it->rank() != 2 || it->dim(0) != rows) {
      throw DimensionError("concat_cols: incompatible block " + shape_str(it->shape));
    }
    total_cols += it->dim(1);
  }
  bool rg = false;
  if (tape.recording()) {
    for (const auto& it : items) rg = rg || it->requires_grad;
  }
  auto y = result({rows, total_cols}, rg);
  int col0 = 0;
  for (const auto& it : items) {
    const int c = it->dim(1);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(it->data.data() + static_cast<std::size_t>(i) * c, c,
                  y->data.data() + static_cast<std::size_t>(i) * total_cols + col0);
    }
    col0 += c;
  }
  seal(y->data);
  if (rg) {
    tape.record([items, y, rows, total_cols]() {
      int col0 = 0;
      for (const auto& it : items) {
        const int c = it->dim(1);
        if (it->requires_grad) {
          for (int i = 0; i < rows; ++i) {
            const double* gy = y->grad.data() + static_cast<std::size_t>(i) * total_cols + col0;
            double* gi = it->grad.data() + static_cast<std::size_t>(i) * c;
            for (int k = 0; k < c; ++k) gi[k] += gy[k];
          }
          seal(it->grad);
        }
        col0 += c;
      }
    });
  }
  return y;
}

TensorPtr concat_vec(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check(a, "concat_vec");
  check(b, "concat_vec");
  if (a->rank() != 1 || b->rank() != 1) {
    throw DimensionError("concat_vec: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
  const int na = a->dim(0);
  const int nb = b->dim(0);
  bool rg = wants_grad(tape, {&a, &b});
  auto y = result({na + nb}, rg);
  std::copy_n(a->data.data(), na, y->data.data());
  std::copy_n(b->data.data(), nb, y->data.data() + na);
  seal(y->data);
  if (rg) {
    tape.record([a, b, y, na, nb]() {
      if (a->requires_grad) {
        for (int i = 0; i < na; ++i) a->grad[static_cast<std::size_t>(i)] += y->grad[static_cast<std::size_t>(i)];
        seal(a->grad);
      }
      if (b->requires_grad) {
        for (int i = 0; i < nb; ++i) b->grad[static_cast<std::size_t>(i)] += y->grad[static_cast<std::size_t>(na + i)];
        seal(b->grad);
      }
    });
  }
  return y;
}

TensorPtr narrow0(Tape& tape, const TensorPtr& x, int start, int count) {
  check(x, "narrow0");
  if (x->rank() < 1 || start < 0 || count < 1 || start + count > x->dim(0)) {
    throw DimensionError("narrow0: slice [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + shape_str(x->shape));
  }
  std::int64_t stride = 1;
  for (int i = 1; i < x->rank(); ++i) stride *= x->dim(i);
  std::vector<int> out_shape = x->shape;
  out_shape[0] = count;
  bool rg = wants_grad(tape, {&x});
  auto y = result(out_shape, rg);
  std::copy_n(x->data.data() + start * stride, count * stride, y->data.data());
  seal(y->data);
  if (rg) {
    tape.record([x, y, start, stride, count]() {
      const std::size_t off = static_cast<std::size_t>(start * stride);
      for (std::size_t i = 0; i < static_cast<std::size_t>(count * stride); ++i) {
        x->grad[off + i] += y->grad[i];
      }
      seal(x->grad);
    });
  }
  return y;
}

TensorPtr row(Tape& tape, const TensorPtr& X, int index) {
  check(X, "row");
  if (X->rank() != 2) throw DimensionError("row: expected matrix, got " + shape_str(X->shape));
  auto r = narrow0(tape, X, index, 1);
  return reshape(tape, r, {X->dim(1)});
}

TensorPtr stack_rows(Tape& tape, const std::vector<TensorPtr>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const int cols = rows[0]->dim(0);
  for (const auto& r : rows) {
    check(r, "stack_rows");
    if (r->rank() != 1 || r->dim(0) != cols) {
      throw DimensionError("stack_rows: incompatible row " + shape_str(r->shape));
    }
  }
  bool rg = false;
  if (tape.recording()) {
    for (const auto& r : rows) rg = rg || r->requires_grad;
  }
  auto y = result({static_cast<int>(rows.size()), cols}, rg);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(rows[i]->data.data(), cols, y->data.data() + i * cols);
  }
  seal(y->data);
  if (rg) {
    tape.record([rows, y, cols]() {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i]->requires_grad) continue;
        const double* gy = y->grad.data() + i * cols;
        for (int k = 0; k < cols; ++k) rows[i]->grad[static_cast<std::size_t>(k)] += gy[k];
        seal(rows[i]->grad);
      }
    });
  }
  return y;
}

TensorPtr reshape(Tape& tape, const TensorPtr& x, std::vector<int> shape) {
  check(x, "reshape");
  if (numel(shape) != x->size()) {
    throw DimensionError("reshape: " + shape_str(x->shape) + " to " + shape_str(shape));
  }
  bool rg = wants_grad(tape, {&x});
  auto y = result(std::move(shape), rg);
  y->data = x->data;
  if (rg) {
    tape.record([x, y]() {
      for (std::size_t i = 0; i < y->grad.size(); ++i) x->grad[i] += y->grad[i];
      seal(x->grad);
    });
  }
  return y;
}

TensorPtr dot(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  check(a, "dot");
  check(b, "dot");
  if (a->rank() != 1 || b->rank() != 1 || a->dim(0) != b->dim(0)) {
    throw DimensionError("dot requires equal-length vectors: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
  }
  bool rg = wants_grad(tape, {&a, &b});
  auto y = result({1}, rg);
  double acc = 0.0;
  for (std::size_t i = 0; i < a->data.size(); ++i) acc += a->data[i] * b->data[i];
  y->data[0] = acc;
  seal(y->data);
  if (rg) {
    tape.record([a, b, y]() {
      const double g = y->grad[0];
      if (a->requires_grad) {
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += g * b->data[i];
        seal(a->grad);
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += g * a->data[i];
        seal(b->grad);
      }
    });
  }
  return y;
}

TensorPtr attend_context(Tape& tape, const TensorPtr& hE, const TensorPtr& align) {
  check(hE, "attend_context");
  check(align, "attend_context");
  if (hE->rank() != 2 || align->rank() != 1 || hE->dim(0) != align->dim(0)) {
    throw DimensionError("attend_context: states " + shape_str(hE->shape) + " vs alignment " +
                         shape_str(align->shape));
  }
  const int rows = hE->dim(0);
  const int cols = hE->dim(1);
  bool rg = wants_grad(tape, {&hE, &align});
  auto y = result({cols}, rg);
  for (int s = 0; s < rows; ++s) {
    const double a = align->data[static_cast<std::size_t>(s)];
    if (a == 0.0) continue;
    const double* hr = hE->data.data() + static_cast<std::size_t>(s) * cols;
    for (int m = 0; m < cols; ++m) y->data[static_cast<std::size_t>(m)] += a * hr[m];
  }
  seal(y->data);
  if (rg) {
    tape.record([hE, align, y, rows, cols]() {
      for (int s = 0; s < rows; ++s) {
        const double a = align->data[static_cast<std::size_t>(s)];
        const double* hr = hE->data.data() + static_cast<std::size_t>(s) * cols;
        if (align->requires_grad) {
          double acc = 0.0;
          for (int m = 0; m < cols; ++m) acc += y->grad[static_cast<std::size_t>(m)] * hr[m];
          align->grad[static_cast<std::size_t>(s)] += acc;
        }
        if (hE->requires_grad) {
          double* gh = hE->grad.data() + static_cast<std::size_t>(s) * cols;
          for (int m = 0; m < cols; ++m) gh[m] += a * y->grad[static_cast<std::size_t>(m)];
        }
      }
      if (align->requires_grad) seal(align->grad);
      if (hE->requires_grad) seal(hE->grad);
    });
  }
  return y;
}

TensorPtr scale_const(Tape& tape, const TensorPtr& x, double c) {
  check(x, "scale_const");
  bool rg = wants_grad(tape, {&x});
  auto y = result(x->shape, rg);
  for (std::size_t i = 0; i < y->data.size(); ++i) y->data[i] = c * x->data[i];
  seal(y->data);
  if (rg) {
    tape.record([x, y, c]() {
      for (std::size_t i = 0; i < y->grad.size(); ++i) x->grad[i] += c * y->grad[i];
      seal(x->grad);
    });
  }
  return y;
}

TensorPtr nll_from_logits(Tape& tape, const TensorPtr& logits, int target) {
  check(logits, "nll_from_logits");
  if (logits->rank() != 1) {
    throw DimensionError("nll_from_logits: expected vector, got " + shape_str(logits->shape));
  }
  const int n = logits->dim(0);
  if (target < 0 || target >= n) {
    throw DataError("target symbol " + std::to_string(target) + " outside vocabulary of " +
                    std::to_string(n));
  }
  bool rg = wants_grad(tape, {&logits});
  auto y = result({1}, rg);
  double hi = logits->data[0];
  for (int i = 1; i < n; ++i) hi = std::max(hi, logits->data[static_cast<std::size_t>(i)]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(logits->data[static_cast<std::size_t>(i)] - hi);
  const double lse = hi + std::log(z);
  y->data[0] = lse - logits->data[static_cast<std::size_t>(target)];
  seal(y->data);
  if (rg) {
    tape.record([logits, y, target, n, hi, z]() {
      const double g = y->grad[0];
      for (int i = 0; i < n; ++i) {
        const double p = std::exp(logits->data[static_cast<std::size_t>(i)] - hi) / z;
        logits->grad[static_cast<std::size_t>(i)] += g * (p - (i == target ? 1.0 : 0.0));
      }
      seal(logits->grad);
    });
  }
  return y;
}

TensorPtr mse_sum(Tape& tape, const TensorPtr& pred, const TensorPtr& target, int valid_rows) {
  check(pred, "mse_sum");
  check(target, "mse_sum");
  check_same_shape(pred, target, "mse_sum");
  const int rows = pred->rank() == 2 ? pred->dim(0) : pred->dim(0);
  std::int64_t stride = pred->rank() == 2 ? pred->dim(1) : 1;
  const int use_rows = valid_rows < 0 ? rows : valid_rows;
  if (use_rows > rows) throw DimensionError("mse_sum: valid_rows exceeds rows");
  const std::size_t count = static_cast<std::size_t>(use_rows * stride);
  bool rg = wants_grad(tape, {&pred, &target});
  auto y = result({1}, rg);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pred->data[i] - target->data[i];
    acc += d * d;
  }
  y->data[0] = acc;
  seal(y->data);
  if (rg) {
    tape.record([pred, target, y, count]() {
      const double g = y->grad[0];
      for (std::size_t i = 0; i < count; ++i) {
        const double d = pred->data[i] - target->data[i];
        if (pred->requires_grad) pred->grad[i] += 2.0 * d * g;
        if (target->requires_grad) target->grad[i] -= 2.0 * d * g;
      }
      if (pred->requires_grad) seal(pred->grad);
      if (target->requires_grad) seal(target->grad);
    });
  }
  return y;
}

TensorPtr bce_sum(Tape& tape, const TensorPtr& probs, const std::vector<double>& targets,
                  int valid) {
  check(probs, "bce_sum");
  if (probs->data.size() != targets.size()) {
    throw DimensionError("bce_sum: " + std::to_string(probs->data.size()) + " probs vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t count = valid < 0 ? targets.size() : static_cast<std::size_t>(valid);
  if (count > targets.size()) throw DimensionError("bce_sum: valid exceeds entries");
  constexpr double kEps = 1e-7;
  bool rg = wants_grad(tape, {&probs});
  auto y = result({1}, rg);
  // Clamped values are shared with the backward pass.
  auto clamped = std::make_shared<std::vector<double>>(count);
  bool hit_clamp = false;
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    double p = probs->data[i];
    if (p < kEps || p > 1.0 - kEps) {
      p = std::min(std::max(p, kEps), 1.0 - kEps);
      hit_clamp = true;
    }
    (*clamped)[i] = p;
    acc -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  if (hit_clamp) log_debug("bce_sum: probability clamped to [1e-7, 1-1e-7]");
  y->data[0] = acc;
  seal(y->data);
  if (rg) {
    auto tgt = std::make_shared<std::vector<double>>(targets.begin(), targets.begin() + count);
    tape.record([probs, y, clamped, tgt, count]() {
      const double g = y->grad[0];
      for (std::size_t i = 0; i < count; ++i) {
        const double p = (*clamped)[i];
        probs->grad[i] += g * (p - (*tgt)[i]) / (p * (1.0 - p));
      }
      seal(probs->grad);
    });
  }
  return y;
}

}  // namespace seqattn
