#include "diffsae/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "diffsae/kernels.hpp"

namespace diffsae::ag {

namespace {

thread_local bool t_grad_enabled = true;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool want_grad(const Tensor& t) { return t_grad_enabled && t.requires_grad; }

Tensor make_result(std::vector<std::size_t> shape, const char* op, std::vector<Tensor> parents,
                   std::function<void(const Tensor&)> backprop) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool track = false;
  for (const auto& p : parents) track = track || want_grad(p);
  if (track) {
    out.requires_grad = true;
    out.grad = std::make_shared<std::vector<double>>(out.numel(), 0.0);
    out.node = std::make_shared<Node>();
    out.node->op = op;
    out.node->parents = std::move(parents);
    out.node->backprop = std::move(backprop);
  }
  return out;
}

// Parents created before grad mode was enabled may lack a grad buffer.
double* grad_ptr(const Tensor& t) { return t.grad ? t.grad->data() : nullptr; }

}  // namespace

bool grad_enabled() { return t_grad_enabled; }
void set_grad_enabled(bool on) { t_grad_enabled = on; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape.size() == 2 && b.shape.size() == 2,
        "matmul: expected 2-d operands, got " + a.shape_str() + " and " + b.shape_str());
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  check(b.shape[0] == k, "matmul: inner dims differ, " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_result({m, n}, "matmul", {a, b}, [m, k, n](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    if (a.requires_grad && grad_ptr(a))
      kernels::matmul(o.grad->data(), false, b.ptr(), true, grad_ptr(a), m, n, k, true);
    if (b.requires_grad && grad_ptr(b))
      kernels::matmul(a.ptr(), true, o.grad->data(), false, grad_ptr(b), k, m, n, true);
  });
  kernels::matmul(a.ptr(), false, b.ptr(), false, out.ptr(), m, k, n);
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.shape.size() == 2 && w.shape.size() == 2,
        "linear: expected 2-d x and w, got " + x.shape_str() + " and " + w.shape_str());
  const std::size_t n = x.shape[0], in = x.shape[1], outd = w.shape[0];
  check(w.shape[1] == in, "linear: weight " + w.shape_str() + " does not match input " + x.shape_str());
  check(b.numel() == outd, "linear: bias " + b.shape_str() + " does not match output width " +
                               std::to_string(outd));
  Tensor out = make_result({n, outd}, "linear", {x, w, b}, [n, in, outd](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& w = o.node->parents[1];
    const Tensor& b = o.node->parents[2];
    if (x.requires_grad && grad_ptr(x))
      kernels::matmul(o.grad->data(), false, w.ptr(), false, grad_ptr(x), n, outd, in, true);
    if (w.requires_grad && grad_ptr(w))
      kernels::matmul(o.grad->data(), true, x.ptr(), false, grad_ptr(w), outd, n, in, true);
    if (b.requires_grad && grad_ptr(b)) {
      double* gb = grad_ptr(b);
      const double* g = o.grad->data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < outd; ++j) gb[j] += g[i * outd + j];
    }
  });
  kernels::matmul(x.ptr(), false, w.ptr(), true, out.ptr(), n, in, outd);
  const double* bp = b.ptr();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < outd; ++j) out.at(i * outd + j) += bp[j];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape == b.shape, "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_result(a.shape, "add", {a, b}, [](const Tensor& o) {
    for (int pi = 0; pi < 2; ++pi) {
      const Tensor& p = o.node->parents[pi];
      if (!p.requires_grad || !grad_ptr(p)) continue;
      kernels::axpy(1.0, o.grad->data(), grad_ptr(p), o.numel());
    }
  });
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  check(x.shape.size() == 2, "add_rowvec: expected 2-d x, got " + x.shape_str());
  const std::size_t m = x.shape[0], n = x.shape[1];
  check(b.numel() == n, "add_rowvec: vector " + b.shape_str() + " does not match row width " +
                            std::to_string(n));
  Tensor out = make_result(x.shape, "add_rowvec", {x, b}, [m, n](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    if (x.requires_grad && grad_ptr(x)) kernels::axpy(1.0, o.grad->data(), grad_ptr(x), m * n);
    if (b.requires_grad && grad_ptr(b)) {
      double* gb = grad_ptr(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += (*o.grad)[i * n + j];
    }
  });
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i * n + j) = x.at(i * n + j) + b.at(j);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape == b.shape, "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_result(a.shape, "sub", {a, b}, [](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    if (a.requires_grad && grad_ptr(a)) kernels::axpy(1.0, o.grad->data(), grad_ptr(a), o.numel());
    if (b.requires_grad && grad_ptr(b)) kernels::axpy(-1.0, o.grad->data(), grad_ptr(b), o.numel());
  });
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape == b.shape, "mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = make_result(a.shape, "mul", {a, b}, [](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    const std::size_t n = o.numel();
    if (a.requires_grad && grad_ptr(a)) {
      double* g = grad_ptr(a);
      for (std::size_t i = 0; i < n; ++i) g[i] += (*o.grad)[i] * b.at(i);
    }
    if (b.requires_grad && grad_ptr(b)) {
      double* g = grad_ptr(b);
      for (std::size_t i = 0; i < n; ++i) g[i] += (*o.grad)[i] * a.at(i);
    }
  });
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_result(a.shape, "scale", {a}, [s](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    if (a.requires_grad && grad_ptr(a)) kernels::axpy(s, o.grad->data(), grad_ptr(a), o.numel());
  });
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * s;
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_result(x.shape, "relu", {x}, [](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (!x.requires_grad || !grad_ptr(x)) return;
    double* g = grad_ptr(x);
    const std::size_t n = o.numel();
    for (std::size_t i = 0; i < n; ++i)
      if (x.at(i) > 0.0) g[i] += (*o.grad)[i];
  });
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = x.at(i) > 0.0 ? x.at(i) : 0.0;
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_result({1}, "sum", {x}, [](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (!x.requires_grad || !grad_ptr(x)) return;
    const double g = (*o.grad)[0];
    double* gx = grad_ptr(x);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
  double acc = 0.0;
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) acc += x.at(i);
  out.at(0) = acc;
  return out;
}

Tensor sum_sq(const Tensor& x) {
  Tensor out = make_result({1}, "sum_sq", {x}, [](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (!x.requires_grad || !grad_ptr(x)) return;
    const double g = 2.0 * (*o.grad)[0];
    double* gx = grad_ptr(x);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g * x.at(i);
  });
  double acc = 0.0;
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) acc += x.at(i) * x.at(i);
  out.at(0) = acc;
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len) {
  check(x.shape.size() == 2, "slice_rows: expected 2-d input, got " + x.shape_str());
  check(start + len <= x.shape[0], "slice_rows: range [" + std::to_string(start) + ", " +
                                       std::to_string(start + len) + ") exceeds " + x.shape_str());
  const std::size_t n = x.shape[1];
  Tensor out = make_result({len, n}, "slice_rows", {x}, [start, len, n](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (!x.requires_grad || !grad_ptr(x)) return;
    double* gx = grad_ptr(x) + start * n;
    kernels::axpy(1.0, o.grad->data(), gx, len * n);
  });
  std::copy_n(x.ptr() + start * n, len * n, out.ptr());
  return out;
}

Tensor topk_keep(const Tensor& x, std::size_t k) {
  check(k >= 1, "topk_keep: k must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  check(k <= n, "topk_keep: k=" + std::to_string(k) + " exceeds row width " + std::to_string(n));
  auto kept = std::make_shared<std::vector<std::size_t>>();
  kept->reserve(m * k);
  Tensor out = make_result(x.shape, "topk_keep", {x}, [kept](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (!x.requires_grad || !grad_ptr(x)) return;
    double* gx = grad_ptr(x);
    for (std::size_t idx : *kept) gx[idx] += (*o.grad)[idx];
  });

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.ptr() + i * n;
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Largest value first; ties go to the lowest index.
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [row](std::size_t a, std::size_t b) {
                        if (row[a] != row[b]) return row[a] > row[b];
                        return a < b;
                      });
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t idx = i * n + order[j];
      out.at(idx) = x.at(idx);
      kept->push_back(idx);
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check(x.shape.size() == 2, "layer_norm: expected 2-d input, got " + x.shape_str());
  const std::size_t m = x.shape[0], n = x.shape[1];
  check(gain.numel() == n && bias.numel() == n,
        "layer_norm: gain/bias must have width " + std::to_string(n));
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);

  Tensor out = make_result(x.shape, "layer_norm", {x, gain, bias}, [m, n, xhat, inv_std](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& gain = o.node->parents[1];
    const Tensor& bias = o.node->parents[2];
    const double* g = o.grad->data();
    if (gain.requires_grad && grad_ptr(gain)) {
      double* gg = grad_ptr(gain);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * (*xhat)[i * n + j];
    }
    if (bias.requires_grad && grad_ptr(bias)) {
      double* gb = grad_ptr(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
    if (x.requires_grad && grad_ptr(x)) {
      double* gx = grad_ptr(x);
      const double* gp = gain.ptr();
      for (std::size_t i = 0; i < m; ++i) {
        double mean_gy = 0.0, mean_gyx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double gy = g[i * n + j] * gp[j];
          mean_gy += gy;
          mean_gyx += gy * (*xhat)[i * n + j];
        }
        mean_gy /= static_cast<double>(n);
        mean_gyx /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double gy = g[i * n + j] * gp[j];
          gx[i * n + j] += ((gy - mean_gy) - (*xhat)[i * n + j] * mean_gyx) * (*inv_std)[i];
        }
      }
    }
  });

  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.ptr() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[i * n + j] = xh;
      out.at(i * n + j) = xh * gain.at(j) + bias.at(j);
    }
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  check(q.shape.size() == 2 && q.shape == k.shape && q.shape == v.shape,
        "attention: q/k/v must share a 2-d shape, got " + q.shape_str() + ", " + k.shape_str() +
            ", " + v.shape_str());
  const std::size_t n = q.shape[0], d = q.shape[1];
  check(heads >= 1 && d % heads == 0,
        "attention: width " + std::to_string(d) + " not divisible by heads " + std::to_string(heads));
  const std::size_t hd = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // probs[h] is the row-softmaxed [n x n] score matrix for head h.
  auto probs = std::make_shared<std::vector<std::vector<double>>>(heads);

  Tensor out = make_result(q.shape, "attention",
                           {q, k, v}, [n, d, hd, heads, att_scale, probs](const Tensor& o) {
    const Tensor& q = o.node->parents[0];
    const Tensor& k = o.node->parents[1];
    const Tensor& v = o.node->parents[2];
    std::vector<double> d_oh(n * hd), d_p(n * n), d_s(n * n), buf(n * hd);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::vector<double>& p = (*probs)[h];
      // Slice out this head's columns of the upstream gradient.
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) d_oh[i * hd + j] = (*o.grad)[i * d + h * hd + j];
      // dP = dOh * Vh^T
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < hd; ++c) acc += d_oh[i * hd + c] * v.at(j * d + h * hd + c);
          d_p[i * n + j] = acc;
        }
      // softmax backward per row, then scale.
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += d_p[i * n + j] * p[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          d_s[i * n + j] = p[i * n + j] * (d_p[i * n + j] - dot) * att_scale;
      }
      if (q.requires_grad && grad_ptr(q)) {
        // dQh = dS * Kh
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += d_s[i * n + j] * k.at(j * d + h * hd + c);
            grad_ptr(q)[i * d + h * hd + c] += acc;
          }
      }
      if (k.requires_grad && grad_ptr(k)) {
        // dKh = dS^T * Qh
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += d_s[i * n + j] * q.at(i * d + h * hd + c);
            grad_ptr(k)[j * d + h * hd + c] += acc;
          }
      }
      if (v.requires_grad && grad_ptr(v)) {
        // dVh = P^T * dOh
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += p[i * n + j] * d_oh[i * hd + c];
            grad_ptr(v)[j * d + h * hd + c] += acc;
          }
      }
    }
    (void)buf;
  });

  std::vector<double> scores(n * n);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += q.at(i * d + h * hd + c) * k.at(j * d + h * hd + c);
        scores[i * n + j] = acc * att_scale;
      }
    kernels::softmax_rows(scores.data(), n, n);
    (*probs)[h] = scores;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += scores[i * n + j] * v.at(j * d + h * hd + c);
        out.at(i * d + h * hd + c) = acc;
      }
  }
  return out;
}

Tensor embed(const Tensor& table, const std::vector<uint32_t>& ids) {
  check(table.shape.size() == 2, "embed: table must be 2-d, got " + table.shape_str());
  const std::size_t v = table.shape[0], d = table.shape[1];
  for (uint32_t id : ids)
    check(id < v, "embed: id " + std::to_string(id) + " out of range for table " + table.shape_str());
  auto ids_copy = std::make_shared<std::vector<uint32_t>>(ids);
  Tensor out = make_result({ids.size(), d}, "embed", {table}, [d, ids_copy](const Tensor& o) {
    const Tensor& table = o.node->parents[0];
    if (!table.requires_grad || !grad_ptr(table)) return;
    double* gt = grad_ptr(table);
    for (std::size_t i = 0; i < ids_copy->size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[(*ids_copy)[i] * d + j] += (*o.grad)[i * d + j];
  });
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.ptr() + ids[i] * d, d, out.ptr() + i * d);
  return out;
}

Tensor softmax_xent(const Tensor& logits, const std::vector<uint32_t>& targets,
                    const std::vector<double>& weights) {
  check(logits.shape.size() == 2, "softmax_xent: logits must be 2-d, got " + logits.shape_str());
  const std::size_t n = logits.shape[0], v = logits.shape[1];
  check(targets.size() == n, "softmax_xent: " + std::to_string(targets.size()) + " targets for " +
                                 std::to_string(n) + " rows");
  check(weights.size() == n, "softmax_xent: " + std::to_string(weights.size()) + " weights for " +
                                 std::to_string(n) + " rows");
  for (uint32_t t : targets)
    check(t < v, "softmax_xent: target " + std::to_string(t) + " out of vocab " + std::to_string(v));

  auto probs = std::make_shared<std::vector<double>>(logits.ptr(), logits.ptr() + n * v);
  kernels::softmax_rows(probs->data(), n, v);
  auto tgt = std::make_shared<std::vector<uint32_t>>(targets);
  auto wts = std::make_shared<std::vector<double>>(weights);

  Tensor out = make_result({1}, "softmax_xent", {logits}, [n, v, probs, tgt, wts](const Tensor& o) {
    const Tensor& logits = o.node->parents[0];
    if (!logits.requires_grad || !grad_ptr(logits)) return;
    const double g = (*o.grad)[0];
    double* gl = grad_ptr(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (*wts)[i];
      if (w == 0.0) continue;
      const double gw = g * w;
      for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += gw * (*probs)[i * v + j];
      gl[i * v + (*tgt)[i]] -= gw;
    }
  });

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    acc += w * -std::log((*probs)[i * v + targets[i]]);
  }
  out.at(0) = acc;
  return out;
}

void backward(const Tensor& out, const Tensor* seed) {
  if (!out.node) {
    if (out.requires_grad && out.grad) {
      if (seed) {
        check(seed->shape == out.shape, "backward: seed " + seed->shape_str() +
                                            " does not match output " + out.shape_str());
        for (std::size_t i = 0; i < out.numel(); ++i) (*out.grad)[i] += seed->at(i);
      } else {
        for (std::size_t i = 0; i < out.numel(); ++i) (*out.grad)[i] += 1.0;
      }
      return;
    }
    throw std::logic_error("backward called before any forward was recorded");
  }
  if (seed) {
    check(seed->shape == out.shape,
          "backward: seed " + seed->shape_str() + " does not match output " + out.shape_str());
    for (std::size_t i = 0; i < out.numel(); ++i) (*out.grad)[i] += seed->at(i);
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) (*out.grad)[i] += 1.0;
  }

  // Iterative post-order DFS over the node DAG; each node enters `order`
  // exactly once, after all of its parents' producers.
  std::vector<Tensor> order;
  std::unordered_set<const Node*> visited;
  struct Frame {
    Tensor t;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({out, 0});
  visited.insert(out.node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.t.node->parents.size()) {
      const Tensor& p = f.t.node->parents[f.next_parent++];
      if (p.node && !visited.count(p.node.get())) {
        visited.insert(p.node.get());
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }
  // order is post-order (children first); walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) it->node->backprop(*it);
}

void zero_grad(Tensor& t) {
  if (t.grad) std::fill(t.grad->begin(), t.grad->end(), 0.0);
}

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                   const std::vector<Tensor>& params, double eps) {
  check(eps > 0.0, "finite_diff_check: eps must be positive");
  std::vector<std::vector<double>> analytic;
  {
    for (auto p : params) zero_grad(p);
    Tensor loss = loss_fn();
    check(loss.numel() == 1, "finite_diff_check: loss must be scalar, got " + loss.shape_str());
    backward(loss);
    for (const auto& p : params) {
      check(static_cast<bool>(p.grad), "finite_diff_check: param has no grad buffer");
      analytic.push_back(*p.grad);
    }
  }

  FiniteDiffReport report;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t c = 0; c < p.numel(); ++c) {
      const double orig = p.at(c);
      p.at(c) = orig + eps;
      const double lp = loss_fn().item();
      p.at(c) = orig - eps;
      const double lm = loss_fn().item();
      p.at(c) = orig;
      if (!std::isfinite(lp)) report.non_finite.push_back({pi, c, lp});
      if (!std::isfinite(lm)) report.non_finite.push_back({pi, c, lm});
      if (!std::isfinite(lp) || !std::isfinite(lm)) continue;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double rel = std::abs(analytic[pi][c] - numeric) / (std::abs(numeric) + eps);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_coord = c;
      }
    }
  }
  return report;
}

}  // namespace diffsae::ag
