#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffsae/tensor.hpp"

namespace diffsae {

// Tape node for one recorded op: parent handles plus a backward rule closed
// over whatever forward values the rule needs. The tape is the implicit DAG
// reachable from a loss tensor; backward() visits it in reverse topological
// order exactly once.
struct Node {
  const char* op = "";
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backprop;
};

namespace ag {

// Thread-local gradient mode; distinct threads may build distinct graphs.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }

 private:
  bool prev_;
};

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
// y = x * W^T + b   with x:[n x in], W:[out x in], b:[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor add_rowvec(const Tensor& x, const Tensor& b);   // [m x n] + [n]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);                           // scalar
Tensor sum_sq(const Tensor& x);                        // scalar, sum of squares
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len);

// Keep the k largest values per row, zero the rest. Ties break toward the
// lowest column index. Gradient flows only through kept slots.
Tensor topk_keep(const Tensor& x, std::size_t k);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Bidirectional multi-head attention over one sequence.
// q,k,v: [n x d] with d divisible by heads; no causal mask.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

// Row gather: out[i] = table[ids[i]], backward scatter-adds.
Tensor embed(const Tensor& table, const std::vector<uint32_t>& ids);

// sum_i weights[i] * (-log softmax(logits[i])[targets[i]]); rows with zero
// weight contribute nothing (and get no gradient).
Tensor softmax_xent(const Tensor& logits, const std::vector<uint32_t>& targets,
                    const std::vector<double>& weights);

// ---- engine ----

// Accumulates d(out)/d(leaf) into every reachable requires_grad leaf.
// seed must match out's shape; null seed means all-ones (scalar convention).
void backward(const Tensor& out, const Tensor* seed = nullptr);

void zero_grad(Tensor& t);

struct FiniteDiffIssue {
  std::size_t param_index;
  std::size_t coord;
  double perturbed_loss;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  std::vector<FiniteDiffIssue> non_finite;  // coordinates where a perturbed loss was not finite
};

// Central-difference check of d(loss)/d(params). loss_fn must rebuild the
// graph from the current param values on every call and return a scalar.
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                   const std::vector<Tensor>& params, double eps);

}  // namespace ag
}  // namespace diffsae
