#ifndef ALCA_TENSOR_HPP
#define ALCA_TENSOR_HPP

// Dense row-major tensors with reverse-mode differentiation.
//
// Every differentiable primitive takes a Tape* first. Passing nullptr runs
// the pure forward computation (inference); passing a tape records a backward
// closure whenever some input requires gradients. A tape lives for one
// forward pass: Tape::backward zeroes the gradients of everything it touched,
// seeds the scalar loss with 1, sweeps the recorded ops in reverse order
// (which is reverse-topological by construction) and then clears itself.
// Gradients accumulate across multiple uses of the same tensor within one
// backward sweep; leaf tensors keep their gradients until the next backward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "common.hpp"

namespace alca {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <class S>
class Tape;

template <class S>
struct TensorImpl {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  const void* producer = nullptr;  // tape that computed this value, if any
};

template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.p = std::make_shared<TensorImpl<S>>();
    t.p->shape = std::move(shape);
    t.p->data.assign(static_cast<size_t>(numel_of(t.p->shape)), S(0));
    return t;
  }

  static Tensor full(Shape shape, S value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.p->data.begin(), t.p->data.end(), value);
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    ALCA_THROW_IF(numel_of(shape) != static_cast<int64_t>(values.size()),
                  ErrorKind::Runtime, "tensor: ", shape_str(shape), " does not hold ",
                  values.size(), " values");
    Tensor t;
    t.p = std::make_shared<TensorImpl<S>>();
    t.p->shape = std::move(shape);
    t.p->data = std::move(values);
    return t;
  }

  static Tensor scalar(S value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(p); }
  const Shape& shape() const { return p->shape; }
  int64_t numel() const { return static_cast<int64_t>(p->data.size()); }
  int64_t rank() const { return static_cast<int64_t>(p->shape.size()); }
  int64_t dim(int i) const { return p->shape[static_cast<size_t>(i)]; }

  // Tensor is a shared handle onto its storage; a const handle still exposes
  // mutable spans, like a const shared_ptr to non-const data.
  std::span<const S> data() const { return {p->data.data(), p->data.size()}; }
  std::span<S> raw() const { return {p->data.data(), p->data.size()}; }

  bool requires_grad() const { return p->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    p->requires_grad = on;
    if (on) {
      p->grad.assign(p->data.size(), S(0));
    } else {
      p->grad.clear();
    }
    return *this;
  }

  std::span<S> grad() const {
    ALCA_THROW_IF(!p->requires_grad, ErrorKind::Runtime,
                  "tensor has no gradient slot");
    return {p->grad.data(), p->grad.size()};
  }
  void zero_grad() const {
    if (p->requires_grad) std::fill(p->grad.begin(), p->grad.end(), S(0));
  }

  S item() const {
    ALCA_THROW_IF(numel() != 1, ErrorKind::Runtime, "item() on non-scalar ",
                  shape_str(p->shape));
    return p->data[0];
  }

  S at(const std::vector<int64_t>& idx) const {
    return p->data[static_cast<size_t>(offset_of(idx))];
  }
  S& at(const std::vector<int64_t>& idx) {
    return p->data[static_cast<size_t>(offset_of(idx))];
  }

  // Deep value copy; never carries gradients or tape provenance.
  Tensor clone() const {
    Tensor t;
    t.p = std::make_shared<TensorImpl<S>>();
    t.p->shape = p->shape;
    t.p->data = p->data;
    return t;
  }

  std::shared_ptr<TensorImpl<S>> p;

 private:
  int64_t offset_of(const std::vector<int64_t>& idx) const {
    ALCA_THROW_IF(idx.size() != p->shape.size(), ErrorKind::Runtime,
                  "index rank mismatch");
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      ALCA_THROW_IF(idx[d] < 0 || idx[d] >= p->shape[d], ErrorKind::Runtime,
                    "index out of range at dim ", d);
      off = off * p->shape[d] + idx[d];
    }
    return off;
  }
};

template <class S>
class Tape {
 public:
  // Tapes are single-owner, single-threaded; not copyable.
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor<S>> involved, Tensor<S> out,
              std::function<void()> backward_fn) {
    out.p->producer = this;
    Node node;
    node.involved = std::move(involved);
    node.involved.push_back(out);
    node.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(node));
  }

  size_t num_ops() const { return nodes_.size(); }

  void backward(const Tensor<S>& loss) {
    ALCA_THROW_IF(loss.numel() != 1, ErrorKind::Runtime,
                  "backward: loss must be scalar, got ", shape_str(loss.shape()));
    ALCA_THROW_IF(loss.p->producer != this, ErrorKind::Runtime,
                  "backward: loss is detached from this tape, no gradients to produce");
    // (Re)zero the gradient buffer of every participating tensor so that a
    // fresh backward never accumulates into stale values from a prior pass.
    for (auto& node : nodes_) {
      for (auto& t : node.involved) {
        if (t.p->requires_grad) {
          if (t.p->grad.size() != t.p->data.size()) {
            t.p->grad.assign(t.p->data.size(), S(0));
          } else {
            std::fill(t.p->grad.begin(), t.p->grad.end(), S(0));
          }
        }
      }
    }
    loss.p->grad.assign(1, S(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward_fn();
    }
    clear();
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor<S>> involved;  // inputs + output, keeps storage alive
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <class S>
void check_finite(const Tensor<S>& t, const char* op) {
  for (S v : t.data()) {
    ALCA_THROW_IF(!std::isfinite(static_cast<double>(v)), ErrorKind::Runtime,
                  op, ": non-finite value in output");
  }
}

template <class S>
bool wants_grad(Tape<S>* tape, std::initializer_list<const Tensor<S>*> ins) {
  if (!tape) return false;
  for (const auto* t : ins) {
    if ((*t).requires_grad()) return true;
  }
  return false;
}

// Broadcast plan: trailing-dim alignment, extent 1 stretches. Strides of
// broadcast dims are zero so the same odometer walk serves forward and
// backward (where writes through a zero stride become accumulation).
struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> sa, sb;  // per-out-dim strides into a and b
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  const size_t ra = a.size(), rb = b.size();
  const size_t r = std::max(ra, rb);
  plan.out.resize(r);
  plan.sa.assign(r, 0);
  plan.sb.assign(r, 0);
  std::vector<int64_t> row_a(ra), row_b(rb);
  int64_t acc = 1;
  for (size_t i = ra; i-- > 0;) {
    row_a[i] = acc;
    acc *= a[i];
  }
  acc = 1;
  for (size_t i = rb; i-- > 0;) {
    row_b[i] = acc;
    acc *= b[i];
  }
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    const int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    ALCA_THROW_IF(da != db && da != 1 && db != 1, ErrorKind::Runtime,
                  "broadcast: incompatible shapes ", shape_str(a), " vs ",
                  shape_str(b));
    plan.out[i] = std::max(da, db);
    if (da != 1 && i >= r - ra) plan.sa[i] = row_a[i - (r - ra)];
    if (db != 1 && i >= r - rb) plan.sb[i] = row_b[i - (r - rb)];
  }
  return plan;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const size_t r = plan.out.size();
  const int64_t n = numel_of(plan.out);
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    f(lin, oa, ob);
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      oa += plan.sa[d];
      ob += plan.sb[d];
      if (idx[d] < plan.out[d]) break;
      oa -= plan.sa[d] * plan.out[d];
      ob -= plan.sb[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

// c[m,n] += a[m,k] * b[k,n], optionally transposing either operand.
template <class S>
void gemm_nn(int64_t m, int64_t k, int64_t n, const S* a, const S* b, S* c) {
  for (int64_t i = 0; i < m; ++i) {
    S* ci = c + i * n;
    const S* ai = a + i * k;
    for (int64_t l = 0; l < k; ++l) {
      const S ail = ai[l];
      if (ail == S(0)) continue;
      const S* bl = b + l * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
    }
  }
}

template <class S>
void gemm_nt(int64_t m, int64_t k, int64_t n, const S* a, const S* bt, S* c) {
  // bt is n x k
  for (int64_t i = 0; i < m; ++i) {
    const S* ai = a + i * k;
    S* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const S* bj = bt + j * k;
      S acc = S(0);
      for (int64_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] += acc;
    }
  }
}

template <class S>
void gemm_tn(int64_t m, int64_t k, int64_t n, const S* at, const S* b, S* c) {
  // at is k x m
  for (int64_t l = 0; l < k; ++l) {
    const S* al = at + l * m;
    const S* bl = b + l * n;
    for (int64_t i = 0; i < m; ++i) {
      const S ali = al[i];
      if (ali == S(0)) continue;
      S* ci = c + i * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() == b.shape()) {
    Tensor<S> y = Tensor<S>::zeros(a.shape());
    const auto ad = a.data(), bd = b.data();
    auto yd = y.raw();
    for (size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] + bd[i];
    detail::check_finite(y, "add");
    if (detail::wants_grad(tape, {&a, &b})) {
      y.set_requires_grad(true);
      tape->record({a, b}, y, [a, b, y]() mutable {
        auto gy = y.grad();
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
        }
      });
    }
    return y;
  }
  const auto plan = detail::broadcast_plan(a.shape(), b.shape());
  Tensor<S> y = Tensor<S>::zeros(plan.out);
  {
    const auto ad = a.data(), bd = b.data();
    auto yd = y.raw();
    detail::for_each_broadcast(plan, [&](int64_t o, int64_t oa, int64_t ob) {
      yd[o] = ad[oa] + bd[ob];
    });
  }
  detail::check_finite(y, "add");
  if (detail::wants_grad(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y, plan]() mutable {
      auto gy = y.grad();
      const bool na = a.requires_grad(), nb = b.requires_grad();
      auto ga = na ? a.grad() : std::span<S>{};
      auto gb = nb ? b.grad() : std::span<S>{};
      detail::for_each_broadcast(plan, [&](int64_t o, int64_t oa, int64_t ob) {
        if (na) ga[oa] += gy[o];
        if (nb) gb[ob] += gy[o];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> mul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  const auto plan = detail::broadcast_plan(a.shape(), b.shape());
  Tensor<S> y = Tensor<S>::zeros(plan.out);
  {
    const auto ad = a.data(), bd = b.data();
    auto yd = y.raw();
    detail::for_each_broadcast(plan, [&](int64_t o, int64_t oa, int64_t ob) {
      yd[o] = ad[oa] * bd[ob];
    });
  }
  detail::check_finite(y, "mul");
  if (detail::wants_grad(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y, plan]() mutable {
      auto gy = y.grad();
      const auto ad = a.data(), bd = b.data();
      const bool na = a.requires_grad(), nb = b.requires_grad();
      auto ga = na ? a.grad() : std::span<S>{};
      auto gb = nb ? b.grad() : std::span<S>{};
      detail::for_each_broadcast(plan, [&](int64_t o, int64_t oa, int64_t ob) {
        if (na) ga[oa] += gy[o] * bd[ob];
        if (nb) gb[ob] += gy[o] * ad[oa];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> scale(Tape<S>* tape, const Tensor<S>& x, S c) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const auto xd = x.data();
  auto yd = y.raw();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] * c;
  detail::check_finite(y, "scale");
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, c]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * c;
    });
  }
  return y;
}

template <class S>
Tensor<S> sub(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  return add(tape, a, scale(tape, b, S(-1)));
}

namespace detail {
// Optional kink-distance probe: while enabled, every relu records the
// smallest |input|. Finite-difference checks use it to certify that their
// evaluation point is far enough from the non-smooth set.
inline thread_local bool relu_margin_tracking = false;
inline thread_local double relu_min_margin = 0.0;
}  // namespace detail

template <class S>
Tensor<S> relu(Tape<S>* tape, const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const auto xd = x.data();
  auto yd = y.raw();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] > S(0) ? xd[i] : S(0);
  if (detail::relu_margin_tracking) {
    for (size_t i = 0; i < yd.size(); ++i) {
      const double a = std::abs(static_cast<double>(xd[i]));
      if (a < detail::relu_min_margin) detail::relu_min_margin = a;
    }
  }
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      const auto xd2 = x.data();
      auto gx = x.grad();
      auto gy = y.grad();
      for (size_t i = 0; i < gy.size(); ++i) {
        if (xd2[i] > S(0)) gx[i] += gy[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(Tape<S>* tape, const Tensor<S>& x, Shape shape) {
  ALCA_THROW_IF(numel_of(shape) != x.numel(), ErrorKind::Runtime,
                "reshape: ", shape_str(x.shape()), " -> ", shape_str(shape));
  Tensor<S> y = Tensor<S>::from(std::move(shape),
                                std::vector<S>(x.data().begin(), x.data().end()));
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

template <class S>
Tensor<S> transpose2d(Tape<S>* tape, const Tensor<S>& x) {
  ALCA_THROW_IF(x.rank() != 2, ErrorKind::Runtime, "transpose2d: rank ",
                x.rank());
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros({n, m});
  const auto xd = x.data();
  auto yd = y.raw();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) yd[j * m + i] = xd[i * n + j];
  }
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, m, n]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) gx[i * n + j] += gy[j * m + i];
      }
    });
  }
  return y;
}

template <class S>
Tensor<S> permute(Tape<S>* tape, const Tensor<S>& x, std::vector<int> perm) {
  ALCA_THROW_IF(static_cast<int64_t>(perm.size()) != x.rank(),
                ErrorKind::Runtime, "permute: rank mismatch");
  const size_t r = perm.size();
  Shape out(r);
  for (size_t i = 0; i < r; ++i) out[i] = x.dim(perm[i]);
  std::vector<int64_t> in_stride(r, 1);
  for (size_t i = r - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * x.dim(static_cast<int>(i));
  std::vector<int64_t> walk(r);  // stride through x while walking y linearly
  for (size_t i = 0; i < r; ++i) walk[i] = in_stride[static_cast<size_t>(perm[i])];

  Tensor<S> y = Tensor<S>::zeros(out);
  const auto xd = x.data();
  auto yd = y.raw();
  std::vector<int64_t> idx(r, 0);
  int64_t ox = 0;
  const int64_t n = y.numel();
  for (int64_t lin = 0; lin < n; ++lin) {
    yd[lin] = xd[ox];
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      ox += walk[d];
      if (idx[d] < out[d]) break;
      ox -= walk[d] * out[d];
      idx[d] = 0;
    }
  }
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, out, walk]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      const size_t rr = out.size();
      std::vector<int64_t> ix(rr, 0);
      int64_t off = 0;
      const int64_t count = y.numel();
      for (int64_t lin = 0; lin < count; ++lin) {
        gx[off] += gy[lin];
        for (size_t d = rr; d-- > 0;) {
          ix[d]++;
          off += walk[d];
          if (ix[d] < out[d]) break;
          off -= walk[d] * out[d];
          ix[d] = 0;
        }
      }
    });
  }
  return y;
}

// Stack J vectors of length d into a (J, d) matrix.
template <class S>
Tensor<S> stack_rows(Tape<S>* tape, const std::vector<Tensor<S>>& rows) {
  ALCA_THROW_IF(rows.empty(), ErrorKind::Runtime, "stack_rows: no rows");
  const int64_t d = rows[0].numel();
  for (const auto& r : rows) {
    ALCA_THROW_IF(r.numel() != d, ErrorKind::Runtime,
                  "stack_rows: inconsistent row lengths");
  }
  const int64_t j = static_cast<int64_t>(rows.size());
  Tensor<S> y = Tensor<S>::zeros({j, d});
  auto yd = y.raw();
  for (int64_t r = 0; r < j; ++r) {
    const auto rd = rows[static_cast<size_t>(r)].data();
    std::copy(rd.begin(), rd.end(), yd.begin() + r * d);
  }
  bool wants = false;
  for (const auto& r : rows) wants = wants || r.requires_grad();
  if (tape && wants) {
    y.set_requires_grad(true);
    tape->record(rows, y, [rows, y, d]() mutable {
      auto gy = y.grad();
      for (size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].requires_grad()) continue;
        auto gr = rows[r].grad();
        for (int64_t i = 0; i < d; ++i) gr[i] += gy[static_cast<int64_t>(r) * d + i];
      }
    });
  }
  return y;
}

// Stack M equally shaped tensors along a new trailing dimension.
template <class S>
Tensor<S> stack_lastdim(Tape<S>* tape, const std::vector<Tensor<S>>& parts) {
  ALCA_THROW_IF(parts.empty(), ErrorKind::Runtime, "stack_lastdim: no inputs");
  const Shape base = parts[0].shape();
  for (const auto& t : parts) {
    ALCA_THROW_IF(t.shape() != base, ErrorKind::Runtime,
                  "stack_lastdim: inconsistent shapes");
  }
  const int64_t m = static_cast<int64_t>(parts.size());
  const int64_t n = parts[0].numel();
  Shape out = base;
  out.push_back(m);
  Tensor<S> y = Tensor<S>::zeros(out);
  auto yd = y.raw();
  for (int64_t k = 0; k < m; ++k) {
    const auto pd = parts[static_cast<size_t>(k)].data();
    for (int64_t i = 0; i < n; ++i) yd[i * m + k] = pd[i];
  }
  bool wants = false;
  for (const auto& t : parts) wants = wants || t.requires_grad();
  if (tape && wants) {
    y.set_requires_grad(true);
    tape->record(parts, y, [parts, y, m, n]() mutable {
      auto gy = y.grad();
      for (int64_t k = 0; k < m; ++k) {
        auto& part = parts[static_cast<size_t>(k)];
        if (!part.requires_grad()) continue;
        auto gp = part.grad();
        for (int64_t i = 0; i < n; ++i) gp[i] += gy[i * m + k];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  ALCA_THROW_IF(a.rank() != 2 || b.rank() != 2, ErrorKind::Runtime,
                "matmul: needs 2-d operands, got ", shape_str(a.shape()), " x ",
                shape_str(b.shape()));
  ALCA_THROW_IF(a.dim(1) != b.dim(0), ErrorKind::Runtime,
                "matmul: inner dimensions disagree, ", shape_str(a.shape()),
                " x ", shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> y = Tensor<S>::zeros({m, n});
  detail::gemm_nn(m, k, n, a.data().data(), b.data().data(), y.raw().data());
  detail::check_finite(y, "matmul");
  if (detail::wants_grad(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [a, b, y, m, k, n]() mutable {
      const S* gy = y.grad().data();
      if (a.requires_grad()) {
        // dA = dC . B^T
        detail::gemm_nt(m, n, k, gy, b.data().data(), a.grad().data());
      }
      if (b.requires_grad()) {
        // dB = A^T . dC
        detail::gemm_tn(k, m, n, a.data().data(), gy, b.grad().data());
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> sum_all(Tape<S>* tape, const Tensor<S>& x) {
  S acc = S(0);
  for (S v : x.data()) acc += v;
  Tensor<S> y = Tensor<S>::scalar(acc);
  detail::check_finite(y, "sum_all");
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y]() mutable {
      const S g = y.grad()[0];
      auto gx = x.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

template <class S>
Tensor<S> mean_all(Tape<S>* tape, const Tensor<S>& x) {
  return scale(tape, sum_all(tape, x), S(1) / static_cast<S>(x.numel()));
}

// Per-channel mean over a weighted index subset. x is interpreted as
// (C, N) with C = x.shape[0]; mask holds N zero/one weights.
template <class S>
Tensor<S> masked_mean(Tape<S>* tape, const Tensor<S>& x,
                      const std::vector<S>& mask) {
  ALCA_THROW_IF(x.rank() < 1, ErrorKind::Runtime, "masked_mean: rank 0 input");
  const int64_t c = x.dim(0);
  const int64_t n = x.numel() / c;
  ALCA_THROW_IF(static_cast<int64_t>(mask.size()) != n, ErrorKind::Runtime,
                "masked_mean: mask length ", mask.size(), " vs ", n);
  S weight = S(0);
  for (S w : mask) weight += w;
  ALCA_THROW_IF(weight <= S(0), ErrorKind::Runtime,
                "masked_mean: empty selection");
  Tensor<S> y = Tensor<S>::zeros({c});
  const auto xd = x.data();
  auto yd = y.raw();
  for (int64_t ch = 0; ch < c; ++ch) {
    S acc = S(0);
    const S* row = xd.data() + ch * n;
    for (int64_t i = 0; i < n; ++i) acc += mask[static_cast<size_t>(i)] * row[i];
    yd[ch] = acc / weight;
  }
  detail::check_finite(y, "masked_mean");
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, mask, c, n, weight]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (int64_t ch = 0; ch < c; ++ch) {
        const S g = gy[ch] / weight;
        S* row = gx.data() + ch * n;
        for (int64_t i = 0; i < n; ++i) row[i] += g * mask[static_cast<size_t>(i)];
      }
    });
  }
  return y;
}

// L2 norm of each row of a (J, d) matrix. Exact at zero rows; the backward
// guards the division so a zero row produces zero gradient instead of NaN.
template <class S>
Tensor<S> rownorm_l2(Tape<S>* tape, const Tensor<S>& x) {
  ALCA_THROW_IF(x.rank() != 2, ErrorKind::Runtime, "rownorm_l2: rank ",
                x.rank());
  const int64_t j = x.dim(0), d = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros({j});
  const auto xd = x.data();
  auto yd = y.raw();
  for (int64_t r = 0; r < j; ++r) {
    S acc = S(0);
    const S* row = xd.data() + r * d;
    for (int64_t i = 0; i < d; ++i) acc += row[i] * row[i];
    yd[r] = std::sqrt(acc);
  }
  detail::check_finite(y, "rownorm_l2");
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, j, d]() mutable {
      const auto xd2 = x.data();
      const auto yv = y.data();
      auto gx = x.grad();
      auto gy = y.grad();
      for (int64_t r = 0; r < j; ++r) {
        const S denom = std::max(yv[r], S(1e-12));
        const S g = gy[r] / denom;
        const S* row = xd2.data() + r * d;
        S* grow = gx.data() + r * d;
        for (int64_t i = 0; i < d; ++i) grow[i] += g * row[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Softmax / losses
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> softmax_lastdim(Tape<S>* tape, const Tensor<S>& x) {
  ALCA_THROW_IF(x.rank() < 1 || x.dim(static_cast<int>(x.rank() - 1)) < 1,
                ErrorKind::Runtime, "softmax: empty last dimension");
  const int64_t d = x.dim(static_cast<int>(x.rank() - 1));
  const int64_t rows = x.numel() / d;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const auto xd = x.data();
  auto yd = y.raw();
  for (int64_t r = 0; r < rows; ++r) {
    const S* in = xd.data() + r * d;
    S* out = yd.data() + r * d;
    S m = in[0];
    for (int64_t i = 1; i < d; ++i) m = std::max(m, in[i]);
    S z = S(0);
    for (int64_t i = 0; i < d; ++i) {
      out[i] = std::exp(in[i] - m);
      z += out[i];
    }
    for (int64_t i = 0; i < d; ++i) out[i] /= z;
  }
  detail::check_finite(y, "softmax");
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, rows, d]() mutable {
      const auto yv = y.data();
      auto gx = x.grad();
      auto gy = y.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const S* p = yv.data() + r * d;
        const S* g = gy.data() + r * d;
        S dot = S(0);
        for (int64_t i = 0; i < d; ++i) dot += g[i] * p[i];
        S* out = gx.data() + r * d;
        for (int64_t i = 0; i < d; ++i) out[i] += p[i] * (g[i] - dot);
      }
    });
  }
  return y;
}

// -log softmax(logits)[target], computed via a max-shifted log-sum-exp so a
// dominated class never feeds a literal log(0).
template <class S>
Tensor<S> cross_entropy_logits(Tape<S>* tape, const Tensor<S>& logits,
                               int64_t target) {
  ALCA_THROW_IF(logits.rank() != 1, ErrorKind::Runtime,
                "cross_entropy: logits must be a vector");
  const int64_t n = logits.numel();
  ALCA_THROW_IF(target < 0 || target >= n, ErrorKind::Runtime,
                "cross_entropy: target ", target, " out of range ", n);
  const auto zd = logits.data();
  S m = zd[0];
  for (int64_t i = 1; i < n; ++i) m = std::max(m, zd[i]);
  S z = S(0);
  for (int64_t i = 0; i < n; ++i) z += std::exp(zd[i] - m);
  const S loss = std::log(z) + m - zd[static_cast<size_t>(target)];
  Tensor<S> y = Tensor<S>::scalar(loss);
  detail::check_finite(y, "cross_entropy");
  if (detail::wants_grad(tape, {&logits})) {
    y.set_requires_grad(true);
    tape->record({logits}, y, [logits, y, target, m, z, n]() mutable {
      const S g = y.grad()[0];
      const auto zd2 = logits.data();
      auto gz = logits.grad();
      for (int64_t i = 0; i < n; ++i) {
        const S p = std::exp(zd2[i] - m) / z;
        gz[i] += g * (p - (i == target ? S(1) : S(0)));
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Temporal convolution (kernel 3, symmetric zero padding 1)
// ---------------------------------------------------------------------------

// x: (Cin, T, U), w: (Cout, Cin, 3)  ->  (Cout, ceil(T/stride), U)
template <class S>
Tensor<S> temporal_conv(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& w,
                        int stride) {
  ALCA_THROW_IF(x.rank() != 3, ErrorKind::Runtime, "temporal_conv: x rank ",
                x.rank());
  ALCA_THROW_IF(w.rank() != 3 || w.dim(2) != 3, ErrorKind::Runtime,
                "temporal_conv: kernel must be (Cout, Cin, 3)");
  ALCA_THROW_IF(w.dim(1) != x.dim(0), ErrorKind::Runtime,
                "temporal_conv: channel mismatch ", shape_str(x.shape()), " vs ",
                shape_str(w.shape()));
  ALCA_THROW_IF(stride != 1 && stride != 2, ErrorKind::Runtime,
                "temporal_conv: stride must be 1 or 2");
  const int64_t cin = x.dim(0), t = x.dim(1), u = x.dim(2), cout = w.dim(0);
  const int64_t tout = (t + stride - 1) / stride;
  Tensor<S> y = Tensor<S>::zeros({cout, tout, u});
  const auto xd = x.data();
  const auto wd = w.data();
  auto yd = y.raw();
  for (int64_t o = 0; o < cout; ++o) {
    for (int64_t i = 0; i < cin; ++i) {
      const S* kw = wd.data() + (o * cin + i) * 3;
      const S* xi = xd.data() + i * t * u;
      S* yo = yd.data() + o * tout * u;
      for (int64_t to = 0; to < tout; ++to) {
        for (int64_t k = 0; k < 3; ++k) {
          const int64_t ti = to * stride + k - 1;
          if (ti < 0 || ti >= t) continue;
          const S wk = kw[k];
          if (wk == S(0)) continue;
          const S* xr = xi + ti * u;
          S* yr = yo + to * u;
          for (int64_t v = 0; v < u; ++v) yr[v] += wk * xr[v];
        }
      }
    }
  }
  detail::check_finite(y, "temporal_conv");
  if (detail::wants_grad(tape, {&x, &w})) {
    y.set_requires_grad(true);
    tape->record({x, w}, y, [x, w, y, cin, t, u, cout, tout, stride]() mutable {
      const auto xd2 = x.data();
      const auto wd2 = w.data();
      auto gy = y.grad();
      const bool nx = x.requires_grad(), nw = w.requires_grad();
      auto gx = nx ? x.grad() : std::span<S>{};
      auto gw = nw ? w.grad() : std::span<S>{};
      for (int64_t o = 0; o < cout; ++o) {
        for (int64_t i = 0; i < cin; ++i) {
          const S* kw = wd2.data() + (o * cin + i) * 3;
          S* gkw = nw ? gw.data() + (o * cin + i) * 3 : nullptr;
          const S* xi = xd2.data() + i * t * u;
          S* gxi = nx ? gx.data() + i * t * u : nullptr;
          const S* gyo = gy.data() + o * tout * u;
          for (int64_t to = 0; to < tout; ++to) {
            const S* gyr = gyo + to * u;
            for (int64_t k = 0; k < 3; ++k) {
              const int64_t ti = to * stride + k - 1;
              if (ti < 0 || ti >= t) continue;
              if (nx) {
                const S wk = kw[k];
                S* gxr = gxi + ti * u;
                for (int64_t v = 0; v < u; ++v) gxr[v] += wk * gyr[v];
              }
              if (nw) {
                const S* xr = xi + ti * u;
                S acc = S(0);
                for (int64_t v = 0; v < u; ++v) acc += xr[v] * gyr[v];
                gkw[k] += acc;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// Keep every stride-th frame of (C, T, U); used by strided residual paths.
template <class S>
Tensor<S> subsample_time(Tape<S>* tape, const Tensor<S>& x, int stride) {
  ALCA_THROW_IF(x.rank() != 3, ErrorKind::Runtime, "subsample_time: rank ",
                x.rank());
  if (stride == 1) return x;
  ALCA_THROW_IF(stride != 2, ErrorKind::Runtime,
                "subsample_time: stride must be 1 or 2");
  const int64_t c = x.dim(0), t = x.dim(1), u = x.dim(2);
  const int64_t tout = (t + stride - 1) / stride;
  Tensor<S> y = Tensor<S>::zeros({c, tout, u});
  const auto xd = x.data();
  auto yd = y.raw();
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t to = 0; to < tout; ++to) {
      const S* src = xd.data() + (ch * t + to * stride) * u;
      S* dst = yd.data() + (ch * tout + to) * u;
      std::copy(src, src + u, dst);
    }
  }
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, c, t, u, tout, stride]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t to = 0; to < tout; ++to) {
          const S* src = gy.data() + (ch * tout + to) * u;
          S* dst = gx.data() + (ch * t + to * stride) * u;
          for (int64_t v = 0; v < u; ++v) dst[v] += src[v];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization over all non-channel positions of (C, ...)
// ---------------------------------------------------------------------------

// Training mode normalizes with the biased variance of the current call and
// folds the batch statistics into the running buffers; eval mode is an affine
// map through the frozen running statistics. Buffers are plain tensors that
// never receive gradients.
template <class S>
Tensor<S> batch_norm(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, Tensor<S>& running_mean,
                     Tensor<S>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5) {
  const int64_t c = x.dim(0);
  const int64_t n = x.numel() / c;
  ALCA_THROW_IF(gamma.numel() != c || beta.numel() != c ||
                    running_mean.numel() != c || running_var.numel() != c,
                ErrorKind::Runtime, "batch_norm: parameter size mismatch");
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  auto yd = y.raw();

  std::vector<S> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  if (training) {
    auto rm = running_mean.raw();
    auto rv = running_var.raw();
    for (int64_t ch = 0; ch < c; ++ch) {
      const S* row = xd.data() + ch * n;
      S mu = S(0);
      for (int64_t i = 0; i < n; ++i) mu += row[i];
      mu /= static_cast<S>(n);
      S var = S(0);
      for (int64_t i = 0; i < n; ++i) {
        const S d = row[i] - mu;
        var += d * d;
      }
      var /= static_cast<S>(n);
      mean[static_cast<size_t>(ch)] = mu;
      inv_std[static_cast<size_t>(ch)] = S(1) / std::sqrt(var + static_cast<S>(eps));
      rm[ch] = static_cast<S>(1.0 - momentum) * rm[ch] + static_cast<S>(momentum) * mu;
      rv[ch] = static_cast<S>(1.0 - momentum) * rv[ch] + static_cast<S>(momentum) * var;
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = rm[ch];
      inv_std[static_cast<size_t>(ch)] =
          S(1) / std::sqrt(rv[ch] + static_cast<S>(eps));
    }
  }
  for (int64_t ch = 0; ch < c; ++ch) {
    const S mu = mean[static_cast<size_t>(ch)];
    const S is = inv_std[static_cast<size_t>(ch)];
    const S g = gd[ch], b = bd[ch];
    const S* row = xd.data() + ch * n;
    S* out = yd.data() + ch * n;
    for (int64_t i = 0; i < n; ++i) out[i] = g * (row[i] - mu) * is + b;
  }
  detail::check_finite(y, "batch_norm");
  if (detail::wants_grad(tape, {&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    tape->record({x, gamma, beta}, y,
                 [x, gamma, beta, y, mean, inv_std, c, n, training]() mutable {
      const auto xd2 = x.data();
      const auto gd2 = gamma.data();
      auto gy = y.grad();
      const bool nx = x.requires_grad();
      const bool ng = gamma.requires_grad();
      const bool nb = beta.requires_grad();
      for (int64_t ch = 0; ch < c; ++ch) {
        const S mu = mean[static_cast<size_t>(ch)];
        const S is = inv_std[static_cast<size_t>(ch)];
        const S* row = xd2.data() + ch * n;
        const S* gr = gy.data() + ch * n;
        S sum_gy = S(0), sum_gy_xhat = S(0);
        for (int64_t i = 0; i < n; ++i) {
          sum_gy += gr[i];
          sum_gy_xhat += gr[i] * (row[i] - mu) * is;
        }
        if (ng) gamma.grad()[ch] += sum_gy_xhat;
        if (nb) beta.grad()[ch] += sum_gy;
        if (nx) {
          S* gxr = x.grad().data() + ch * n;
          const S g = gd2[ch];
          if (training) {
            const S inv_n = S(1) / static_cast<S>(n);
            for (int64_t i = 0; i < n; ++i) {
              const S xhat = (row[i] - mu) * is;
              gxr[i] += g * is * (gr[i] - sum_gy * inv_n - xhat * sum_gy_xhat * inv_n);
            }
          } else {
            for (int64_t i = 0; i < n; ++i) gxr[i] += g * is * gr[i];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling)
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> dropout(Tape<S>* tape, const Tensor<S>& x, double rate,
                  std::mt19937_64& rng, bool training) {
  ALCA_THROW_IF(rate < 0.0 || rate >= 1.0, ErrorKind::Config,
                "dropout: rate must be in [0, 1), got ", rate);
  if (!training || rate == 0.0) return x;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<S> mask(static_cast<size_t>(x.numel()));
  for (auto& m : mask) m = dist(rng) < rate ? S(0) : keep_scale;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const auto xd = x.data();
  auto yd = y.raw();
  for (size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] * mask[i];
  if (detail::wants_grad(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [x, y, mask = std::move(mask)]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return y;
}

}  // namespace alca

#endif
