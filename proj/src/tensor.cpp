#include "valr/tensor.hpp"

#include <cmath>
#include <cstring>

#include "valr/kernels.hpp"

namespace valr {

namespace {

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

int64_t shape_size(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) fail("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

void require_2d(const Tensor& a, const char* who) {
    if (a.shape.size() != 2) fail(std::string(who) + ": expected 2-D tensor, got " + shape_str(a.shape));
}

std::vector<int> node_inputs(std::initializer_list<int> nodes) {
    std::vector<int> v;
    for (int n : nodes)
        if (n >= 0) v.push_back(n);
    return v;
}

bool any_on_tape(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->node >= 0) return true;
    return false;
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

// ---- Tensor ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    int64_t n = shape_size(shape);
    t.shape = std::move(shape);
    t.store = std::make_shared<std::vector<double>>(size_t(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.store->begin(), t.store->end(), v);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    int64_t n = shape_size(shape);
    if (int64_t(data.size()) != n)
        fail("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.store = std::make_shared<std::vector<double>>(std::move(data));
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

int64_t Tensor::size() const { return store ? int64_t(store->size()) : 0; }

int Tensor::rows() const {
    require_2d(*this, "rows");
    return shape[0];
}

int Tensor::cols() const {
    require_2d(*this, "cols");
    return shape[1];
}

double Tensor::item() const {
    if (size() != 1) fail("item() on tensor of shape " + shape_str(shape));
    return (*store)[0];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.node = -1;
    return t;
}

Tensor Tensor::deep_copy() const {
    Tensor t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<double>>(*store);
    return t;
}

// ---- Tape ------------------------------------------------------------

int Tape::leaf(int64_t size) {
    nodes_.push_back(Node{"leaf", size, {}, nullptr});
    return int(nodes_.size()) - 1;
}

int Tape::push(const char* tag, int64_t size, std::vector<int> inputs, BackwardFn bwd) {
    int id = int(nodes_.size());
    for (int in : inputs)
        if (in < 0 || in >= id) fail(std::string("tape: input handle out of order for op ") + tag);
    nodes_.push_back(Node{tag, size, std::move(inputs), std::move(bwd)});
    return id;
}

std::vector<double>& Tape::grad_buf(int node) {
    if (node < 0 || size_t(node) >= nodes_.size()) fail("tape: bad node handle");
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    auto& g = grads_[size_t(node)];
    if (g.empty()) g.assign(size_t(nodes_[size_t(node)].size), 0.0);
    return g;
}

bool Tape::has_grad(int node) const {
    return node >= 0 && size_t(node) < grads_.size() && !grads_[size_t(node)].empty();
}

const std::vector<double>& Tape::grad(int node) const {
    if (!has_grad(node)) fail("tape: no gradient recorded for node");
    return grads_[size_t(node)];
}

void Tape::backward(int root, double seed) {
    if (root < 0 || size_t(root) >= nodes_.size()) fail("tape: backward on invalid node");
    if (nodes_[size_t(root)].size != 1) fail("tape: backward root must be scalar");
    grad_buf(root)[0] += seed;
    for (int id = root; id >= 0; --id) {
        if (!has_grad(id)) continue;
        const Node& n = nodes_[size_t(id)];
        if (n.bwd) n.bwd(*this, grads_[size_t(id)]);
    }
}

// ---- ops ---------------------------------------------------------------

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.shape[1] != b.shape[0])
        fail("matmul: inner dimensions differ, " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    kernels::active().matmul(a.data(), b.data(), out.mut(), m, k, n);
    if (any_on_tape({&a, &b})) {
        auto as = a.store, bs = b.store;
        int an = a.node, bn = b.node;
        out.node = t.push("matmul", out.size(), node_inputs({an, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              const auto& K = kernels::active();
                              if (an >= 0) {
                                  // dA += G * B^T
                                  std::vector<double> bt(size_t(k) * n);
                                  for (int r = 0; r < k; ++r)
                                      for (int c = 0; c < n; ++c)
                                          bt[size_t(c) * k + r] = (*bs)[size_t(r) * n + c];
                                  K.matmul_acc(g.data(), bt.data(), tp.grad_buf(an).data(), m, n, k);
                              }
                              if (bn >= 0) {
                                  // dB += A^T * G
                                  std::vector<double> at(size_t(m) * k);
                                  for (int r = 0; r < m; ++r)
                                      for (int c = 0; c < k; ++c)
                                          at[size_t(c) * m + r] = (*as)[size_t(r) * k + c];
                                  K.matmul_acc(at.data(), g.data(), tp.grad_buf(bn).data(), k, m, n);
                              }
                          });
    }
    return out;
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        fail("add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = Tensor::zeros(a.shape);
    kernels::active().add(a.data(), b.data(), out.mut(), a.size());
    if (any_on_tape({&a, &b})) {
        int an = a.node, bn = b.node;
        out.node = t.push("add", out.size(), node_inputs({an, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              if (an >= 0) kernels::active().axpy(1.0, g.data(), tp.grad_buf(an).data(), int64_t(g.size()));
                              if (bn >= 0) kernels::active().axpy(1.0, g.data(), tp.grad_buf(bn).data(), int64_t(g.size()));
                          });
    }
    return out;
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        fail("sub: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = Tensor::zeros(a.shape);
    kernels::active().sub(a.data(), b.data(), out.mut(), a.size());
    if (any_on_tape({&a, &b})) {
        int an = a.node, bn = b.node;
        out.node = t.push("sub", out.size(), node_inputs({an, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              if (an >= 0) kernels::active().axpy(1.0, g.data(), tp.grad_buf(an).data(), int64_t(g.size()));
                              if (bn >= 0) kernels::active().axpy(-1.0, g.data(), tp.grad_buf(bn).data(), int64_t(g.size()));
                          });
    }
    return out;
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        fail("mul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = Tensor::zeros(a.shape);
    kernels::active().mul(a.data(), b.data(), out.mut(), a.size());
    if (any_on_tape({&a, &b})) {
        auto as = a.store, bs = b.store;
        int an = a.node, bn = b.node;
        out.node = t.push("mul", out.size(), node_inputs({an, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              int64_t n = int64_t(g.size());
                              if (an >= 0) {
                                  auto& ga = tp.grad_buf(an);
                                  for (int64_t i = 0; i < n; ++i) ga[size_t(i)] += g[size_t(i)] * (*bs)[size_t(i)];
                              }
                              if (bn >= 0) {
                                  auto& gb = tp.grad_buf(bn);
                                  for (int64_t i = 0; i < n; ++i) gb[size_t(i)] += g[size_t(i)] * (*as)[size_t(i)];
                              }
                          });
    }
    return out;
}

Tensor scale(Tape& t, const Tensor& a, double alpha) {
    Tensor out = Tensor::zeros(a.shape);
    kernels::active().scale(a.data(), alpha, out.mut(), a.size());
    if (a.node >= 0) {
        int an = a.node;
        out.node = t.push("scale", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              kernels::active().axpy(alpha, g.data(), tp.grad_buf(an).data(), int64_t(g.size()));
                          });
    }
    return out;
}

Tensor add_row_broadcast(Tape& t, const Tensor& a, const Tensor& row) {
    require_2d(a, "add_row_broadcast");
    if (row.shape.size() != 1 || row.shape[0] != a.shape[1])
        fail("add_row_broadcast: row shape " + shape_str(row.shape) + " does not match " + shape_str(a.shape));
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros(a.shape);
    for (int i = 0; i < m; ++i)
        kernels::active().add(a.data() + int64_t(i) * n, row.data(), out.mut() + int64_t(i) * n, n);
    if (any_on_tape({&a, &row})) {
        int an = a.node, rn = row.node;
        out.node = t.push("add_row_broadcast", out.size(), node_inputs({an, rn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              if (an >= 0) kernels::active().axpy(1.0, g.data(), tp.grad_buf(an).data(), int64_t(g.size()));
                              if (rn >= 0) {
                                  auto& gr = tp.grad_buf(rn);
                                  for (int i = 0; i < m; ++i)
                                      kernels::active().axpy(1.0, g.data() + int64_t(i) * n, gr.data(), n);
                              }
                          });
    }
    return out;
}

Tensor transpose(Tape& t, const Tensor& a) {
    require_2d(a, "transpose");
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.mut()[size_t(j) * m + i] = a.data()[size_t(i) * n + j];
    if (a.node >= 0) {
        int an = a.node;
        out.node = t.push("transpose", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (int j = 0; j < n; ++j)
                                  for (int i = 0; i < m; ++i)
                                      ga[size_t(i) * n + j] += g[size_t(j) * m + i];
                          });
    }
    return out;
}

Tensor reshape(Tape& t, const Tensor& a, std::vector<int> shape) {
    if (shape_size(shape) != a.size())
        fail("reshape: element count mismatch " + shape_str(a.shape) + " -> " + shape_str(shape));
    Tensor out = a;  // shares the buffer
    out.shape = std::move(shape);
    out.node = -1;
    if (a.node >= 0) {
        int an = a.node;
        out.node = t.push("reshape", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              kernels::active().axpy(1.0, g.data(), tp.grad_buf(an).data(), int64_t(g.size()));
                          });
    }
    return out;
}

Tensor slice_rows(Tape& t, const Tensor& a, int r0, int r1) {
    require_2d(a, "slice_rows");
    const int m = a.shape[0], n = a.shape[1];
    if (r0 < 0 || r1 > m || r0 >= r1) fail("slice_rows: bad range on " + shape_str(a.shape));
    Tensor out = Tensor::zeros({r1 - r0, n});
    std::memcpy(out.mut(), a.data() + int64_t(r0) * n, sizeof(double) * size_t(r1 - r0) * n);
    if (a.node >= 0) {
        int an = a.node;
        out.node = t.push("slice_rows", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              kernels::active().axpy(1.0, g.data(),
                                                     tp.grad_buf(an).data() + int64_t(r0) * n,
                                                     int64_t(g.size()));
                          });
    }
    return out;
}

Tensor slice_cols(Tape& t, const Tensor& a, int c0, int c1) {
    require_2d(a, "slice_cols");
    const int m = a.shape[0], n = a.shape[1];
    if (c0 < 0 || c1 > n || c0 >= c1) fail("slice_cols: bad range on " + shape_str(a.shape));
    const int w = c1 - c0;
    Tensor out = Tensor::zeros({m, w});
    for (int i = 0; i < m; ++i)
        std::memcpy(out.mut() + int64_t(i) * w, a.data() + int64_t(i) * n + c0, sizeof(double) * size_t(w));
    if (a.node >= 0) {
        int an = a.node;
        out.node = t.push("slice_cols", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (int i = 0; i < m; ++i)
                                  kernels::active().axpy(1.0, g.data() + int64_t(i) * w,
                                                         ga.data() + int64_t(i) * n + c0, w);
                          });
    }
    return out;
}

Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_rows: no parts");
    const int n = parts[0].cols();
    int m = 0;
    bool on_tape = false;
    for (const auto& p : parts) {
        if (p.cols() != n) fail("concat_rows: column mismatch");
        m += p.rows();
        on_tape = on_tape || p.node >= 0;
    }
    Tensor out = Tensor::zeros({m, n});
    int64_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(out.mut() + off, p.data(), sizeof(double) * size_t(p.size()));
        off += p.size();
    }
    if (on_tape) {
        std::vector<int> pn;
        std::vector<int64_t> offs;
        std::vector<int64_t> sizes;
        std::vector<int> ins;
        int64_t o = 0;
        for (const auto& p : parts) {
            pn.push_back(p.node);
            offs.push_back(o);
            sizes.push_back(p.size());
            o += p.size();
            if (p.node >= 0) ins.push_back(p.node);
        }
        out.node = t.push("concat_rows", out.size(), std::move(ins),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (size_t i = 0; i < pn.size(); ++i)
                                  if (pn[i] >= 0)
                                      kernels::active().axpy(1.0, g.data() + offs[i],
                                                             tp.grad_buf(pn[i]).data(), sizes[i]);
                          });
    }
    return out;
}

Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_cols: no parts");
    const int m = parts[0].rows();
    int n = 0;
    bool on_tape = false;
    for (const auto& p : parts) {
        if (p.rows() != m) fail("concat_cols: row mismatch");
        n += p.cols();
        on_tape = on_tape || p.node >= 0;
    }
    Tensor out = Tensor::zeros({m, n});
    int c = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            std::memcpy(out.mut() + int64_t(i) * n + c, p.data() + int64_t(i) * w,
                        sizeof(double) * size_t(w));
        c += w;
    }
    if (on_tape) {
        std::vector<int> pn;
        std::vector<int> coffs, widths;
        std::vector<int> ins;
        int cc = 0;
        for (const auto& p : parts) {
            pn.push_back(p.node);
            coffs.push_back(cc);
            widths.push_back(p.cols());
            cc += p.cols();
            if (p.node >= 0) ins.push_back(p.node);
        }
        out.node = t.push("concat_cols", out.size(), std::move(ins),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (size_t pi = 0; pi < pn.size(); ++pi) {
                                  if (pn[pi] < 0) continue;
                                  auto& gp = tp.grad_buf(pn[pi]);
                                  const int w = widths[pi];
                                  for (int i = 0; i < m; ++i)
                                      kernels::active().axpy(1.0, g.data() + int64_t(i) * n + coffs[pi],
                                                             gp.data() + int64_t(i) * w, w);
                              }
                          });
    }
    return out;
}

Tensor gather_rows(Tape& t, const Tensor& a, const std::vector<int>& idx) {
    require_2d(a, "gather_rows");
    const int m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({int(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= m)
            fail("gather_rows: index " + std::to_string(idx[i]) + " out of range [0," + std::to_string(m) + ")");
        std::memcpy(out.mut() + int64_t(i) * n, a.data() + int64_t(idx[i]) * n, sizeof(double) * size_t(n));
    }
    if (a.node >= 0) {
        int an = a.node;
        auto ids = idx;
        out.node = t.push("gather_rows", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (size_t i = 0; i < ids.size(); ++i)
                                  kernels::active().axpy(1.0, g.data() + int64_t(i) * n,
                                                         ga.data() + int64_t(ids[i]) * n, n);
                          });
    }
    return out;
}

Tensor embed_rows(Tape& t, const Tensor& table, const std::vector<int>& ids) {
    return gather_rows(t, table, ids);
}

Tensor sum_all(Tape& t, const Tensor& a) {
    double s = 0.0;
    const double* p = a.data();
    for (int64_t i = 0; i < a.size(); ++i) s += p[size_t(i)];
    Tensor out = Tensor::scalar(s);
    if (a.node >= 0) {
        int an = a.node;
        int64_t n = a.size();
        out.node = t.push("sum_all", 1, {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (int64_t i = 0; i < n; ++i) ga[size_t(i)] += g[0];
                          });
    }
    return out;
}

Tensor mean_all(Tape& t, const Tensor& a) {
    return scale(t, sum_all(t, a), 1.0 / double(a.size()));
}

Tensor softmax_rows(Tape& t, const Tensor& a) {
    require_2d(a, "softmax_rows");
    const int m = a.shape[0], n = a.shape[1];
    for (int64_t i = 0; i < a.size(); ++i)
        if (std::isnan(a.data()[size_t(i)])) fail("softmax_rows: NaN input");
    Tensor out = Tensor::zeros(a.shape);
    for (int i = 0; i < m; ++i) {
        const double* x = a.data() + int64_t(i) * n;
        double* y = out.mut() + int64_t(i) * n;
        double mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < n; ++j) y[j] /= z;
    }
    if (a.node >= 0) {
        int an = a.node;
        auto ys = out.store;
        out.node = t.push("softmax_rows", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (int i = 0; i < m; ++i) {
                                  const double* y = ys->data() + int64_t(i) * n;
                                  const double* gr = g.data() + int64_t(i) * n;
                                  double dot = 0.0;
                                  for (int j = 0; j < n; ++j) dot += gr[j] * y[j];
                                  double* gx = ga.data() + int64_t(i) * n;
                                  for (int j = 0; j < n; ++j) gx[j] += y[j] * (gr[j] - dot);
                              }
                          });
    }
    return out;
}

Tensor gelu(Tape& t, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape);
    const double* x = a.data();
    double* y = out.mut();
    for (int64_t i = 0; i < a.size(); ++i)
        y[size_t(i)] = 0.5 * x[size_t(i)] * (1.0 + std::erf(x[size_t(i)] * kInvSqrt2));
    if (a.node >= 0) {
        int an = a.node;
        auto xs = a.store;
        out.node = t.push("gelu", out.size(), {an},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& ga = tp.grad_buf(an);
                              for (size_t i = 0; i < g.size(); ++i) {
                                  double v = (*xs)[i];
                                  double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                                  double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                                  ga[i] += g[i] * (cdf + v * pdf);
                              }
                          });
    }
    return out;
}

Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm");
    const int m = x.shape[0], n = x.shape[1];
    if (gain.shape != std::vector<int>{n} || bias.shape != std::vector<int>{n})
        fail("layer_norm: gain/bias must have shape [" + std::to_string(n) + "]");
    Tensor out = Tensor::zeros(x.shape);
    auto xhat = std::make_shared<std::vector<double>>(size_t(m) * n);
    auto inv_sigma = std::make_shared<std::vector<double>>(size_t(m));
    for (int i = 0; i < m; ++i) {
        const double* xr = x.data() + int64_t(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xr[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = xr[j] - mu;
            var += d * d;
        }
        var /= n;
        double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[size_t(i)] = inv;
        double* h = xhat->data() + int64_t(i) * n;
        double* y = out.mut() + int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            h[j] = (xr[j] - mu) * inv;
            y[j] = h[j] * gain.data()[j] + bias.data()[j];
        }
    }
    if (any_on_tape({&x, &gain, &bias})) {
        int xn = x.node, gn = gain.node, bn = bias.node;
        auto gs = gain.store;
        out.node = t.push("layer_norm", out.size(), node_inputs({xn, gn, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (int i = 0; i < m; ++i) {
                                  const double* gr = g.data() + int64_t(i) * n;
                                  const double* h = xhat->data() + int64_t(i) * n;
                                  if (gn >= 0) {
                                      auto& gg = tp.grad_buf(gn);
                                      for (int j = 0; j < n; ++j) gg[size_t(j)] += gr[j] * h[j];
                                  }
                                  if (bn >= 0) {
                                      auto& gb = tp.grad_buf(bn);
                                      for (int j = 0; j < n; ++j) gb[size_t(j)] += gr[j];
                                  }
                                  if (xn >= 0) {
                                      double m1 = 0.0, m2 = 0.0;
                                      for (int j = 0; j < n; ++j) {
                                          double dh = gr[j] * (*gs)[size_t(j)];
                                          m1 += dh;
                                          m2 += dh * h[j];
                                      }
                                      m1 /= n;
                                      m2 /= n;
                                      double inv = (*inv_sigma)[size_t(i)];
                                      auto& gx = tp.grad_buf(xn);
                                      double* gxr = gx.data() + int64_t(i) * n;
                                      for (int j = 0; j < n; ++j) {
                                          double dh = gr[j] * (*gs)[size_t(j)];
                                          gxr[j] += inv * (dh - m1 - h[j] * m2);
                                      }
                                  }
                              }
                          });
    }
    return out;
}

Tensor cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask) {
    require_2d(logits, "cross_entropy");
    const int T = logits.shape[0], V = logits.shape[1];
    if (int(targets.size()) != T || int(mask.size()) != T)
        fail("cross_entropy: targets/mask length must equal " + std::to_string(T));
    int nm = 0;
    for (int i = 0; i < T; ++i) {
        if (!mask[size_t(i)]) continue;
        ++nm;
        if (targets[size_t(i)] < 0 || targets[size_t(i)] >= V)
            fail("cross_entropy: target " + std::to_string(targets[size_t(i)]) + " outside [0," + std::to_string(V) + ")");
    }
    if (nm == 0) fail("cross_entropy: empty loss, all positions masked out");

    auto probs = std::make_shared<std::vector<double>>();
    double loss = 0.0;
    if (logits.node >= 0) probs->assign(size_t(T) * V, 0.0);
    for (int i = 0; i < T; ++i) {
        if (!mask[size_t(i)]) continue;
        const double* l = logits.data() + int64_t(i) * V;
        double mx = l[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, l[j]);
        double z = 0.0;
        for (int j = 0; j < V; ++j) z += std::exp(l[j] - mx);
        double lse = mx + std::log(z);
        loss += lse - l[targets[size_t(i)]];
        if (logits.node >= 0) {
            double* pr = probs->data() + int64_t(i) * V;
            for (int j = 0; j < V; ++j) pr[j] = std::exp(l[j] - lse);
        }
    }
    loss /= nm;
    Tensor out = Tensor::scalar(loss);
    if (logits.node >= 0) {
        int ln = logits.node;
        auto tg = targets;
        auto mk = mask;
        out.node = t.push("cross_entropy", 1, {ln},
                          [=](Tape& tp, const std::vector<double>& g) {
                              auto& gl = tp.grad_buf(ln);
                              const double s = g[0] / nm;
                              for (int i = 0; i < T; ++i) {
                                  if (!mk[size_t(i)]) continue;
                                  const double* pr = probs->data() + int64_t(i) * V;
                                  double* gr = gl.data() + int64_t(i) * V;
                                  for (int j = 0; j < V; ++j) gr[j] += s * pr[j];
                                  gr[tg[size_t(i)]] -= s;
                              }
                          });
    }
    return out;
}

Tensor cosine_sim(Tape& t, const Tensor& u, const Tensor& v, double eps) {
    if (u.shape.size() != 1 || v.shape.size() != 1 || u.shape != v.shape)
        fail("cosine_sim: expected equal-length vectors, got " + shape_str(u.shape) + " and " + shape_str(v.shape));
    const int n = u.shape[0];
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += u.data()[i] * v.data()[i];
        nu2 += u.data()[i] * u.data()[i];
        nv2 += v.data()[i] * v.data()[i];
    }
    double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    if (nu <= eps || nv <= eps) fail("cosine_sim: degenerate vector with norm below epsilon");
    double s = dot / (nu * nv);
    Tensor out = Tensor::scalar(s);
    if (any_on_tape({&u, &v})) {
        int un = u.node, vn = v.node;
        auto us = u.store, vs = v.store;
        out.node = t.push("cosine_sim", 1, node_inputs({un, vn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              double inv = 1.0 / (nu * nv);
                              if (un >= 0) {
                                  auto& gu = tp.grad_buf(un);
                                  for (int i = 0; i < n; ++i)
                                      gu[size_t(i)] += g[0] * ((*vs)[size_t(i)] * inv - s * (*us)[size_t(i)] / nu2);
                              }
                              if (vn >= 0) {
                                  auto& gv = tp.grad_buf(vn);
                                  for (int i = 0; i < n; ++i)
                                      gv[size_t(i)] += g[0] * ((*us)[size_t(i)] * inv - s * (*vs)[size_t(i)] / nv2);
                              }
                          });
    }
    return out;
}

Tensor cosine_rows_floored(Tape& t, const Tensor& a, const Tensor& b, double eps) {
    require_2d(a, "cosine_rows_floored");
    if (a.shape != b.shape)
        fail("cosine_rows_floored: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const int P = a.shape[0], D = a.shape[1];
    Tensor out = Tensor::zeros({P});
    auto dots = std::make_shared<std::vector<double>>(size_t(P) * 3);
    for (int p = 0; p < P; ++p) {
        const double* ur = a.data() + int64_t(p) * D;
        const double* vr = b.data() + int64_t(p) * D;
        double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
        for (int j = 0; j < D; ++j) {
            dot += ur[j] * vr[j];
            nu2 += ur[j] * ur[j];
            nv2 += vr[j] * vr[j];
        }
        (*dots)[size_t(p) * 3] = dot;
        (*dots)[size_t(p) * 3 + 1] = nu2;
        (*dots)[size_t(p) * 3 + 2] = nv2;
        double denom = std::sqrt(nu2) * std::sqrt(nv2);
        out.mut()[p] = denom > eps ? dot / denom : 0.0;
    }
    if (any_on_tape({&a, &b})) {
        int an = a.node, bn = b.node;
        auto as = a.store, bs = b.store;
        auto ss = out.store;
        out.node = t.push("cosine_rows", out.size(), node_inputs({an, bn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (int p = 0; p < P; ++p) {
                                  double nu2 = (*dots)[size_t(p) * 3 + 1];
                                  double nv2 = (*dots)[size_t(p) * 3 + 2];
                                  double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
                                  if (nu * nv <= eps) continue;  // floored row: zero gradient
                                  double s = (*ss)[size_t(p)];
                                  double inv = 1.0 / (nu * nv);
                                  const double* ur = as->data() + int64_t(p) * D;
                                  const double* vr = bs->data() + int64_t(p) * D;
                                  if (an >= 0) {
                                      double* gu = tp.grad_buf(an).data() + int64_t(p) * D;
                                      for (int j = 0; j < D; ++j)
                                          gu[j] += g[size_t(p)] * (vr[j] * inv - s * ur[j] / nu2);
                                  }
                                  if (bn >= 0) {
                                      double* gv = tp.grad_buf(bn).data() + int64_t(p) * D;
                                      for (int j = 0; j < D; ++j)
                                          gv[j] += g[size_t(p)] * (ur[j] * inv - s * vr[j] / nv2);
                                  }
                              }
                          });
    }
    return out;
}

Tensor attn_scores(Tape& t, const Tensor& q, const Tensor& k, int heads, double sc) {
    require_2d(q, "attn_scores");
    require_2d(k, "attn_scores");
    const int m = q.shape[0], d = q.shape[1], tt = k.shape[0];
    if (k.shape[1] != d) fail("attn_scores: q/k width mismatch");
    if (d % heads != 0) fail("attn_scores: width not divisible by head count");
    const int dh = d / heads;
    Tensor out = Tensor::zeros({m * heads, tt});
    for (int i = 0; i < m; ++i)
        for (int h = 0; h < heads; ++h) {
            const double* qr = q.data() + int64_t(i) * d + h * dh;
            double* orow = out.mut() + int64_t(i * heads + h) * tt;
            for (int j = 0; j < tt; ++j) {
                const double* kr = k.data() + int64_t(j) * d + h * dh;
                double s = 0.0;
                for (int c = 0; c < dh; ++c) s += qr[c] * kr[c];
                orow[j] = s * sc;
            }
        }
    if (any_on_tape({&q, &k})) {
        int qn = q.node, kn = k.node;
        auto qs = q.store, ks = k.store;
        out.node = t.push("attn_scores", out.size(), node_inputs({qn, kn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (int i = 0; i < m; ++i)
                                  for (int h = 0; h < heads; ++h) {
                                      const double* gr = g.data() + int64_t(i * heads + h) * tt;
                                      if (qn >= 0) {
                                          double* gq = tp.grad_buf(qn).data() + int64_t(i) * d + h * dh;
                                          for (int j = 0; j < tt; ++j) {
                                              const double* kr = ks->data() + int64_t(j) * d + h * dh;
                                              const double gv = gr[j] * sc;
                                              for (int c = 0; c < dh; ++c) gq[c] += gv * kr[c];
                                          }
                                      }
                                      if (kn >= 0) {
                                          const double* qr = qs->data() + int64_t(i) * d + h * dh;
                                          auto& gkb = tp.grad_buf(kn);
                                          for (int j = 0; j < tt; ++j) {
                                              double* gk = gkb.data() + int64_t(j) * d + h * dh;
                                              const double gv = gr[j] * sc;
                                              for (int c = 0; c < dh; ++c) gk[c] += gv * qr[c];
                                          }
                                      }
                                  }
                          });
    }
    return out;
}

Tensor attn_mix(Tape& t, const Tensor& p, const Tensor& v, int heads) {
    require_2d(p, "attn_mix");
    require_2d(v, "attn_mix");
    const int tt = v.shape[0], d = v.shape[1];
    if (p.shape[1] != tt) fail("attn_mix: probs width must equal key count");
    if (p.shape[0] % heads != 0) fail("attn_mix: probs rows not divisible by head count");
    if (d % heads != 0) fail("attn_mix: value width not divisible by head count");
    const int m = p.shape[0] / heads;
    const int dh = d / heads;
    Tensor out = Tensor::zeros({m, d});
    for (int i = 0; i < m; ++i)
        for (int h = 0; h < heads; ++h) {
            const double* pr = p.data() + int64_t(i * heads + h) * tt;
            double* orow = out.mut() + int64_t(i) * d + h * dh;
            for (int j = 0; j < tt; ++j) {
                const double* vr = v.data() + int64_t(j) * d + h * dh;
                const double pv = pr[j];
                for (int c = 0; c < dh; ++c) orow[c] += pv * vr[c];
            }
        }
    if (any_on_tape({&p, &v})) {
        int pn = p.node, vn = v.node;
        auto ps = p.store, vs = v.store;
        out.node = t.push("attn_mix", out.size(), node_inputs({pn, vn}),
                          [=](Tape& tp, const std::vector<double>& g) {
                              for (int i = 0; i < m; ++i)
                                  for (int h = 0; h < heads; ++h) {
                                      const double* gr = g.data() + int64_t(i) * d + h * dh;
                                      if (pn >= 0) {
                                          double* gp = tp.grad_buf(pn).data() + int64_t(i * heads + h) * tt;
                                          for (int j = 0; j < tt; ++j) {
                                              const double* vr = vs->data() + int64_t(j) * d + h * dh;
                                              double s = 0.0;
                                              for (int c = 0; c < dh; ++c) s += gr[c] * vr[c];
                                              gp[j] += s;
                                          }
                                      }
                                      if (vn >= 0) {
                                          const double* pr = ps->data() + int64_t(i * heads + h) * tt;
                                          auto& gvb = tp.grad_buf(vn);
                                          for (int j = 0; j < tt; ++j) {
                                              double* gv = gvb.data() + int64_t(j) * d + h * dh;
                                              const double pv = pr[j];
                                              for (int c = 0; c < dh; ++c) gv[c] += pv * gr[c];
                                          }
                                      }
                                  }
                          });
    }
    return out;
}

Tensor causal_mask(int p0, int m, int t_total, int heads) {
    Tensor mask = Tensor::zeros({m * heads, t_total});
    for (int i = 0; i < m; ++i) {
        const int limit = p0 + i;  // may attend to absolute positions <= limit
        for (int h = 0; h < heads; ++h) {
            double* row = mask.mut() + int64_t(i * heads + h) * t_total;
            for (int j = limit + 1; j < t_total; ++j) row[j] = -1e30;
        }
    }
    return mask;
}

}  // namespace valr
