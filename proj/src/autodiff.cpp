#include "smorm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "smorm/error.hpp"
#include "smorm/kernels.hpp"

namespace smorm::ad {

const Mat& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw NotScalar("Var::scalar on a non-1x1 node");
  return v(0, 0);
}

Var Tape::leaf(Mat value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Mat{}, requires_grad, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Mat value, std::vector<std::size_t> parents, BackwardFn backward) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::size_t p) { return nodes_[p].requires_grad; });
  nodes_.push_back(Node{std::move(value), Mat{}, needs, needs ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Mat Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  const Mat& v = nodes_[loss.id].value;
  if (v.rows() != 1 || v.cols() != 1) throw NotScalar("backward: loss node is not 1x1");
  for (auto& n : nodes_) n.grad = Mat{};
  accumulate(loss.id, Mat(1, 1, 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    const Mat g = n.grad;
    n.backward(*this, i, g);
  }
}

namespace {

struct Shape {
  std::size_t rows;
  std::size_t cols;
};

Shape broadcast_shape(const Mat& a, const Mat& b, const char* op) {
  const std::size_t r = std::max(a.rows(), b.rows());
  const std::size_t c = std::max(a.cols(), b.cols());
  const bool ok = (a.rows() == r || a.rows() == 1) && (b.rows() == r || b.rows() == 1) &&
                  (a.cols() == c || a.cols() == 1) && (b.cols() == c || b.cols() == 1);
  if (!ok) throw DimensionMismatch(std::string(op) + ": shapes do not broadcast");
  return {r, c};
}

inline double at_b(const Mat& m, std::size_t i, std::size_t j) {
  return m(m.rows() == 1 ? 0 : i, m.cols() == 1 ? 0 : j);
}

// Sum a full-shape gradient down to the (possibly broadcast) operand shape.
Mat reduce_to(const Mat& g, const Mat& like) {
  if (g.same_shape(like)) return g;
  Mat out(like.rows(), like.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      out(like.rows() == 1 ? 0 : i, like.cols() == 1 ? 0 : j) += g(i, j);
  return out;
}

template <class Fn>
Mat elementwise(const Mat& a, const Mat& b, Shape s, Fn fn) {
  Mat out(s.rows, s.cols);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) out(i, j) = fn(at_b(a, i, j), at_b(b, i, j));
  return out;
}

template <class Fn>
Mat unary(const Mat& a, Fn fn) {
  Mat out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

inline double stable_softplus(double x) { return std::max(0.0, x) + std::log1p(std::exp(-std::abs(x))); }

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.push(kernels::matmul(a.value(), b.value()), {a.id, b.id},
                [ai = a.id, bi = b.id](Tape& tp, std::size_t, const Mat& g) {
                  if (tp.requires_grad(ai)) tp.accumulate(ai, matmul_nt(g, tp.value(bi)));
                  if (tp.requires_grad(bi)) tp.accumulate(bi, matmul_tn(tp.value(ai), g));
                });
}

Var add(Var a, Var b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "add");
  return a.tape->push(elementwise(a.value(), b.value(), s, [](double x, double y) { return x + y; }),
                      {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t, const Mat& g) {
                        tp.accumulate(ai, reduce_to(g, tp.value(ai)));
                        tp.accumulate(bi, reduce_to(g, tp.value(bi)));
                      });
}

Var sub(Var a, Var b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "sub");
  return a.tape->push(elementwise(a.value(), b.value(), s, [](double x, double y) { return x - y; }),
                      {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t, const Mat& g) {
                        tp.accumulate(ai, reduce_to(g, tp.value(ai)));
                        if (tp.requires_grad(bi)) tp.accumulate(bi, reduce_to(g * -1.0, tp.value(bi)));
                      });
}

Var mul(Var a, Var b) {
  const Shape s = broadcast_shape(a.value(), b.value(), "mul");
  return a.tape->push(
      elementwise(a.value(), b.value(), s, [](double x, double y) { return x * y; }), {a.id, b.id},
      [ai = a.id, bi = b.id](Tape& tp, std::size_t, const Mat& g) {
        const Mat& av = tp.value(ai);
        const Mat& bv = tp.value(bi);
        const Shape sh{g.rows(), g.cols()};
        if (tp.requires_grad(ai))
          tp.accumulate(ai, reduce_to(elementwise(g, bv, sh, [](double x, double y) { return x * y; }), av));
        if (tp.requires_grad(bi))
          tp.accumulate(bi, reduce_to(elementwise(g, av, sh, [](double x, double y) { return x * y; }), bv));
      });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, {a.id},
                      [ai = a.id, s](Tape& tp, std::size_t, const Mat& g) { tp.accumulate(ai, g * s); });
}

Var add_scalar(Var a, double s) {
  return a.tape->push(unary(a.value(), [s](double x) { return x + s; }), {a.id},
                      [ai = a.id](Tape& tp, std::size_t, const Mat& g) { tp.accumulate(ai, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  return a.tape->push(unary(a.value(), [](double x) { return std::tanh(x); }), {a.id},
                      [ai = a.id](Tape& tp, std::size_t self, const Mat& g) {
                        const Mat& y = tp.value(self);
                        Mat d(g.rows(), g.cols());
                        for (std::size_t i = 0; i < d.size(); ++i)
                          d.data()[i] = g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
                        tp.accumulate(ai, d);
                      });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Mat out = unary(a.value(), [&t](double x) {
    t.record_branch(x > 0.0 ? 1u : 0u);
    return x > 0.0 ? x : 0.0;
  });
  return t.push(std::move(out), {a.id}, [ai = a.id](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    Mat d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
    tp.accumulate(ai, d);
  });
}

Var exp(Var a) {
  return a.tape->push(unary(a.value(), [](double x) { return std::exp(x); }), {a.id},
                      [ai = a.id](Tape& tp, std::size_t self, const Mat& g) {
                        const Mat& y = tp.value(self);
                        Mat d(g.rows(), g.cols());
                        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = g.data()[i] * y.data()[i];
                        tp.accumulate(ai, d);
                      });
}

Var square(Var a) {
  return a.tape->push(unary(a.value(), [](double x) { return x * x; }), {a.id},
                      [ai = a.id](Tape& tp, std::size_t, const Mat& g) {
                        const Mat& x = tp.value(ai);
                        Mat d(g.rows(), g.cols());
                        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = 2.0 * x.data()[i] * g.data()[i];
                        tp.accumulate(ai, d);
                      });
}

Var softplus(Var a) {
  return a.tape->push(unary(a.value(), stable_softplus), {a.id},
                      [ai = a.id](Tape& tp, std::size_t, const Mat& g) {
                        const Mat& x = tp.value(ai);
                        Mat d(g.rows(), g.cols());
                        for (std::size_t i = 0; i < d.size(); ++i)
                          d.data()[i] = g.data()[i] * stable_sigmoid(x.data()[i]);
                        tp.accumulate(ai, d);
                      });
}

Var log_sigmoid(Var a) { return neg(softplus(neg(a))); }

Var minimum(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw DimensionMismatch("minimum: shape mismatch");
  Tape& t = *a.tape;
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.value().data()[i];
    const double y = b.value().data()[i];
    t.record_branch(x <= y ? 0u : 1u);
    out.data()[i] = x <= y ? x : y;
  }
  return t.push(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    const Mat& y = tp.value(bi);
    Mat da(g.rows(), g.cols());
    Mat db(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.data()[i] <= y.data()[i]) {
        da.data()[i] = g.data()[i];
      } else {
        db.data()[i] = g.data()[i];
      }
    }
    tp.accumulate(ai, da);
    tp.accumulate(bi, db);
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Mat out = unary(a.value(), [&t, lo, hi](double x) {
    if (x < lo) {
      t.record_branch(0u);
      return lo;
    }
    if (x > hi) {
      t.record_branch(2u);
      return hi;
    }
    t.record_branch(1u);
    return x;
  });
  return t.push(std::move(out), {a.id}, [ai = a.id, lo, hi](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    Mat d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = x.data()[i];
      d.data()[i] = (v < lo || v > hi) ? 0.0 : g.data()[i];
    }
    tp.accumulate(ai, d);
  });
}

Var softmax_rows(Var a) {
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = std::exp(row[j] - mx);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= total;
  }
  return a.tape->push(std::move(out), {a.id}, [ai = a.id](Tape& tp, std::size_t self, const Mat& g) {
    const Mat& y = tp.value(self);
    Mat d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) inner += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - inner);
    }
    tp.accumulate(ai, d);
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return a.tape->push(Mat(1, 1, total), {a.id}, [ai = a.id](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    tp.accumulate(ai, Mat(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw EmptyInput("mean: empty node");
  return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
  const Mat& x = a.value();
  Mat out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (double v : x.row_span(i)) acc += v;
    out(i, 0) = acc;
  }
  return a.tape->push(std::move(out), {a.id}, [ai = a.id](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    Mat d(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g(i, 0);
    tp.accumulate(ai, d);
  });
}

Var mean_cols(Var a) { return scale(sum_cols(a), 1.0 / static_cast<double>(a.cols())); }

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Mat& x = a.value();
  if (begin + count > x.rows()) throw DimensionMismatch("slice_rows: range out of bounds");
  Mat out(count, x.cols());
  for (std::size_t i = 0; i < count; ++i)
    std::copy(x.row_span(begin + i).begin(), x.row_span(begin + i).end(), out.row_span(i).begin());
  return a.tape->push(std::move(out), {a.id}, [ai = a.id, begin, count](Tape& tp, std::size_t, const Mat& g) {
    const Mat& x = tp.value(ai);
    Mat d(x.rows(), x.cols());
    for (std::size_t i = 0; i < count; ++i)
      std::copy(g.row_span(i).begin(), g.row_span(i).end(), d.row_span(begin + i).begin());
    tp.accumulate(ai, d);
  });
}

void ParamStore::add(std::string name, Mat value) {
  if (contains(name)) throw InvalidArgument("ParamStore: duplicate parameter " + name);
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

Mat& ParamStore::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw InvalidArgument("ParamStore: unknown parameter " + name);
}

const Mat& ParamStore::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw InvalidArgument("ParamStore: unknown parameter " + name);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

bool ParamStore::congruent(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.same_shape(other.entries_[i].second)) return false;
  }
  return true;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (const auto& e : entries_) z.add(e.first, Mat(e.second.rows(), e.second.cols()));
  return z;
}

bool ParamStore::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Entry& e) { return smorm::all_finite(e.second.data()); });
}

double& ParamStore::coord(std::size_t flat_index) {
  for (auto& e : entries_) {
    if (flat_index < e.second.size()) return e.second.data()[flat_index];
    flat_index -= e.second.size();
  }
  throw InvalidArgument("ParamStore::coord: index out of range");
}

Var BoundParams::operator[](const std::string& name) const {
  for (const auto& [n, v] : vars_)
    if (n == name) return v;
  throw InvalidArgument("BoundParams: unknown parameter " + name);
}

bool BoundParams::contains(const std::string& name) const {
  return std::any_of(vars_.begin(), vars_.end(), [&](const auto& p) { return p.first == name; });
}

BoundParams bind(Tape& tape, const ParamStore& params, bool requires_grad) {
  BoundParams bound;
  for (const auto& [name, value] : params) bound.add(name, tape.leaf(value, requires_grad));
  return bound;
}

Gradient collect_gradient(const Tape& tape, const BoundParams& bound, const ParamStore& like) {
  Gradient g;
  for (const auto& [name, value] : like) {
    if (bound.contains(name)) {
      g.add(name, tape.grad(bound[name].id));
    } else {
      g.add(name, Mat(value.rows(), value.cols()));
    }
  }
  return g;
}

}  // namespace smorm::ad
