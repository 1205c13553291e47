#include "conform/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conform/errors.hpp"

namespace conform {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Adjoints::Adjoints(const Tape& tape) : tape_(&tape), grads_(tape.size()) {}

Tensor& Adjoints::slot(std::size_t node) {
  Tensor& g = grads_[node];
  if (g.shape().empty()) g = Tensor(tape_->nodes_[node].value.shape());
  return g;
}

Var Tape::input(Tensor value) {
  Var v = record("input", std::move(value), {}, nullptr);
  nodes_[v.index()].requires_grad = true;
  nodes_[v.index()].is_input = true;
  return v;
}

Var Tape::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite result from " + std::string(op));
  bool requires_grad = false;
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ContractError(std::string(op) + ": operand recorded on a different tape");
    requires_grad = requires_grad || nodes_[p.index()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::backward(Var output, std::span<const Var> wrt) {
  if (output.tape_ != this) throw ContractError("backward: output recorded on a different tape");
  if (value(output).size() != 1) {
    throw ContractError("backward: output must be scalar, got shape " + to_string(value(output).shape()));
  }
  for (const Var& v : wrt) {
    if (v.tape_ != this || !nodes_[v.index()].is_input) {
      throw ContractError("backward: requested gradient for a value not marked differentiable");
    }
  }

  Adjoints adjoints(*this);
  adjoints.grads_[output.index()] = Tensor::filled(value(output).shape(), 1.0);
  last_visits_ = 0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    ++last_visits_;
    const Node& node = nodes_[i];
    if (!node.backward || !adjoints.touched(i)) continue;
    node.backward(adjoints.grads_[i], adjoints);
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Var& v : wrt) {
    result.push_back(adjoints.touched(v.index()) ? adjoints.grads_[v.index()] : Tensor(value(v).shape()));
  }
  return result;
}

Tensor Tape::gradient(Var output, Var wrt) {
  const Var one[] = {wrt};
  return std::move(backward(output, one).front());
}

namespace {

void require_same_shape(std::string_view op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_same_tape(std::string_view op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("matmul", matmul(a.value(), b.value()), {a, b},
                         [a, b, ga, gb](const Tensor& g, Adjoints& adj) {
                           if (ga) add_into(adj.slot(a.index()), matmul(g, transpose(b.value())));
                           if (gb) add_into(adj.slot(b.index()), matmul(transpose(a.value()), g));
                         });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  add_into(out, b.value());
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("add", std::move(out), {a, b}, [a, b, ga, gb](const Tensor& g, Adjoints& adj) {
    if (ga) add_into(adj.slot(a.index()), g);
    if (gb) add_into(adj.slot(b.index()), g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("sub", std::move(out), {a, b}, [a, b, ga, gb](const Tensor& g, Adjoints& adj) {
    if (ga) add_into(adj.slot(a.index()), g);
    if (gb) {
      auto d = adj.slot(b.index()).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("mul", std::move(out), {a, b}, [a, b, ga, gb](const Tensor& g, Adjoints& adj) {
    if (ga) {
      auto d = adj.slot(a.index()).data();
      auto bv = b.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (gb) {
      auto d = adj.slot(b.index()).data();
      auto av = a.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record("scale", std::move(out), {a}, [a, factor](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_scalar(Var a, double offset) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += offset;
  return a.tape().record("add_scalar", std::move(out), {a},
                         [a](const Tensor& g, Adjoints& adj) { add_into(adj.slot(a.index()), g); });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  Tensor y = out;
  return a.tape().record("exp", std::move(out), {a}, [a, y = std::move(y)](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
    v = std::log(v);
  }
  return a.tape().record("log", std::move(out), {a}, [a](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    auto x = a.value().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / x[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](const Tensor& g, Adjoints& adj) {
    const double gs = g[0];
    for (auto& v : adj.slot(a.index()).data()) v += gs;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var softmax_rows(Var a) {
  if (a.value().rank() != 2) throw DimensionError("softmax_rows expects a matrix, got " + to_string(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = out.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, out.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  Tensor y = out;
  return a.tape().record("softmax_rows", std::move(out), {a},
                         [a, y = std::move(y), m, n](const Tensor& g, Adjoints& adj) {
                           Tensor& d = adj.slot(a.index());
                           for (std::size_t i = 0; i < m; ++i) {
                             double inner = 0.0;
                             for (std::size_t j = 0; j < n; ++j) inner += g.at(i, j) * y.at(i, j);
                             for (std::size_t j = 0; j < n; ++j) d.at(i, j) += y.at(i, j) * (g.at(i, j) - inner);
                           }
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [a](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
}

Var slice_last(Var a, std::size_t j) {
  const Shape& in = a.shape();
  if (in.empty()) throw DimensionError("slice_last on rank-0 tensor");
  const std::size_t l = in.back();
  if (j >= l) throw IndexError("index " + std::to_string(j) + " out of range for last extent " + std::to_string(l));
  Shape out_shape(in.begin(), in.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  auto src = a.value().data();
  const std::size_t rows = out.size();
  for (std::size_t r = 0; r < rows; ++r) out[r] = src[r * l + j];
  return a.tape().record("slice_last", std::move(out), {a}, [a, j, l, rows](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    for (std::size_t r = 0; r < rows; ++r) d[r * l + j] += g[r];
  });
}

Var element(Var a, std::size_t i) {
  if (i >= a.value().size()) {
    throw IndexError("element " + std::to_string(i) + " out of range for shape " + to_string(a.shape()));
  }
  return a.tape().record("element", Tensor::scalar(a.value()[i]), {a}, [a, i](const Tensor& g, Adjoints& adj) {
    adj.slot(a.index())[i] += g[0];
  });
}

Var stack(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractError("stack of zero values");
  Tape& tape = scalars.front().tape();
  Tensor out({scalars.size()});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) {
      throw DimensionError("stack expects scalars, got " + to_string(scalars[i].shape()));
    }
    out[i] = scalars[i].value()[0];
  }
  std::vector<Var> parents(scalars.begin(), scalars.end());
  return tape.record("stack", std::move(out), scalars, [parents](const Tensor& g, Adjoints& adj) {
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (parents[i].requires_grad()) adj.slot(parents[i].index())[0] += g[i];
    }
  });
}

Var logsumexp(Var a) {
  auto x = a.value().data();
  if (x.empty()) throw ContractError("logsumexp of empty tensor");
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return a.tape().record("logsumexp", Tensor::scalar(lse), {a}, [a, lse](const Tensor& g, Adjoints& adj) {
    auto d = adj.slot(a.index()).data();
    auto xv = a.value().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * std::exp(xv[i] - lse);
  });
}

Var dot(Var a, Var b) {
  require_same_tape("dot", a, b);
  if (a.value().size() != b.value().size()) {
    throw DimensionError("dot shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  auto ad = a.value().data();
  auto bd = b.value().data();
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("dot", Tensor::scalar(s), {a, b}, [a, b, ga, gb](const Tensor& g, Adjoints& adj) {
    if (ga) {
      auto d = adj.slot(a.index()).data();
      auto bv = b.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * bv[i];
    }
    if (gb) {
      auto d = adj.slot(b.index()).data();
      auto av = a.value().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0] * av[i];
    }
  });
}

Var cosine_sim(Var a, Var b) {
  require_same_tape("cosine_sim", a, b);
  if (a.value().size() != b.value().size()) {
    throw DimensionError("cosine_sim shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  auto ad = a.value().data();
  auto bd = b.value().data();
  const double na = norm(ad), nb = norm(bd);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero vector");
  double ab = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) ab += ad[i] * bd[i];
  const double s = ab / (na * nb);
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return a.tape().record("cosine_sim", Tensor::scalar(s), {a, b},
                         [a, b, ga, gb, na, nb, s](const Tensor& g, Adjoints& adj) {
                           auto av = a.value().data();
                           auto bv = b.value().data();
                           // d s / d a = b / (|a||b|) - s a / |a|^2, symmetric for b.
                           if (ga) {
                             auto d = adj.slot(a.index()).data();
                             const double c1 = g[0] / (na * nb), c2 = g[0] * s / (na * na);
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += c1 * bv[i] - c2 * av[i];
                           }
                           if (gb) {
                             auto d = adj.slot(b.index()).data();
                             const double c1 = g[0] / (na * nb), c2 = g[0] * s / (nb * nb);
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += c1 * av[i] - c2 * bv[i];
                           }
                         });
}

}  // namespace conform
