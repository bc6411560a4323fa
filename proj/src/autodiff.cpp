#include "mpre/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpre/error.hpp"

namespace mpre::ad {

namespace {

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                   shape_string(b));
}

void require_same_tape(std::string_view op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ShapeError(std::string(op) + ": operands belong to different tapes");
  }
}

void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

template <typename F>
Var elementwise(std::string_view op, Var a, Var b, F f, double da_sign, double db_sign) {
  require_same_tape(op, a, b);
  Tape& t = *a.tape;
  if (t.shape(a) != t.shape(b)) shape_mismatch(op, t.shape(a), t.shape(b));
  auto av = t.values(a);
  auto bv = t.values(b);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(op, {ia, ib}, t.shape(a), std::move(out),
                  [ia, ib, da_sign, db_sign](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da_sign * g[i];
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db_sign * g[i];
                  });
}

}  // namespace

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.shape = std::move(value.shape);
  n.values = std::move(value.values);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  Node n;
  n.op = "parameter";
  n.shape = param.shape;
  n.values = param.values;
  n.param = &param;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, std::vector<std::size_t> inputs, Shape shape,
                 std::vector<double> values, BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.shape = std::move(shape);
  n.values = std::move(values);
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) {
      throw ShapeError(n.op + ": input node " + std::to_string(in) + " is not on the tape");
    }
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this || nodes_.empty()) {
    throw ShapeError("backward: loss is not on this tape or the tape is empty");
  }
  if (nodes_[loss.id].values.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(nodes_[loss.id].shape));
  }
  grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i].assign(nodes_[i].values.size(), 0.0);
  grads_[loss.id][0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.param == nullptr) continue;
    n.param->ensure_grad();
    for (std::size_t k = 0; k < grads_[i].size(); ++k) n.param->grad[k] += grads_[i][k];
  }
}

Tensor Tape::value_tensor(Var v) const {
  const Node& n = nodes_[v.id];
  return Tensor(n.shape, n.values);
}

Var add(Var a, Var b) {
  return elementwise("add", a, b, [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Var sub(Var a, Var b) {
  return elementwise("sub", a, b, [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  Tape& t = *a.tape;
  if (t.shape(a) != t.shape(b)) shape_mismatch("mul", t.shape(a), t.shape(b));
  auto av = t.values(a);
  auto bv = t.values(b);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record("mul", {ia, ib}, t.shape(a), std::move(out), [ia, ib](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto av = tp.values(ia);
    auto bv = tp.values(ib);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    auto gb = tp.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  auto av = t.values(a);
  std::vector<double> out(av.begin(), av.end());
  for (double& x : out) x *= s;
  const std::size_t ia = a.id;
  return t.record("scale", {ia}, t.shape(a), std::move(out), [ia, s](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(Var a, Var bias) {
  require_same_tape("add_scalar", a, bias);
  Tape& t = *a.tape;
  if (t.values(bias).size() != 1) shape_mismatch("add_scalar", t.shape(a), t.shape(bias));
  const double b = t.values(bias)[0];
  auto av = t.values(a);
  std::vector<double> out(av.begin(), av.end());
  for (double& x : out) x += b;
  const std::size_t ia = a.id, ib = bias.id;
  return t.record("add_scalar", {ia, ib}, t.shape(a), std::move(out),
                  [ia, ib](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto ga = tp.grad_mut(ia);
                    double total = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += g[i];
                      total += g[i];
                    }
                    tp.grad_mut(ib)[0] += total;
                  });
}

Var matvec(Var w, Var x) {
  require_same_tape("matvec", w, x);
  Tape& t = *w.tape;
  const Shape& ws = t.shape(w);
  const Shape& xs = t.shape(x);
  if (ws.size() != 2 || xs.size() != 1 || ws[1] != xs[0]) shape_mismatch("matvec", ws, xs);
  const std::size_t rows = ws[0], cols = ws[1];
  auto wv = t.values(w);
  auto xv = t.values(x);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wv[r * cols + c] * xv[c];
    out[r] = acc;
  }
  const std::size_t iw = w.id, ix = x.id;
  return t.record("matvec", {iw, ix}, {rows}, std::move(out),
                  [iw, ix, rows, cols](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto wv = tp.values(iw);
                    auto xv = tp.values(ix);
                    if (tp.requires_grad(iw)) {
                      auto gw = tp.grad_mut(iw);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * xv[c];
                    }
                    if (tp.requires_grad(ix)) {
                      auto gx = tp.grad_mut(ix);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r] * wv[r * cols + c];
                    }
                  });
}

Var weighted_rows(Var x, Var w) {
  require_same_tape("weighted_rows", x, w);
  Tape& t = *x.tape;
  const Shape& xs = t.shape(x);
  const Shape& ws = t.shape(w);
  if (xs.size() != 2 || ws.size() != 1 || xs[0] != ws[0]) shape_mismatch("weighted_rows", xs, ws);
  const std::size_t rows = xs[0], cols = xs[1];
  auto xv = t.values(x);
  auto wv = t.values(w);
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += wv[r] * xv[r * cols + c];
  const std::size_t ix = x.id, iw = w.id;
  return t.record("weighted_rows", {ix, iw}, {cols}, std::move(out),
                  [ix, iw, rows, cols](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto xv = tp.values(ix);
                    auto wv = tp.values(iw);
                    auto gx = tp.grad_mut(ix);
                    auto gw = tp.grad_mut(iw);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        gx[r * cols + c] += wv[r] * g[c];
                        gw[r] += xv[r * cols + c] * g[c];
                      }
                    }
                  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape& t = *parts.front().tape;
  const Shape& first = t.shape(parts.front());
  if (first.empty() || first.size() > 2) shape_mismatch("concat", first, first);
  const std::size_t rows = first.size() == 2 ? first[0] : 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    require_same_tape("concat", parts.front(), p);
    const Shape& s = t.shape(p);
    if (s.size() != first.size() || (s.size() == 2 && s[0] != rows)) shape_mismatch("concat", first, s);
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = t.values(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + offset + c] = v[r * widths[k] + c];
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (Var p : parts) ids.push_back(p.id);
  Shape shape = first.size() == 2 ? Shape{rows, total} : Shape{total};
  return t.record("concat", ids, std::move(shape), std::move(out),
                  [ids, widths, rows, total](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      auto gk = tp.grad_mut(ids[k]);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < widths[k]; ++c)
                          gk[r * widths[k] + c] += g[r * total + offset + c];
                      offset += widths[k];
                    }
                  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  auto av = t.values(a);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const std::size_t ia = a.id;
  return t.record("tanh", {ia}, t.shape(a), std::move(out), [ia](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto y = tp.values(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double peak = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

Var softmax(Var a) {
  Tape& t = *a.tape;
  require_rank("softmax", t.shape(a), 1);
  if (t.values(a).empty()) throw ShapeError("softmax: empty input");
  const std::size_t ia = a.id;
  return t.record("softmax", {ia}, t.shape(a), softmax_values(t.values(a)),
                  [ia](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto y = tp.values(self);
                    double dot = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
                    auto ga = tp.grad_mut(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
                  });
}

Var slice(Var a, std::size_t begin, std::size_t length) {
  Tape& t = *a.tape;
  require_rank("slice", t.shape(a), 1);
  auto av = t.values(a);
  if (begin + length > av.size()) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + length) + ") exceeds shape " + shape_string(t.shape(a)));
  }
  std::vector<double> out(av.begin() + begin, av.begin() + begin + length);
  const std::size_t ia = a.id;
  return t.record("slice", {ia}, {length}, std::move(out), [ia, begin](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
  });
}

Var diff(Var a) {
  Tape& t = *a.tape;
  require_rank("diff", t.shape(a), 1);
  auto av = t.values(a);
  if (av.size() < 2) throw ShapeError("diff: need at least 2 elements, got " + shape_string(t.shape(a)));
  std::vector<double> out(av.size() - 1);
  for (std::size_t i = 0; i + 1 < av.size(); ++i) out[i] = av[i + 1] - av[i];
  const std::size_t ia = a.id;
  const std::size_t n = out.size();
  return t.record("diff", {ia}, {n}, std::move(out), [ia](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i + 1] += g[i];
      ga[i] -= g[i];
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  auto av = t.values(a);
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  const std::size_t ia = a.id;
  return t.record("sum", {ia}, {1}, {total}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& x : tp.grad_mut(ia)) x += g;
  });
}

Var nll(Var probs, std::size_t label, double clamp) {
  Tape& t = *probs.tape;
  require_rank("nll", t.shape(probs), 1);
  auto pv = t.values(probs);
  if (label >= pv.size()) {
    throw ShapeError("nll: label " + std::to_string(label) + " outside " + shape_string(t.shape(probs)));
  }
  const double p = pv[label];
  const bool clamped = p < clamp;
  const double loss = -std::log(clamped ? clamp : p);
  const std::size_t ip = probs.id;
  return t.record("nll", {ip}, {1}, {loss}, [ip, label, clamped](Tape& tp, std::size_t self) {
    if (clamped) return;
    const double g = tp.grad(self)[0];
    tp.grad_mut(ip)[label] -= g / tp.values(ip)[label];
  });
}

GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Tensor* const> params,
                                  std::size_t sample_count, double step, std::uint64_t seed,
                                  std::span<const std::string> names) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_check: step must be positive");

  std::vector<std::pair<std::size_t, std::size_t>> scalars;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); ++i) scalars.emplace_back(p, i);
  GradCheckResult result;
  if (scalars.empty() || sample_count == 0) return result;

  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }

  auto label = [&](std::size_t p, std::size_t i) {
    const std::string base = p < names.size() ? names[p] : "param#" + std::to_string(p);
    return base + "[" + std::to_string(i) + "]";
  };
  auto evaluate = [&](std::size_t p, std::size_t i) {
    Tape tape;
    const double v = tape.values(loss_fn(tape))[0];
    if (!std::isfinite(v)) throw NumericalError("finite_diff_check: non-finite loss perturbing " + label(p, i));
    return v;
  };

  std::mt19937_64 rng(seed);
  if (sample_count < scalars.size()) {
    std::shuffle(scalars.begin(), scalars.end(), rng);
    scalars.resize(sample_count);
  }
  for (auto [p, i] : scalars) {
    double& theta = params[p]->values[i];
    const double saved = theta;
    theta = saved + step;
    const double up = evaluate(p, i);
    theta = saved - step;
    const double down = evaluate(p, i);
    theta = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = params[p]->grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace mpre::ad
