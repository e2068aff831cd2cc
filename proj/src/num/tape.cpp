#include "bcgnn/num/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bcgnn/error.hpp"

namespace bcgnn::num {

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::make(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return make(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return make(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return make(std::move(n));
}

Var Tape::push(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error("Tape::push: parent belongs to a different tape");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return make(std::move(n));
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "Tape::accumulate");
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::accumulate(std::size_t id, Matrix&& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "Tape::accumulate");
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = std::move(g);
    n.has_grad = true;
  }
}

void Tape::set_backward(Var v, BackwardFn fn) {
  Node& n = nodes_[v.id_];
  if (n.requires_grad) n.backward = std::move(fn);
}

const Matrix& Tape::grad(Var v) { return grad_slot(v.id_); }

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("Tape::backward: loss belongs to a different tape");
  const Matrix& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("Tape::backward: loss must be 1x1, got " + lv.shape_string());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix();
  }
  grad_slot(loss.id_)(0, 0) = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param != nullptr) n.param->grad += n.grad;
    if (n.backward) {
      // Parents precede i, so the closure never touches this node's grad.
      const Matrix g = std::move(n.grad);
      n.has_grad = false;
      nodes_[i].backward(*this, g);
    }
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return t.push(matmul(a.value(), b.value()), parents, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value_of(ib)));
    if (tp.needs_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value_of(ia), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return t.push(matmul_nt(a.value(), b.value()), parents, [ia, ib](Tape& tp, const Matrix& g) {
    // out = a b^T: da = g b, db = g^T a
    if (tp.needs_grad(ia)) tp.accumulate(ia, matmul(g, tp.value_of(ib)));
    if (tp.needs_grad(ib)) tp.accumulate(ib, matmul_tn(g, tp.value_of(ia)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return t.push(a.value() + b.value(), parents, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return t.push(a.value() - b.value(), parents, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(ib)) tp.accumulate(ib, g * -1.0);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: incompatible shapes " + av.shape_string() + " and " +
                     rv.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += rv[c];
  }
  const std::size_t ia = a.id(), ir = row.id();
  const Var parents[] = {a, row};
  return t.push(std::move(out), parents, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.needs_grad(ir)) {
      Matrix gr(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
      }
      tp.accumulate(ir, std::move(gr));
    }
  });
}

Var outer_add(Var col, Var row) {
  Tape& t = tape_of(col, row);
  const Matrix& cv = col.value();
  const Matrix& rv = row.value();
  if (cv.cols() != 1 || rv.rows() != 1) {
    throw ShapeError("outer_add: expected column and row, got " + cv.shape_string() + " and " +
                     rv.shape_string());
  }
  Matrix out(cv.rows(), rv.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = cv[r] + rv[c];
  const std::size_t ic = col.id(), ir = row.id();
  const Var parents[] = {col, row};
  return t.push(std::move(out), parents, [ic, ir](Tape& tp, const Matrix& g) {
    Matrix gc(g.rows(), 1);
    Matrix gr(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        gc[r] += g(r, c);
        gr[c] += g(r, c);
      }
    tp.accumulate(ic, std::move(gc));
    tp.accumulate(ir, std::move(gr));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var parents[] = {a, b};
  return t.push(hadamard(a.value(), b.value()), parents, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, hadamard(g, tp.value_of(ib)));
    if (tp.needs_grad(ib)) tp.accumulate(ib, hadamard(g, tp.value_of(ia)));
  });
}

Var mul_const(Var a, const Matrix& c) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(hadamard(a.value(), c), parents,
                       [ia, c](Tape& tp, const Matrix& g) { tp.accumulate(ia, hadamard(g, c)); });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(a.value() * s, parents,
                       [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var activation(Var x, Activation kind) {
  const std::size_t ix = x.id();
  const Var parents[] = {x};
  return x.tape().push(activation(x.value(), kind), parents, [ix, kind](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value_of(ix);
    Matrix gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * kind.derivative(xv[i]);
    tp.accumulate(ix, std::move(gx));
  });
}

Var gather_rows(Var a, std::span<const std::size_t> idx) {
  const Matrix& av = a.value();
  Matrix out(idx.size(), av.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    auto src = av.row(idx[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  std::vector<std::size_t> index(idx.begin(), idx.end());
  return a.tape().push(std::move(out), parents,
                       [ia, index = std::move(index)](Tape& tp, const Matrix& g) {
                         Matrix& slot = tp.grad_slot(ia);
                         for (std::size_t k = 0; k < index.size(); ++k) {
                           auto dst = slot.row(index[k]);
                           auto src = g.row(k);
                           for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                         }
                       });
}

Var fused_sum(std::span<const Addend> addends, Var bias, Activation act) {
  if (addends.empty()) throw ShapeError("fused_sum: no addends");
  if (act.kind == ActivationKind::leaky_relu && act.slope < 0.0)
    throw ShapeError("fused_sum: negative leaky slope");
  Tape& t = addends.front().source.tape();
  const std::size_t cols = addends.front().source.cols();
  const auto rows_of = [](const Addend& a) {
    return a.index.empty() ? a.source.rows() : a.index.size();
  };
  const std::size_t rows = rows_of(addends.front());
  std::vector<Var> parents;
  for (const Addend& a : addends) {
    if (&a.source.tape() != &t) throw Error("operands live on different tapes");
    if (a.source.cols() != cols || rows_of(a) != rows)
      throw ShapeError("fused_sum: addend " + a.source.value().shape_string() + " does not fit " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    for (std::size_t r : a.index)
      if (r >= a.source.rows()) throw ShapeError("fused_sum: index out of range");
    parents.push_back(a.source);
  }
  if (bias.valid()) {
    if (bias.rows() != 1 || bias.cols() != cols)
      throw ShapeError("fused_sum: bias " + bias.value().shape_string() + " for width " +
                       std::to_string(cols));
    parents.push_back(bias);
  }

  Matrix out(rows, cols);
  if (bias.valid())
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.value().data(), cols, out.row(r).begin());
  for (const Addend& a : addends) {
    const Matrix& src = a.source.value();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = src.data() + (a.index.empty() ? r : a.index[r]) * cols;
      double* dst = out.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += in[c];
    }
  }
  if (act.kind != ActivationKind::identity)
    for (double& x : out.values()) x = act.apply(x);

  struct Term {
    std::size_t id;
    std::vector<std::size_t> index;
  };
  std::vector<Term> terms;
  for (const Addend& a : addends) terms.push_back({a.source.id(), a.index});
  const std::size_t ib = bias.valid() ? bias.id() : 0;
  const bool has_bias = bias.valid();
  Var result = t.push(std::move(out), parents, {});
  const std::size_t iout = result.id();
  if (!t.requires_grad(result)) return result;

  // The derivative is read off the output: for these activations y > 0 iff x > 0.
  auto backward = [terms = std::move(terms), ib, has_bias, act, iout, cols](Tape& tp,
                                                                            const Matrix& g) {
    Matrix gx = g;
    if (act.kind != ActivationKind::identity) {
      const Matrix& y = tp.value_of(iout);
      const double low = act.kind == ActivationKind::leaky_relu ? act.slope : 0.0;
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (!(y[i] > 0.0)) gx[i] *= low;
    }
    if (has_bias && tp.needs_grad(ib)) {
      Matrix gb(1, cols);
      for (std::size_t r = 0; r < gx.rows(); ++r) {
        const double* src = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gb[c] += src[c];
      }
      tp.accumulate(ib, std::move(gb));
    }
    for (const Term& term : terms) {
      if (!tp.needs_grad(term.id)) continue;
      if (term.index.empty()) {
        tp.accumulate(term.id, gx);
        continue;
      }
      Matrix& slot = tp.grad_slot(term.id);
      for (std::size_t r = 0; r < term.index.size(); ++r) {
        double* dst = slot.data() + term.index[r] * cols;
        const double* src = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    }
  };
  t.set_backward(result, std::move(backward));
  return result;
}

Var gather_elements(Var a, std::span<const std::size_t> idx) {
  const Matrix& av = a.value();
  Matrix out(idx.size(), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= av.size()) throw ShapeError("gather_elements: index out of range");
    out[k] = av[idx[k]];
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  std::vector<std::size_t> index(idx.begin(), idx.end());
  return a.tape().push(std::move(out), parents,
                       [ia, index = std::move(index)](Tape& tp, const Matrix& g) {
                         Matrix& slot = tp.grad_slot(ia);
                         for (std::size_t k = 0; k < index.size(); ++k) slot[index[k]] += g[k];
                       });
}

Var segment_reduce(Var a, std::span<const std::size_t> segment, std::size_t segments,
                   Aggregation agg) {
  const Matrix& av = a.value();
  if (segment.size() != av.rows()) {
    throw ShapeError("segment_reduce: " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(av.rows()) + " rows");
  }
  const std::size_t cols = av.cols();
  Matrix out(segments, cols);
  std::vector<std::size_t> counts(segments, 0);
  for (std::size_t s : segment) {
    if (s >= segments) throw ShapeError("segment_reduce: segment id out of range");
    ++counts[s];
  }
  std::vector<std::size_t> argmax;
  if (agg == Aggregation::max) {
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    argmax.assign(segments * cols, none);
    for (std::size_t r = 0; r < av.rows(); ++r) {
      const std::size_t s = segment[r];
      for (std::size_t c = 0; c < cols; ++c) {
        std::size_t& best = argmax[s * cols + c];
        if (best == none || av(r, c) > av(best, c)) best = r;
      }
    }
    for (std::size_t s = 0; s < segments; ++s)
      for (std::size_t c = 0; c < cols; ++c)
        if (argmax[s * cols + c] != none) out(s, c) = av(argmax[s * cols + c], c);
  } else {
    // Rows of a segment are summed in lexicographic order of their values,
    // which makes the sum independent of the order rows arrive in.
    std::vector<std::size_t> start(segments + 1, 0);
    for (std::size_t s = 0; s < segments; ++s) start[s + 1] = start[s] + counts[s];
    std::vector<std::size_t> order(av.rows());
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t r = 0; r < av.rows(); ++r) order[fill[segment[r]]++] = r;
    auto lexicographic = [&](std::size_t x, std::size_t y) {
      auto rx = av.row(x), ry = av.row(y);
      return std::lexicographical_compare(rx.begin(), rx.end(), ry.begin(), ry.end());
    };
    for (std::size_t s = 0; s < segments; ++s) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(start[s]);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(start[s + 1]);
      std::sort(first, last, lexicographic);
      auto dst = out.row(s);
      for (auto it = first; it != last; ++it) {
        auto src = av.row(*it);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    }
    if (agg == Aggregation::mean) {
      for (std::size_t s = 0; s < segments; ++s) {
        if (counts[s] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[s]);
        for (double& x : out.row(s)) x *= inv;
      }
    }
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return a.tape().push(
      std::move(out), parents,
      [ia, agg, cols, seg = std::move(seg), counts = std::move(counts),
       argmax = std::move(argmax)](Tape& tp, const Matrix& g) {
        Matrix& slot = tp.grad_slot(ia);
        if (agg == Aggregation::max) {
          constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
          for (std::size_t s = 0; s < g.rows(); ++s)
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t r = argmax[s * cols + c];
              if (r != none) slot(r, c) += g(s, c);
            }
          return;
        }
        for (std::size_t r = 0; r < seg.size(); ++r) {
          const double w =
              agg == Aggregation::mean ? 1.0 / static_cast<double>(counts[seg[r]]) : 1.0;
          auto src = g.row(seg[r]);
          auto dst = slot.row(r);
          for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw Error("concat_rows: inputs on different tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += v.rows();
  }
  return t.push(std::move(out), parts,
                [ids = std::move(ids), offsets = std::move(offsets), cols](Tape& tp,
                                                                          const Matrix& g) {
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!tp.needs_grad(ids[k])) continue;
                    Matrix& slot = tp.grad_slot(ids[k]);
                    const double* src = g.data() + offsets[k] * cols;
                    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += src[i];
                  }
                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw Error("concat_cols: inputs on different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = v.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += v.cols();
  }
  return t.push(std::move(out), parts,
                [ids = std::move(ids), offsets = std::move(offsets)](Tape& tp, const Matrix& g) {
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!tp.needs_grad(ids[k])) continue;
                    Matrix& slot = tp.grad_slot(ids[k]);
                    for (std::size_t r = 0; r < slot.rows(); ++r)
                      for (std::size_t c = 0; c < slot.cols(); ++c)
                        slot(r, c) += g(r, offsets[k] + c);
                  }
                });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  if (begin + count > av.cols()) throw ShapeError("slice_cols: range exceeds " + av.shape_string());
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(std::move(out), parents, [ia, begin](Tape& tp, const Matrix& g) {
    Matrix& slot = tp.grad_slot(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) slot(r, begin + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  if (begin + count > av.rows()) throw ShapeError("slice_rows: range exceeds " + av.shape_string());
  const std::size_t cols = av.cols();
  Matrix out(count, cols,
             std::vector<double>(av.data() + begin * cols, av.data() + (begin + count) * cols));
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(std::move(out), parents, [ia, begin, cols](Tape& tp, const Matrix& g) {
    Matrix& slot = tp.grad_slot(ia);
    double* dst = slot.data() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(a.value().transpose(), parents,
                       [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

Var softmax_rows(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const auto p = softmax(av.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  Matrix probs = out;
  return a.tape().push(std::move(out), parents,
                       [ia, probs = std::move(probs)](Tape& tp, const Matrix& g) {
                         Matrix ga(g.rows(), g.cols());
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           double dot = 0.0;
                           for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * probs(r, c);
                           for (std::size_t c = 0; c < g.cols(); ++c)
                             ga(r, c) = probs(r, c) * (g(r, c) - dot);
                         }
                         tp.accumulate(ia, std::move(ga));
                       });
}

Var scale_rows(Var a, Var s) {
  Tape& t = tape_of(a, s);
  const Matrix& av = a.value();
  const Matrix& sv = s.value();
  if (sv.cols() != 1 || sv.rows() != av.rows()) {
    throw ShapeError("scale_rows: incompatible shapes " + av.shape_string() + " and " +
                     sv.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& x : out.row(r)) x *= sv[r];
  const std::size_t ia = a.id(), is = s.id();
  const Var parents[] = {a, s};
  return t.push(std::move(out), parents, [ia, is](Tape& tp, const Matrix& g) {
    const Matrix& avv = tp.value_of(ia);
    const Matrix& svv = tp.value_of(is);
    if (tp.needs_grad(ia)) {
      Matrix ga = g;
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (double& x : ga.row(r)) x *= svv[r];
      tp.accumulate(ia, std::move(ga));
    }
    if (tp.needs_grad(is)) {
      Matrix gs(svv.rows(), 1);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gs[r] += g(r, c) * avv(r, c);
      tp.accumulate(is, std::move(gs));
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().values()) total += x;
  const std::size_t ia = a.id();
  const Var parents[] = {a};
  return a.tape().push(Matrix(1, 1, total), parents, [ia](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value_of(ia);
    tp.accumulate(ia, Matrix(av.rows(), av.cols(), g[0]));
  });
}

Var mean(Var a) {
  const std::size_t count = a.value().size();
  if (count == 0) {
    const Var parents[] = {a};
    return a.tape().push(Matrix(1, 1), parents, [](Tape&, const Matrix&) {});
  }
  return scale(sum(a), 1.0 / static_cast<double>(count));
}

Var mean_squared_error(Var pred, const Matrix& target) {
  require_same_shape(pred.value(), target, "mean_squared_error");
  const Matrix& pv = pred.value();
  const std::size_t count = pv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pv[i] - target[i];
    total += d * d;
  }
  const double inv = count == 0 ? 0.0 : 1.0 / static_cast<double>(count);
  const std::size_t ip = pred.id();
  const Var parents[] = {pred};
  return pred.tape().push(Matrix(1, 1, total * inv), parents,
                          [ip, target, inv](Tape& tp, const Matrix& g) {
                            const Matrix& p = tp.value_of(ip);
                            Matrix gp(p.rows(), p.cols());
                            for (std::size_t i = 0; i < p.size(); ++i)
                              gp[i] = 2.0 * (p[i] - target[i]) * inv * g[0];
                            tp.accumulate(ip, std::move(gp));
                          });
}

Var cross_entropy(Var logits, std::span<const std::size_t> target) {
  const Matrix& lv = logits.value();
  if (target.size() != lv.rows()) throw ShapeError("cross_entropy: target count != logit rows");
  Matrix probs(lv.rows(), lv.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (target[r] >= lv.cols()) throw ShapeError("cross_entropy: target class out of range");
    auto row = lv.row(r);
    const double top = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - top);
    const double log_z = top + std::log(z);
    total += log_z - row[target[r]];
    for (std::size_t c = 0; c < lv.cols(); ++c) probs(r, c) = std::exp(row[c] - log_z);
  }
  const double inv = lv.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(lv.rows());
  const std::size_t il = logits.id();
  const Var parents[] = {logits};
  std::vector<std::size_t> tgt(target.begin(), target.end());
  return logits.tape().push(
      Matrix(1, 1, total * inv), parents,
      [il, inv, probs = std::move(probs), tgt = std::move(tgt)](Tape& tp, const Matrix& g) {
        Matrix gl = probs;
        for (std::size_t r = 0; r < gl.rows(); ++r) gl(r, tgt[r]) -= 1.0;
        gl *= inv * g[0];
        tp.accumulate(il, std::move(gl));
      });
}

}  // namespace bcgnn::num

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bcgnn::num {

void retain_heap_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace bcgnn::num
