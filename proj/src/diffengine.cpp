#include "ldvi/diffengine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ldvi::ad {

namespace {

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string domain_message(Op op, double primal) {
  std::ostringstream os;
  os << "domain error in '" << op_name(op) << "' at primal value " << primal;
  return os.str();
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::sigmoid: return "sigmoid";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::dot: return "dot";
    case Op::scale: return "scale";
    case Op::sum: return "sum";
    case Op::affine: return "affine";
    case Op::matvec: return "matvec";
    case Op::matvec_t: return "matvec_t";
    case Op::slice: return "slice";
    case Op::concat: return "concat";
    case Op::gather: return "gather";
    case Op::scatter: return "scatter";
  }
  return "unknown";
}

DomainError::DomainError(Op op, double primal)
    : std::domain_error(domain_message(op, primal)), op_(op), primal_(primal) {}

// ---------------------------------------------------------------------------
// Var

std::size_t Var::size() const { return tape_->size_of(index_); }

std::span<const double> Var::value() const { return tape_->value_of(index_); }

double Var::scalar() const {
  if (size() != 1) throw ShapeError("scalar() called on a vector Var");
  return value()[0];
}

std::vector<double> Var::to_vector() const {
  auto v = value();
  return {v.begin(), v.end()};
}

// ---------------------------------------------------------------------------
// Tape bookkeeping

std::span<const double> Tape::value_of(std::uint32_t index) const {
  const Node& n = nodes_[index];
  return {values_.data() + n.offset, n.length};
}

std::uint32_t Tape::push(Node node) {
  node.offset = static_cast<std::uint32_t>(values_.size());
  values_.resize(values_.size() + node.length);
  nodes_.push_back(node);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this) throw ShapeError("Var belongs to a different tape");
}

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  adjoints_.clear();
  aux_.clear();
  parameters_.clear();
}

Var Tape::lift(double value, bool trainable) {
  return lift(std::span<const double>(&value, 1), trainable);
}

Var Tape::lift(std::initializer_list<double> values, bool trainable) {
  return lift(std::span<const double>(values.begin(), values.size()), trainable);
}

Var Tape::lift(std::span<const double> values, bool trainable) {
  if (values.empty()) throw ShapeError("cannot lift an empty vector");
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(Op::leaf, v);
  }
  Node n;
  n.op = Op::leaf;
  n.needs_grad = trainable;
  n.length = static_cast<std::uint32_t>(values.size());
  const std::uint32_t id = push(n);
  std::copy(values.begin(), values.end(), values_.begin() + nodes_[id].offset);
  Var out(this, id);
  if (trainable) parameters_.push_back(out);
  return out;
}

Var Tape::zeros(std::size_t n) {
  std::vector<double> z(n, 0.0);
  return lift(z);
}

std::span<const double> Tape::adjoint(const Var& v) const {
  check_owned(v);
  const Node& n = nodes_[v.index()];
  if (adjoints_.size() < values_.size()) {
    throw ShapeError("adjoint requested before backward()");
  }
  return {adjoints_.data() + n.offset, n.length};
}

// ---------------------------------------------------------------------------
// Forward recorders

Var Tape::unary(Op op, const Var& x) {
  check_owned(x);
  Node n;
  n.op = op;
  n.a = x.index();
  n.needs_grad = nodes_[n.a].needs_grad;
  n.length = nodes_[n.a].length;
  const std::uint32_t id = push(n);
  const double* in = values_.data() + nodes_[n.a].offset;
  double* out = values_.data() + nodes_[id].offset;
  const std::size_t len = n.length;
  switch (op) {
    case Op::neg:
      for (std::size_t i = 0; i < len; ++i) out[i] = -in[i];
      break;
    case Op::exp:
      for (std::size_t i = 0; i < len; ++i) out[i] = std::exp(in[i]);
      break;
    case Op::log:
      for (std::size_t i = 0; i < len; ++i) {
        if (!(in[i] > 0.0)) {
          const double bad = in[i];
          nodes_.pop_back();
          values_.resize(values_.size() - len);
          throw DomainError(op, bad);
        }
        out[i] = std::log(in[i]);
      }
      break;
    case Op::tanh:
      for (std::size_t i = 0; i < len; ++i) out[i] = std::tanh(in[i]);
      break;
    case Op::softplus:
      for (std::size_t i = 0; i < len; ++i) out[i] = stable_softplus(in[i]);
      break;
    case Op::sigmoid:
      for (std::size_t i = 0; i < len; ++i) out[i] = stable_sigmoid(in[i]);
      break;
    case Op::square:
      for (std::size_t i = 0; i < len; ++i) out[i] = in[i] * in[i];
      break;
    case Op::sqrt:
      for (std::size_t i = 0; i < len; ++i) {
        if (!(in[i] >= 0.0)) {
          const double bad = in[i];
          nodes_.pop_back();
          values_.resize(values_.size() - len);
          throw DomainError(op, bad);
        }
        out[i] = std::sqrt(in[i]);
      }
      break;
    default:
      throw ShapeError("not a unary op: " + std::string(op_name(op)));
  }
  return {this, id};
}

Var Tape::binary(Op op, const Var& x, const Var& y) {
  check_owned(x);
  check_owned(y);
  const Node& nx = nodes_[x.index()];
  const Node& ny = nodes_[y.index()];
  Node n;
  n.op = op;
  n.a = x.index();
  n.b = y.index();
  n.needs_grad = nx.needs_grad || ny.needs_grad;

  switch (op) {
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
    case Op::dot:
      if (nx.length != ny.length) {
        throw ShapeError("length mismatch in '" + std::string(op_name(op)) + "': " +
                         std::to_string(nx.length) + " vs " + std::to_string(ny.length));
      }
      n.length = op == Op::dot ? 1 : nx.length;
      break;
    case Op::scale:
      if (nx.length != 1) throw ShapeError("scale expects a scalar first operand");
      n.length = ny.length;
      break;
    default:
      throw ShapeError("not a binary op: " + std::string(op_name(op)));
  }

  if (op == Op::div) {
    const double* den = values_.data() + ny.offset;
    for (std::size_t i = 0; i < ny.length; ++i) {
      if (den[i] == 0.0) throw DomainError(op, den[i]);
    }
  }

  const std::uint32_t id = push(n);
  const double* a = values_.data() + nodes_[n.a].offset;
  const double* b = values_.data() + nodes_[n.b].offset;
  double* out = values_.data() + nodes_[id].offset;
  const std::size_t len = nodes_[n.a].length;
  switch (op) {
    case Op::add:
      for (std::size_t i = 0; i < len; ++i) out[i] = a[i] + b[i];
      break;
    case Op::sub:
      for (std::size_t i = 0; i < len; ++i) out[i] = a[i] - b[i];
      break;
    case Op::mul:
      for (std::size_t i = 0; i < len; ++i) out[i] = a[i] * b[i];
      break;
    case Op::div:
      for (std::size_t i = 0; i < len; ++i) out[i] = a[i] / b[i];
      break;
    case Op::dot: {
      double acc = 0.0;
      for (std::size_t i = 0; i < len; ++i) acc += a[i] * b[i];
      out[0] = acc;
      break;
    }
    case Op::scale: {
      const double s = a[0];
      const std::size_t m = nodes_[n.b].length;
      for (std::size_t i = 0; i < m; ++i) out[i] = s * b[i];
      break;
    }
    default:
      break;
  }
  return {this, id};
}

Var Tape::apply(Op op, std::span<const Var> args) {
  auto need = [&](std::size_t k) {
    if (args.size() != k) {
      throw ShapeError("'" + std::string(op_name(op)) + "' expects " + std::to_string(k) +
                       " operands, got " + std::to_string(args.size()));
    }
  };
  switch (op) {
    case Op::neg:
    case Op::exp:
    case Op::log:
    case Op::tanh:
    case Op::softplus:
    case Op::sigmoid:
    case Op::square:
    case Op::sqrt:
      need(1);
      return unary(op, args[0]);
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
    case Op::dot:
    case Op::scale:
      need(2);
      return binary(op, args[0], args[1]);
    case Op::sum: {
      need(1);
      check_owned(args[0]);
      Node n;
      n.op = Op::sum;
      n.a = args[0].index();
      n.needs_grad = nodes_[n.a].needs_grad;
      n.length = 1;
      const std::uint32_t id = push(n);
      const Node& in = nodes_[n.a];
      double acc = 0.0;
      for (std::size_t i = 0; i < in.length; ++i) acc += values_[in.offset + i];
      values_[nodes_[id].offset] = acc;
      return {this, id};
    }
    case Op::affine: {
      need(3);
      for (const Var& v : args) check_owned(v);
      const std::size_t rows = nodes_[args[2].index()].length;
      const std::size_t cols = nodes_[args[1].index()].length;
      if (nodes_[args[0].index()].length != rows * cols) {
        throw ShapeError("affine: weight size " + std::to_string(nodes_[args[0].index()].length) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
      }
      Node n;
      n.op = Op::affine;
      n.a = args[0].index();
      n.b = args[1].index();
      n.c = args[2].index();
      n.needs_grad =
          nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
      n.length = static_cast<std::uint32_t>(rows);
      const std::uint32_t id = push(n);
      const double* w = values_.data() + nodes_[n.a].offset;
      const double* x = values_.data() + nodes_[n.b].offset;
      const double* b = values_.data() + nodes_[n.c].offset;
      double* out = values_.data() + nodes_[id].offset;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w + r * cols;
        double acc = b[r];
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
      }
      return {this, id};
    }
    case Op::concat:
      return record_concat(args);
    default:
      throw ShapeError("'" + std::string(op_name(op)) +
                       "' needs shape arguments; use its dedicated recorder");
  }
}

Var Tape::record_slice(const Var& v, std::size_t offset, std::size_t length) {
  check_owned(v);
  const Node& in = nodes_[v.index()];
  if (length == 0 || offset + length > in.length) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for length " + std::to_string(in.length));
  }
  Node n;
  n.op = Op::slice;
  n.a = v.index();
  n.needs_grad = in.needs_grad;
  n.length = static_cast<std::uint32_t>(length);
  n.aux_offset = static_cast<std::uint32_t>(offset);
  const std::uint32_t id = push(n);
  const double* src = values_.data() + nodes_[n.a].offset + offset;
  std::copy(src, src + length, values_.begin() + nodes_[id].offset);
  return {this, id};
}

Var Tape::record_concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero parts");
  Node n;
  n.op = Op::concat;
  n.aux_offset = static_cast<std::uint32_t>(aux_.size());
  n.aux_length = static_cast<std::uint32_t>(parts.size());
  std::size_t total = 0;
  for (const Var& p : parts) {
    check_owned(p);
    aux_.push_back(p.index());
    total += nodes_[p.index()].length;
    n.needs_grad = n.needs_grad || nodes_[p.index()].needs_grad;
  }
  n.length = static_cast<std::uint32_t>(total);
  const std::uint32_t id = push(n);
  std::size_t pos = nodes_[id].offset;
  for (const Var& p : parts) {
    const Node& in = nodes_[p.index()];
    std::copy(values_.begin() + in.offset, values_.begin() + in.offset + in.length,
              values_.begin() + pos);
    pos += in.length;
  }
  return {this, id};
}

Var Tape::record_gather(const Var& v, std::span<const std::uint32_t> indices) {
  check_owned(v);
  if (indices.empty()) throw ShapeError("gather with no indices");
  const std::uint32_t len = nodes_[v.index()].length;
  for (auto i : indices) {
    if (i >= len) throw ShapeError("gather index " + std::to_string(i) + " out of range");
  }
  Node n;
  n.op = Op::gather;
  n.a = v.index();
  n.needs_grad = nodes_[n.a].needs_grad;
  n.length = static_cast<std::uint32_t>(indices.size());
  n.aux_offset = static_cast<std::uint32_t>(aux_.size());
  n.aux_length = n.length;
  aux_.insert(aux_.end(), indices.begin(), indices.end());
  const std::uint32_t id = push(n);
  const double* src = values_.data() + nodes_[n.a].offset;
  double* out = values_.data() + nodes_[id].offset;
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = src[indices[i]];
  return {this, id};
}

Var Tape::record_scatter(const Var& v, std::span<const std::uint32_t> indices, std::size_t n_out) {
  check_owned(v);
  if (indices.size() != nodes_[v.index()].length) {
    throw ShapeError("scatter: index count does not match operand length");
  }
  for (auto i : indices) {
    if (i >= n_out) throw ShapeError("scatter index " + std::to_string(i) + " out of range");
  }
  Node n;
  n.op = Op::scatter;
  n.a = v.index();
  n.needs_grad = nodes_[n.a].needs_grad;
  n.length = static_cast<std::uint32_t>(n_out);
  n.aux_offset = static_cast<std::uint32_t>(aux_.size());
  n.aux_length = static_cast<std::uint32_t>(indices.size());
  aux_.insert(aux_.end(), indices.begin(), indices.end());
  const std::uint32_t id = push(n);
  const double* src = values_.data() + nodes_[n.a].offset;
  double* out = values_.data() + nodes_[id].offset;
  std::fill(out, out + n_out, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] += src[i];
  return {this, id};
}

Var Tape::record_matvec(const ConstMatrix& m, const Var& x, bool transposed) {
  check_owned(x);
  const std::size_t in_len = transposed ? m.rows : m.cols;
  const std::size_t out_len = transposed ? m.cols : m.rows;
  if (nodes_[x.index()].length != in_len) {
    throw ShapeError("matvec: operand length " + std::to_string(nodes_[x.index()].length) +
                     " does not match matrix " + std::to_string(m.rows) + "x" +
                     std::to_string(m.cols));
  }
  Node n;
  n.op = transposed ? Op::matvec_t : Op::matvec;
  n.a = x.index();
  n.needs_grad = nodes_[n.a].needs_grad;
  n.length = static_cast<std::uint32_t>(out_len);
  n.matrix = &m;
  const std::uint32_t id = push(n);
  const double* xv = values_.data() + nodes_[n.a].offset;
  double* out = values_.data() + nodes_[id].offset;
  if (!transposed) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      const double* row = m.data.data() + r * m.cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * xv[c];
      out[r] = acc;
    }
  } else {
    std::fill(out, out + out_len, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
      const double* row = m.data.data() + r * m.cols;
      const double xr = xv[r];
      for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * xr;
    }
  }
  return {this, id};
}

// ---------------------------------------------------------------------------
// Reverse sweep

void Tape::backward(const Var& loss) {
  check_owned(loss);
  if (nodes_[loss.index()].length != 1) {
    throw ShapeError("backward() needs a scalar loss, got length " +
                     std::to_string(nodes_[loss.index()].length));
  }
  adjoints_.assign(values_.size(), 0.0);
  adjoints_[nodes_[loss.index()].offset] = 1.0;
  for (std::int64_t i = loss.index(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::leaf || !n.needs_grad) continue;
    propagate(n, static_cast<std::uint32_t>(i));
  }
}

void Tape::propagate(const Node& n, std::uint32_t) {
  const double* g = adjoints_.data() + n.offset;
  const double* y = values_.data() + n.offset;
  const std::size_t len = n.length;

  auto grad_of = [&](std::uint32_t idx) -> double* {
    return nodes_[idx].needs_grad ? adjoints_.data() + nodes_[idx].offset : nullptr;
  };
  auto val_of = [&](std::uint32_t idx) -> const double* {
    return values_.data() + nodes_[idx].offset;
  };

  switch (n.op) {
    case Op::add: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i];
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < len; ++i) gb[i] += g[i];
      break;
    }
    case Op::sub: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i];
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < len; ++i) gb[i] -= g[i];
      break;
    }
    case Op::mul: {
      const double* a = val_of(n.a);
      const double* b = val_of(n.b);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * b[i];
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < len; ++i) gb[i] += g[i] * a[i];
      break;
    }
    case Op::div: {
      const double* b = val_of(n.b);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] / b[i];
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < len; ++i) gb[i] -= g[i] * y[i] / b[i];
      break;
    }
    case Op::neg: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] -= g[i];
      break;
    }
    case Op::exp: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * y[i];
      break;
    }
    case Op::log: {
      const double* a = val_of(n.a);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] / a[i];
      break;
    }
    case Op::tanh: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::softplus: {
      const double* a = val_of(n.a);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * stable_sigmoid(a[i]);
      break;
    }
    case Op::sigmoid: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::square: {
      const double* a = val_of(n.a);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[i] += 2.0 * g[i] * a[i];
      break;
    }
    case Op::sqrt: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) {
          if (g[i] != 0.0) ga[i] += 0.5 * g[i] / y[i];
        }
      break;
    }
    case Op::dot: {
      const std::size_t m = nodes_[n.a].length;
      const double* a = val_of(n.a);
      const double* b = val_of(n.b);
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[0] * b[i];
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < m; ++i) gb[i] += g[0] * a[i];
      break;
    }
    case Op::scale: {
      const double s = val_of(n.a)[0];
      const double* v = val_of(n.b);
      if (double* ga = grad_of(n.a)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < len; ++i) acc += g[i] * v[i];
        ga[0] += acc;
      }
      if (double* gb = grad_of(n.b))
        for (std::size_t i = 0; i < len; ++i) gb[i] += g[i] * s;
      break;
    }
    case Op::sum: {
      if (double* ga = grad_of(n.a)) {
        const std::size_t m = nodes_[n.a].length;
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[0];
      }
      break;
    }
    case Op::affine: {
      const std::size_t rows = len;
      const std::size_t cols = nodes_[n.b].length;
      const double* w = val_of(n.a);
      const double* x = val_of(n.b);
      if (double* gw = grad_of(n.a)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          double* gwr = gw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gwr[c] += gr * x[c];
        }
      }
      if (double* gx = grad_of(n.b)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const double* wr = w + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gx[c] += gr * wr[c];
        }
      }
      if (double* gb = grad_of(n.c))
        for (std::size_t r = 0; r < rows; ++r) gb[r] += g[r];
      break;
    }
    case Op::matvec: {
      const ConstMatrix& m = *n.matrix;
      if (double* gx = grad_of(n.a)) {
        for (std::size_t r = 0; r < m.rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = m.data.data() + r * m.cols;
          for (std::size_t c = 0; c < m.cols; ++c) gx[c] += gr * row[c];
        }
      }
      break;
    }
    case Op::matvec_t: {
      const ConstMatrix& m = *n.matrix;
      if (double* gx = grad_of(n.a)) {
        for (std::size_t r = 0; r < m.rows; ++r) {
          const double* row = m.data.data() + r * m.cols;
          double acc = 0.0;
          for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * g[c];
          gx[r] += acc;
        }
      }
      break;
    }
    case Op::slice: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[n.aux_offset + i] += g[i];
      break;
    }
    case Op::concat: {
      std::size_t pos = 0;
      for (std::uint32_t k = 0; k < n.aux_length; ++k) {
        const std::uint32_t part = aux_[n.aux_offset + k];
        const std::size_t plen = nodes_[part].length;
        if (double* gp = grad_of(part))
          for (std::size_t i = 0; i < plen; ++i) gp[i] += g[pos + i];
        pos += plen;
      }
      break;
    }
    case Op::gather: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < len; ++i) ga[aux_[n.aux_offset + i]] += g[i];
      break;
    }
    case Op::scatter: {
      if (double* ga = grad_of(n.a))
        for (std::size_t i = 0; i < n.aux_length; ++i) ga[i] += g[aux_[n.aux_offset + i]];
      break;
    }
    case Op::leaf:
      break;
  }
}

// ---------------------------------------------------------------------------
// Free functions

namespace {
Tape& tape_of(const Var& v) {
  if (!v.valid()) throw ShapeError("operation on an empty Var");
  return *v.tape();
}
}  // namespace

Var operator+(const Var& a, const Var& b) {
  const Var args[] = {a, b};
  return tape_of(a).apply(Op::add, args);
}
Var operator-(const Var& a, const Var& b) {
  const Var args[] = {a, b};
  return tape_of(a).apply(Op::sub, args);
}
Var operator*(const Var& a, const Var& b) {
  const Var args[] = {a, b};
  return tape_of(a).apply(Op::mul, args);
}
Var operator/(const Var& a, const Var& b) {
  const Var args[] = {a, b};
  return tape_of(a).apply(Op::div, args);
}
Var operator-(const Var& a) { return tape_of(a).apply(Op::neg, std::span<const Var>(&a, 1)); }

Var exp(const Var& x) { return tape_of(x).apply(Op::exp, std::span<const Var>(&x, 1)); }
Var log(const Var& x) { return tape_of(x).apply(Op::log, std::span<const Var>(&x, 1)); }
Var tanh(const Var& x) { return tape_of(x).apply(Op::tanh, std::span<const Var>(&x, 1)); }
Var softplus(const Var& x) { return tape_of(x).apply(Op::softplus, std::span<const Var>(&x, 1)); }
Var sigmoid(const Var& x) { return tape_of(x).apply(Op::sigmoid, std::span<const Var>(&x, 1)); }
Var square(const Var& x) { return tape_of(x).apply(Op::square, std::span<const Var>(&x, 1)); }
Var sqrt(const Var& x) { return tape_of(x).apply(Op::sqrt, std::span<const Var>(&x, 1)); }
Var sum(const Var& x) { return tape_of(x).apply(Op::sum, std::span<const Var>(&x, 1)); }

Var dot(const Var& a, const Var& b) {
  const Var args[] = {a, b};
  return tape_of(a).apply(Op::dot, args);
}

Var scale(const Var& s, const Var& v) {
  const Var args[] = {s, v};
  return tape_of(s).apply(Op::scale, args);
}

Var scale(double s, const Var& v) { return scale(tape_of(v).lift(s), v); }

Var affine(const Var& w, const Var& x, const Var& b) {
  const Var args[] = {w, x, b};
  return tape_of(w).apply(Op::affine, args);
}

Var matvec(const ConstMatrix& m, const Var& x) { return tape_of(x).record_matvec(m, x, false); }
Var matvec_t(const ConstMatrix& m, const Var& x) { return tape_of(x).record_matvec(m, x, true); }

Var slice(const Var& v, std::size_t offset, std::size_t length) {
  return tape_of(v).record_slice(v, offset, length);
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero parts");
  return tape_of(parts[0]).record_concat(parts);
}

Var gather(const Var& v, std::span<const std::uint32_t> indices) {
  return tape_of(v).record_gather(v, indices);
}

Var scatter(const Var& v, std::span<const std::uint32_t> indices, std::size_t n) {
  return tape_of(v).record_scatter(v, indices, n);
}

Var constant_like(const Var& anchor, double value) { return tape_of(anchor).lift(value); }

Var add_scalar(const Var& v, const Var& s) {
  std::vector<double> ones(v.size(), 1.0);
  return v + scale(s, tape_of(v).lift(ones));
}

Var gaussian_logpdf(const Var& x, const Var& mean, const Var& var) {
  if (var.size() != 1) throw ShapeError("gaussian_logpdf expects a scalar variance");
  if (!(var.scalar() > 0.0)) throw DomainError(Op::log, var.scalar());
  const double n = static_cast<double>(x.size());
  const Var r = x - mean;
  const Var quad = dot(r, r);
  const Var log_norm = scale(-0.5 * n, log(scale(2.0 * std::numbers::pi, var)));
  return log_norm - quad / scale(2.0, var);
}

Var gaussian_logpdf(const Var& x, const Var& mean, double var) {
  if (!(var > 0.0)) throw DomainError(Op::log, var);
  const double n = static_cast<double>(x.size());
  const Var r = x - mean;
  const Var quad = dot(r, r);
  Tape& t = tape_of(x);
  return t.lift(-0.5 * n * std::log(2.0 * std::numbers::pi * var)) - scale(0.5 / var, quad);
}

Var standard_normal_logpdf(const Var& x) {
  const double n = static_cast<double>(x.size());
  Tape& t = tape_of(x);
  return t.lift(-0.5 * n * std::log(2.0 * std::numbers::pi)) - scale(0.5, dot(x, x));
}

}  // namespace ldvi::ad
