#pragma once

// Reverse-mode automatic differentiation over a dynamically recorded tape of
// vector-valued operations. A fresh Tape is built for every estimate; random
// draws enter only as constants.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldvi::ad {

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  tanh,
  softplus,
  sigmoid,
  square,
  sqrt,
  dot,
  scale,
  sum,
  affine,
  matvec,
  matvec_t,
  slice,
  concat,
  gather,
  scatter,
};

std::string_view op_name(Op op);

/// Raised when an operand falls outside an operation's domain, e.g. log of a
/// non-positive primal.
class DomainError : public std::domain_error {
 public:
  DomainError(Op op, double primal);
  Op op() const { return op_; }
  double primal() const { return primal_; }

 private:
  Op op_;
  double primal_;
};

/// Shape or usage errors (mismatched lengths, vector loss, foreign tape).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major matrix that lives outside the tape (datasets).
struct ConstMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

class Tape;

/// Handle to a node on a Tape. A size-1 Var doubles as a scalar.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }
  std::size_t size() const;
  /// Valid until the next operation is recorded on the same tape.
  std::span<const double> value() const;
  double scalar() const;
  std::vector<double> to_vector() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a leaf. Trainable leaves get a parameter slot that receives an
  /// adjoint on backward(). Non-finite values are rejected.
  Var lift(double value, bool trainable = false);
  Var lift(std::span<const double> values, bool trainable = false);
  Var lift(std::initializer_list<double> values, bool trainable = false);
  Var zeros(std::size_t n);

  /// Generic entry point; shape-specific ops (slice, gather, scatter, matvec)
  /// have dedicated recorders below.
  Var apply(Op op, std::span<const Var> args);

  Var record_slice(const Var& v, std::size_t offset, std::size_t length);
  Var record_concat(std::span<const Var> parts);
  Var record_gather(const Var& v, std::span<const std::uint32_t> indices);
  Var record_scatter(const Var& v, std::span<const std::uint32_t> indices, std::size_t n);
  Var record_matvec(const ConstMatrix& m, const Var& x, bool transposed);

  /// Populates adjoints of every node reachable from a scalar loss.
  void backward(const Var& loss);

  std::span<const double> adjoint(const Var& v) const;
  const std::vector<Var>& parameters() const { return parameters_; }
  std::size_t node_count() const { return nodes_.size(); }
  void reset();

  std::size_t size_of(std::uint32_t index) const { return nodes_[index].length; }
  std::span<const double> value_of(std::uint32_t index) const;

 private:
  struct Node {
    Op op = Op::leaf;
    bool needs_grad = false;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t c = 0;
    std::uint32_t offset = 0;
    std::uint32_t length = 0;
    std::uint32_t aux_offset = 0;
    std::uint32_t aux_length = 0;
    const ConstMatrix* matrix = nullptr;
  };

  std::uint32_t push(Node node);
  void check_owned(const Var& v) const;
  Var unary(Op op, const Var& x);
  Var binary(Op op, const Var& x, const Var& y);
  void propagate(const Node& node, std::uint32_t index);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::uint32_t> aux_;
  std::vector<Var> parameters_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var softplus(const Var& x);
Var sigmoid(const Var& x);
Var square(const Var& x);
Var sqrt(const Var& x);
Var dot(const Var& a, const Var& b);
/// Scalar `s` times vector `v`.
Var scale(const Var& s, const Var& v);
Var scale(double s, const Var& v);
Var sum(const Var& x);
/// W x + b with W stored row-major as a flat Var of b.size() * x.size().
Var affine(const Var& w, const Var& x, const Var& b);
Var matvec(const ConstMatrix& m, const Var& x);
Var matvec_t(const ConstMatrix& m, const Var& x);
Var slice(const Var& v, std::size_t offset, std::size_t length);
Var concat(std::initializer_list<Var> parts);
Var concat(std::span<const Var> parts);
Var gather(const Var& v, std::span<const std::uint32_t> indices);
Var scatter(const Var& v, std::span<const std::uint32_t> indices, std::size_t n);

Var constant_like(const Var& anchor, double value);
/// Scalar `s` added to every element of `v`.
Var add_scalar(const Var& v, const Var& s);

/// Σ_d [-½ log(2π var) - (x_d - mean_d)² / (2 var)] for a scalar variance.
Var gaussian_logpdf(const Var& x, const Var& mean, const Var& var);
Var gaussian_logpdf(const Var& x, const Var& mean, double var);
/// log N(x | 0, I).
Var standard_normal_logpdf(const Var& x);

}  // namespace ldvi::ad
