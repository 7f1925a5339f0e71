#pragma once

// Named parameter blocks (all trainable quantities of a run) and the binary
// checkpoint format:
//   "LDVICKPT" | u64 LE header length | JSON header | LE float64 payload
// The header lists {name, shape, offset} per block, offsets in doubles.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ldvi {

struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

class ParameterSet {
 public:
  ParamBlock& add(const std::string& name, std::vector<std::size_t> shape, std::vector<double> values);

  bool contains(const std::string& name) const;
  const ParamBlock& at(const std::string& name) const;
  ParamBlock& at(const std::string& name);
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  std::size_t total_size() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

 private:
  std::vector<ParamBlock> blocks_;
};

void write_checkpoint(const ParameterSet& params, const std::string& path);
ParameterSet read_checkpoint(const std::string& path);

/// softplus⁻¹(y) for y > 0.
double inverse_softplus(double y);

}  // namespace ldvi
