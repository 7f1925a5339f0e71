#include "ldvi/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ldvi {

namespace {

constexpr char kMagic[8] = {'L', 'D', 'V', 'I', 'C', 'K', 'P', 'T'};

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

}  // namespace

ParamBlock& ParameterSet::add(const std::string& name, std::vector<std::size_t> shape,
                              std::vector<double> values) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter block '" + name + "'");
  if (product(shape) != values.size()) {
    throw std::invalid_argument("parameter block '" + name + "': shape does not match value count");
  }
  blocks_.push_back({name, std::move(shape), std::move(values)});
  return blocks_.back();
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

const ParamBlock& ParameterSet::at(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block '" + name + "'");
}

ParamBlock& ParameterSet::at(const std::string& name) {
  return const_cast<ParamBlock&>(static_cast<const ParameterSet&>(*this).at(name));
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.values.size();
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& b : blocks_) out.insert(out.end(), b.values.begin(), b.values.end());
  return out;
}

void ParameterSet::unflatten(std::span<const double> flat) {
  if (flat.size() != total_size()) throw std::invalid_argument("flat parameter vector has wrong length");
  std::size_t pos = 0;
  for (auto& b : blocks_) {
    std::copy(flat.begin() + pos, flat.begin() + pos + b.values.size(), b.values.begin());
    pos += b.values.size();
  }
}

void write_checkpoint(const ParameterSet& params, const std::string& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["blocks"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : params.blocks()) {
    header["blocks"].push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}});
    offset += b.values.size();
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = byteswap_if_big<std::uint64_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : params.blocks()) {
    for (double v : b.values) {
      const double le = byteswap_if_big(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(le));
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

ParameterSet read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  len = byteswap_if_big(len);
  if (!in || len > (1u << 26)) throw std::runtime_error("corrupt checkpoint header in '" + path + "'");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header in '" + path + "'");

  const auto header = nlohmann::json::parse(text);
  ParameterSet params;
  for (const auto& b : header.at("blocks")) {
    auto shape = b.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> values(product(shape));
    for (auto& v : values) {
      double le = 0.0;
      in.read(reinterpret_cast<char*>(&le), sizeof(le));
      v = byteswap_if_big(le);
    }
    if (!in) throw std::runtime_error("truncated checkpoint payload in '" + path + "'");
    params.add(b.at("name").get<std::string>(), std::move(shape), std::move(values));
  }
  return params;
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus needs a positive argument");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

}  // namespace ldvi
