#include "bsde/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bsde {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'D', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64(os, v);
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_f64s(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  for (double x : v) put_f64(os, x);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

std::vector<double> get_f64s(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  std::vector<double> v(n);
  for (double& x : v) x = get_f64(is);
  return v;
}

}  // namespace

void save_params(std::ostream& os, const ParameterSet& params) {
  put_u32(os, static_cast<std::uint32_t>(params.layout.size()));
  for (const Segment& s : params.layout) {
    put_str(os, s.name);
    put_u64(os, s.offset);
    put_u32(os, static_cast<std::uint32_t>(s.shape.size()));
    for (std::size_t e : s.shape) put_u64(os, e);
    put_u32(os, static_cast<std::uint32_t>(s.kind));
  }
  put_f64s(os, params.theta);
}

ParameterSet load_params(std::istream& is) {
  ParameterSet ps;
  const std::uint32_t nseg = get_u32(is);
  ps.layout.resize(nseg);
  for (Segment& s : ps.layout) {
    s.name = get_str(is);
    s.offset = get_u64(is);
    const std::uint32_t rank = get_u32(is);
    s.shape.resize(rank);
    for (std::size_t& e : s.shape) e = get_u64(is);
    s.kind = static_cast<SegmentKind>(get_u32(is));
  }
  ps.theta = get_f64s(is);
  return ps;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    save_params(os, ck.params);
    os.put(ck.has_adam ? 1 : 0);
    if (ck.has_adam) {
      put_f64s(os, ck.adam_m);
      put_f64s(os, ck.adam_v);
      put_u64(os, ck.adam_k);
    }
    put_u64(os, ck.step);
    put_u32(os, static_cast<std::uint32_t>(ck.bn.size()));
    for (const BatchNormState& st : ck.bn) {
      put_f64s(os, st.running_mean);
      put_f64s(os, st.running_var);
      put_f64(os, st.momentum);
      put_f64(os, st.eps);
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (get_u32(is) != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  Checkpoint ck;
  ck.params = load_params(is);
  ck.has_adam = is.get() == 1;
  if (ck.has_adam) {
    ck.adam_m = get_f64s(is);
    ck.adam_v = get_f64s(is);
    ck.adam_k = get_u64(is);
  }
  ck.step = get_u64(is);
  const std::uint32_t nbn = get_u32(is);
  ck.bn.resize(nbn);
  for (BatchNormState& st : ck.bn) {
    st.running_mean = get_f64s(is);
    st.running_var = get_f64s(is);
    st.momentum = get_f64(is);
    st.eps = get_f64(is);
  }
  if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return ck;
}

}  // namespace bsde
