#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "mvsde/errors.hpp"
#include "mvsde/sde.hpp"

namespace mvsde {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'S', 'D', 'E', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_number(std::ostream& out, double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.write(buf.data(), res.ptr - buf.data());
}

template <class T>
void put_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <class T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&value, bytes.data(), sizeof(T));
  return true;
}

}  // namespace

void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& out) {
  const std::size_t d = ensemble.dim;
  out << "time,particle";
  for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
  for (std::size_t j = 0; j < d; ++j) out << ",k" << j;
  out << ",k_tv\n";
  for (std::size_t r = 0; r < ensemble.records(); ++r) {
    for (std::size_t i = 0; i < ensemble.particles; ++i) {
      put_number(out, ensemble.time(r));
      out << ',' << i;
      for (double v : ensemble.state(i, r)) {
        out << ',';
        put_number(out, v);
      }
      for (double v : ensemble.reaction(i, r)) {
        out << ',';
        put_number(out, v);
      }
      out << ',';
      put_number(out, ensemble.total_variation(i, r));
      out << '\n';
    }
  }
}

void write_ensemble_binary(const PathEnsemble& ensemble, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ensemble.dim));
  put_le<std::uint64_t>(out, ensemble.particles);
  put_le<std::uint64_t>(out, ensemble.steps);
  for (std::size_t r = 0; r < ensemble.records(); ++r) {
    for (std::size_t i = 0; i < ensemble.particles; ++i) {
      put_le(out, ensemble.time(r));
      put_le(out, static_cast<double>(i));
      for (double v : ensemble.state(i, r)) put_le(out, v);
      for (double v : ensemble.reaction(i, r)) put_le(out, v);
      put_le(out, ensemble.total_variation(i, r));
    }
  }
}

PathEnsemble read_ensemble_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ConfigError("not an ensemble dump (bad magic)");
  std::uint32_t version = 0, dim = 0;
  std::uint64_t particles = 0, steps = 0;
  if (!get_le(in, version) || !get_le(in, dim) || !get_le(in, particles) || !get_le(in, steps))
    throw ConfigError("truncated ensemble header");
  if (version != kVersion) throw ConfigError("unsupported ensemble dump version");
  if (dim == 0 || particles == 0) throw ConfigError("empty ensemble dump");

  const std::size_t row = 2 + 2 * dim + 1;
  std::vector<double> rows;
  double v = 0.0;
  while (get_le(in, v)) rows.push_back(v);
  if (rows.size() % (row * particles) != 0) throw ConfigError("truncated ensemble rows");
  const std::size_t records = rows.size() / (row * particles);
  if (records == 0) throw ConfigError("ensemble dump has no rows");

  PathEnsemble ens;
  ens.dim = dim;
  ens.particles = particles;
  ens.steps = steps;
  const double horizon = rows[(records - 1) * particles * row];
  ens.dt = steps > 0 ? horizon / static_cast<double>(steps) : 0.0;
  ens.recorded_steps.resize(records);
  ens.x.resize(particles * records * dim);
  ens.k.resize(particles * records * dim);
  ens.k_tv.resize(particles * records);
  for (std::size_t r = 0; r < records; ++r) {
    const double t = rows[r * particles * row];
    ens.recorded_steps[r] = ens.dt > 0.0 ? static_cast<std::size_t>(std::llround(t / ens.dt)) : 0;
    for (std::size_t i = 0; i < particles; ++i) {
      const double* src = rows.data() + (r * particles + i) * row;
      const std::size_t base = i * records + r;
      std::copy(src + 2, src + 2 + dim, ens.x.begin() + static_cast<std::ptrdiff_t>(base * dim));
      std::copy(src + 2 + dim, src + 2 + 2 * dim, ens.k.begin() + static_cast<std::ptrdiff_t>(base * dim));
      ens.k_tv[base] = src[2 + 2 * dim];
    }
  }
  return ens;
}

}  // namespace mvsde
