#include "mpa/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mpa {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_string(os, t.name);
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (const int d : t.dims) put_u32(os, static_cast<std::uint32_t>(d));
  for (const float f : t.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw StateError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

std::string get_string(std::istream& is, std::uint32_t len) {
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw StateError("checkpoint truncated");
  return s;
}

Tensor get_tensor_body(std::istream& is, std::string name) {
  Tensor t;
  t.name = std::move(name);
  const std::uint32_t rank = get_u32(is);
  std::size_t elems = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(is);
    t.dims.push_back(static_cast<int>(d));
    elems *= d;
  }
  t.data.resize(elems);
  for (std::size_t i = 0; i < elems; ++i) {
    const std::uint32_t bits = get_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    t.data[i] = f;
  }
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open checkpoint for writing: " + path);
  os.write("MPAK", 4);
  put_u32(os, kCheckpointVersion);
  for (const Tensor& t : ckpt.params) put_tensor(os, t);
  put_u32(os, 0);  // end of parameter records
  put_u32(os, static_cast<std::uint32_t>(ckpt.velocities.size()));
  for (const Tensor& t : ckpt.velocities) put_tensor(os, t);
  put_u64(os, ckpt.epoch);
  put_string(os, ckpt.rng_state);
  put_string(os, ckpt.fingerprint);
  os.flush();
  if (!os) throw StateError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MPAK", 4) != 0) {
    throw StateError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw StateError("unsupported checkpoint version " +
                     std::to_string(version));
  }
  Checkpoint ckpt;
  for (;;) {
    const std::uint32_t name_len = get_u32(is);
    if (name_len == 0) break;
    std::string name = get_string(is, name_len);
    ckpt.params.push_back(get_tensor_body(is, std::move(name)));
  }
  const std::uint32_t n_vel = get_u32(is);
  for (std::uint32_t i = 0; i < n_vel; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name = get_string(is, name_len);
    ckpt.velocities.push_back(get_tensor_body(is, std::move(name)));
  }
  ckpt.epoch = get_u64(is);
  ckpt.rng_state = get_string(is, get_u32(is));
  ckpt.fingerprint = get_string(is, get_u32(is));
  return ckpt;
}

Checkpoint snapshot(const Scorer& scorer, const OptimizerState& opt,
                    std::uint64_t epoch, const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.params = scorer.parameters();
  ckpt.velocities = opt.velocity;
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  ckpt.fingerprint = scorer.config_fingerprint();
  return ckpt;
}

void restore(const Checkpoint& ckpt, Scorer& scorer, OptimizerState* opt) {
  if (ckpt.fingerprint != scorer.config_fingerprint()) {
    throw StateError("checkpoint was produced by a different model config: " +
                     ckpt.fingerprint);
  }
  scorer.set_parameters(ckpt.params);
  if (opt != nullptr) {
    if (ckpt.velocities.empty()) {
      *opt = make_optimizer_state(scorer);
    } else {
      opt->velocity = ckpt.velocities;
    }
  }
}

}  // namespace mpa
