#include "core/serialize.h"

#include <cstring>
#include <fstream>

#include "core/errors.h"

namespace adatta {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'C', 'K', 'P', 'T', '0', '1'};

void wr_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void wr_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
void wr_str(std::ofstream& f, const std::string& s) {
  wr_u32(f, static_cast<uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t rd_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t rd_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string rd_str(std::ifstream& f) {
  const uint32_t len = rd_u32(f);
  if (len > (1u << 20)) throw IoError("checkpoint: corrupt string length");
  std::string s(len, '\0');
  f.read(s.data(), len);
  return s;
}

}  // namespace

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw IoError("checkpoint missing tensor: " + name);
  return it->second;
}

double Checkpoint::scalar(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.numel() != 1) throw IoError("checkpoint scalar expected: " + name);
  return t.at(0);
}

void Checkpoint::put_scalar(const std::string& name, double value) {
  tensors[name] = Tensor({1}, {value});
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  wr_str(f, ckpt.kind);
  wr_u64(f, ckpt.config_hash);
  wr_u64(f, ckpt.step);
  wr_u32(f, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    wr_str(f, name);
    wr_u32(f, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) {
      int64_t dd = d;
      f.write(reinterpret_cast<const char*>(&dd), 8);
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * 8));
  }
  if (!f) throw IoError("short write for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_kind,
                           uint64_t expected_hash, bool force) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not an ADCKPT01 checkpoint: " + path);
  Checkpoint ckpt;
  ckpt.kind = rd_str(f);
  ckpt.config_hash = rd_u64(f);
  ckpt.step = rd_u64(f);
  if (!expected_kind.empty() && ckpt.kind != expected_kind) {
    throw InvalidInput("checkpoint kind mismatch: expected '" + expected_kind +
                       "', file holds '" + ckpt.kind + "': " + path);
  }
  if (expected_hash != 0 && ckpt.config_hash != expected_hash && !force) {
    throw InvalidInput(
        "checkpoint config hash mismatch (trained under a different config); "
        "pass force to load anyway: " +
        path);
  }
  const uint32_t count = rd_u32(f);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = rd_str(f);
    const uint32_t ndim = rd_u32(f);
    if (ndim > 8) throw IoError("checkpoint: corrupt tensor rank");
    std::vector<int64_t> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) {
      int64_t dd = 0;
      f.read(reinterpret_cast<char*>(&dd), 8);
      shape[d] = dd;
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * 8));
    if (!f) throw IoError("checkpoint truncated: " + path);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

}  // namespace adatta
