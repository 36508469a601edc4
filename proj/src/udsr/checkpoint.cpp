#include "udsr/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace udsr {

namespace {

constexpr char kMagic[8] = {'U', 'D', 'S', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kFlagAdam = 1u;

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void put_u32(FILE* f, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  require(std::fwrite(b, 1, 4, f) == 4, "checkpoint: write failed");
}

void put_u64(FILE* f, uint64_t v) {
  put_u32(f, uint32_t(v));
  put_u32(f, uint32_t(v >> 32));
}

void put_f32(FILE* f, const float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(f, bits);
  }
}

uint32_t get_u32(FILE* f) {
  uint8_t b[4];
  require(std::fread(b, 1, 4, f) == 4, "checkpoint: unexpected end of file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint64_t get_u64(FILE* f) {
  uint64_t lo = get_u32(f);
  uint64_t hi = get_u32(f);
  return lo | hi << 32;
}

void get_f32(FILE* f, float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits = get_u32(f);
    std::memcpy(&data[i], &bits, 4);
  }
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<ad::Parameter<float>*>& params,
                     bool include_adam) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, "cannot open checkpoint for writing: " + path);
  require(std::fwrite(kMagic, 1, 8, f.get()) == 8, "checkpoint: write failed");
  put_u32(f.get(), kVersion);
  put_u32(f.get(), include_adam ? kFlagAdam : 0);
  put_u32(f.get(), uint32_t(params.size()));
  for (const auto* p : params) {
    put_u32(f.get(), uint32_t(p->name.size()));
    require(std::fwrite(p->name.data(), 1, p->name.size(), f.get()) ==
                p->name.size(),
            "checkpoint: write failed");
    const ad::Shape& s = p->value.shape;
    put_u32(f.get(), 4);
    put_u32(f.get(), uint32_t(s.n));
    put_u32(f.get(), uint32_t(s.c));
    put_u32(f.get(), uint32_t(s.h));
    put_u32(f.get(), uint32_t(s.w));
    put_f32(f.get(), p->value.v.data(), p->count());
    if (include_adam) {
      put_u64(f.get(), uint64_t(p->steps));
      put_f32(f.get(), p->m.v.data(), p->count());
      put_f32(f.get(), p->v.v.data(), p->count());
    }
  }
}

void load_checkpoint(const std::string& path,
                     const std::vector<ad::Parameter<float>*>& params) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, "cannot open checkpoint: " + path);
  char magic[8];
  require(std::fread(magic, 1, 8, f.get()) == 8 &&
              std::memcmp(magic, kMagic, 8) == 0,
          "not a checkpoint file: " + path);
  uint32_t version = get_u32(f.get());
  require(version == kVersion,
          "unsupported checkpoint version " + std::to_string(version));
  uint32_t flags = get_u32(f.get());
  uint32_t count = get_u32(f.get());
  require(count == params.size(),
          "checkpoint parameter count mismatch: file has " +
              std::to_string(count) + ", expected " +
              std::to_string(params.size()));
  for (auto* p : params) {
    uint32_t name_len = get_u32(f.get());
    std::string name(name_len, '\0');
    require(std::fread(name.data(), 1, name_len, f.get()) == name_len,
            "checkpoint: unexpected end of file");
    require(name == p->name, "checkpoint parameter name mismatch: file has '" +
                                 name + "', expected '" + p->name + "'");
    uint32_t ndim = get_u32(f.get());
    require(ndim == 4, "checkpoint: unexpected rank");
    ad::Shape s;
    s.n = int(get_u32(f.get()));
    s.c = int(get_u32(f.get()));
    s.h = int(get_u32(f.get()));
    s.w = int(get_u32(f.get()));
    require(s == p->value.shape, "checkpoint shape mismatch for '" + p->name +
                                     "': file has " + s.str() + ", expected " +
                                     p->value.shape.str());
    get_f32(f.get(), p->value.v.data(), p->count());
    if (flags & kFlagAdam) {
      p->steps = int64_t(get_u64(f.get()));
      get_f32(f.get(), p->m.v.data(), p->count());
      get_f32(f.get(), p->v.v.data(), p->count());
    }
  }
}

}  // namespace udsr
