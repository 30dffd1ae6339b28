#include "params.hpp"

#include <cstring>
#include <fstream>

namespace alca {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', 'P'};
constexpr uint16_t kVersion = 1;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void i32(int32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void bytes(const void* p, size_t n) { raw(p, n); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& what)
      : buf_(buf), what_(what) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint16_t u16() { uint16_t v; std::memcpy(&v, take(2), 2); return v; }
  uint32_t u32() { uint32_t v; std::memcpy(&v, take(4), 4); return v; }
  int32_t i32() { int32_t v; std::memcpy(&v, take(4), 4); return v; }
  float f32() { float v; std::memcpy(&v, take(4), 4); return v; }
  std::string str() {
    const uint32_t n = u32();
    const char* p = take(n);
    return std::string(p, n);
  }
  const char* take(size_t n) {
    ALCA_THROW_IF(pos_ + n > buf_.size(), ErrorKind::Data, what_,
                  ": truncated file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::string what_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ALCA_THROW_IF(!in, ErrorKind::Data, "cannot open '", path, "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ALCA_THROW_IF(!out, ErrorKind::Data, "cannot write '", path, "'");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  ALCA_THROW_IF(!out, ErrorKind::Data, "short write to '", path, "'");
}

void check_magic_and_crc(const std::string& buf, const std::string& path) {
  ALCA_THROW_IF(buf.size() < 10 || std::memcmp(buf.data(), kMagic, 4) != 0,
                ErrorKind::Data, "'", path, "' is not a checkpoint file");
  uint32_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  const uint32_t actual = crc32(buf.data(), buf.size() - 4);
  ALCA_THROW_IF(stored != actual, ErrorKind::Data, "'", path,
                "': checksum mismatch, file is corrupted");
}

}  // namespace

template <class S>
void save_checkpoint(const ParamStore<S>& store, const std::string& config_json,
                     const std::string& path) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.str(config_json);
  w.u32(static_cast<uint32_t>(store.size()));
  store.for_each([&](const std::string& name, const Tensor<S>& t, bool trainable) {
    w.str(name);
    w.u8(trainable ? 1 : 0);
    w.u8(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) w.u32(static_cast<uint32_t>(d));
    for (S v : t.data()) w.f32(static_cast<float>(v));
  });
  std::string payload = w.buffer();
  const uint32_t crc = crc32(payload.data(), payload.size());
  payload.append(reinterpret_cast<const char*>(&crc), 4);
  write_file(path, payload);
}

template <class S>
std::string load_checkpoint(ParamStore<S>& store, const std::string& path) {
  const std::string buf = read_file(path);
  check_magic_and_crc(buf, path);
  ByteReader r(buf, path);
  r.take(4);
  const uint16_t version = r.u16();
  ALCA_THROW_IF(version != kVersion, ErrorKind::Data, "'", path,
                "': unsupported checkpoint version ", version);
  const std::string config = r.str();
  const uint32_t count = r.u32();
  ALCA_THROW_IF(count != store.size(), ErrorKind::Data, "'", path, "' holds ",
                count, " tensors, model expects ", store.size());
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    r.u8();  // trainable flag, informational
    const uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    ALCA_THROW_IF(!store.has(name), ErrorKind::Data, "'", path,
                  "': unknown tensor '", name, "'");
    Tensor<S>& dst = store.get(name);
    ALCA_THROW_IF(dst.shape() != shape, ErrorKind::Data, "'", path, "': '",
                  name, "' has shape ", shape_str(shape), ", model expects ",
                  shape_str(dst.shape()));
    auto out = dst.raw();
    for (auto& v : out) v = static_cast<S>(r.f32());
  }
  return config;
}

std::string checkpoint_peek_config(const std::string& path) {
  const std::string buf = read_file(path);
  check_magic_and_crc(buf, path);
  ByteReader r(buf, path);
  r.take(4);
  const uint16_t version = r.u16();
  ALCA_THROW_IF(version != kVersion, ErrorKind::Data, "'", path,
                "': unsupported checkpoint version ", version);
  return r.str();
}

template void save_checkpoint<float>(const ParamStore<float>&,
                                     const std::string&, const std::string&);
template void save_checkpoint<double>(const ParamStore<double>&,
                                      const std::string&, const std::string&);
template std::string load_checkpoint<float>(ParamStore<float>&,
                                            const std::string&);
template std::string load_checkpoint<double>(ParamStore<double>&,
                                             const std::string&);

}  // namespace alca
