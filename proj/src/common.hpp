#ifndef ALCA_COMMON_HPP
#define ALCA_COMMON_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace alca {

// Failure classes map 1:1 onto the C API status codes and CLI exit codes.
enum class ErrorKind : int {
  Config = 1,   // bad configuration / contract violation by the caller
  Data = 2,     // unreadable, malformed or inconsistent input data
  Runtime = 3,  // numeric failure, divergence, internal invariant broken
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

template <class... Ts>
std::string cat(Ts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

[[noreturn]] inline void fail(ErrorKind kind, std::string msg) {
  throw Error(kind, std::move(msg));
}

#define ALCA_THROW_IF(cond, kind, ...) \
  do {                                 \
    if (cond) {                        \
      ::alca::fail((kind), ::alca::cat(__VA_ARGS__)); \
    }                                  \
  } while (0)

// splitmix64 finalizer; used to derive independent sub-seeds from one master
// seed so that e.g. episode sampling and dropout never share a stream.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x51ed2701));
}

uint32_t crc32(const void* bytes, size_t len, uint32_t seed = 0);

uint64_t fnv1a64(const void* bytes, size_t len);
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v);

}  // namespace alca

#endif
