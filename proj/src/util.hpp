#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fedsab {

// Error taxonomy shared with the C API status codes.
enum class ErrorKind {
  Io = 1,
  Format = 2,
  Config = 3,
  Input = 4,
  Usage = 5,
  Training = 6,
  Protocol = 7,
  Internal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void check(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

// Global worker bound for per-client parallelism. Results never depend on it.
int worker_threads();
void set_worker_threads(int n);

// Runs fn(i) for i in [0, n). Chunked over at most worker_threads() threads;
// each index is processed exactly once, so output slots may be written freely.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

std::string format_float(double v, int digits = 6);

}  // namespace fedsab
