#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace mscan {

// Process-wide worker count (also applied to Eigen's GEMM threading).
void set_threads(int n);
int get_threads();

// Static partition over [0, n); each index is handled exactly once and
// workers write only to their own slots, so results are order-independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Fixed-format float for logs/reports: enough digits to be stable, no
// locale dependence.
inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace mscan
