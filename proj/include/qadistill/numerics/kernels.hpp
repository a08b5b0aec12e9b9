#pragma once

#include <cstddef>

namespace qadistill::kernels {

enum class Exec { kSerial, kParallel, kAuto };

// Work (m * k * n multiply-adds) below which kAuto stays serial.
inline constexpr std::size_t kParallelGemmThreshold = std::size_t{1} << 18;

struct GemmArgs {
  const double* a = nullptr;  // m x k (or k x m when trans_a)
  const double* b = nullptr;  // k x n (or n x k when trans_b)
  double* c = nullptr;        // m x n
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;  // c += op(a) op(b) instead of c = op(a) op(b)
};

// Reference implementation; every other variant must match it bit for bit.
void gemm_serial(const GemmArgs& args);

// Rows of c split across OpenMP threads. Each output element is reduced in
// the same order as gemm_serial, so results are identical.
void gemm_parallel(const GemmArgs& args);

void gemm(const GemmArgs& args, Exec exec = Exec::kAuto);

// Number of threads OpenMP would use for a parallel region (1 without OpenMP).
int max_threads();
void set_threads(int threads);

}  // namespace qadistill::kernels
