#include "qadistill/numerics/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qadistill::kernels {
namespace {

inline double load_a(const GemmArgs& g, std::size_t i, std::size_t p) {
  return g.trans_a ? g.a[p * g.m + i] : g.a[i * g.k + p];
}

inline double load_b(const GemmArgs& g, std::size_t p, std::size_t j) {
  return g.trans_b ? g.b[j * g.k + p] : g.b[p * g.n + j];
}

// One output row. The inner reduction runs over p in ascending order for
// every element, independent of how rows are scheduled.
inline void gemm_row(const GemmArgs& g, std::size_t i) {
  double* out = g.c + i * g.n;
  if (!g.accumulate) {
    for (std::size_t j = 0; j < g.n; ++j) out[j] = 0.0;
  }
  if (!g.trans_b) {
    for (std::size_t p = 0; p < g.k; ++p) {
      const double av = load_a(g, i, p);
      if (av == 0.0) continue;
      const double* brow = g.b + p * g.n;
      for (std::size_t j = 0; j < g.n; ++j) out[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < g.n; ++j) {
      const double* brow = g.b + j * g.k;
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += load_a(g, i, p) * brow[p];
      out[j] += acc;
    }
  }
}

}  // namespace

void gemm_serial(const GemmArgs& args) {
  for (std::size_t i = 0; i < args.m; ++i) gemm_row(args, i);
}

void gemm_parallel(const GemmArgs& args) {
  const auto rows = static_cast<long long>(args.m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) gemm_row(args, static_cast<std::size_t>(i));
}

void gemm(const GemmArgs& args, Exec exec) {
  if (exec == Exec::kAuto) {
    bool nested = false;
#ifdef _OPENMP
    nested = omp_in_parallel() != 0;
#endif
    const bool large = args.m * args.k * args.n >= kParallelGemmThreshold && args.m > 1;
    exec = (large && !nested && max_threads() > 1) ? Exec::kParallel : Exec::kSerial;
  }
  if (exec == Exec::kParallel) {
    gemm_parallel(args);
  } else {
    gemm_serial(args);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

}  // namespace qadistill::kernels
