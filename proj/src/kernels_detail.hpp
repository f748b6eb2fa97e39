#pragma once

#include <cstddef>

// Internal backend table. Not installed; only kernels.cpp, kernels_avx2.cpp
// and the equivalence tests include this.
namespace fortune::kernels::detail {

struct Table {
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*matvec_t_acc)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*ger_acc)(double*, std::size_t, std::size_t, const double*, const double*);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum_sq_diff)(const double*, const double*, std::size_t);
  void (*vexp)(const double*, double*, std::size_t);
  void (*vsigmoid)(const double*, double*, std::size_t);
  void (*vtanh)(const double*, double*, std::size_t);
};

const Table& scalar_table();
// nullptr when this build or this CPU cannot run AVX2+FMA.
const Table* avx2_table();

}  // namespace fortune::kernels::detail
