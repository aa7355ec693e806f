// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

namespace pgtk {
namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n], all row-major contiguous.  trans_a / trans_b
// interpret A as [k,m] / B as [n,k].  Implemented in gemm.cpp on top of a
// tuned dense kernel; everything above this interface is our own code.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const T* a, const T* b, T* c, bool accumulate);

extern template void gemm<float>(bool, bool, int64_t, int64_t, int64_t,
                                 const float*, const float*, float*, bool);
extern template void gemm<double>(bool, bool, int64_t, int64_t, int64_t,
                                  const double*, const double*, double*, bool);

}  // namespace detail
}  // namespace pgtk
