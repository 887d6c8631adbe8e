// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace residscope::detail {

// C[m×n] = A[m×k] · B[k×n], all row-major and densely packed.
//
// Every output element is accumulated over k in ascending order starting
// from zero, one multiply-add per step, on every code path. The value of
// C[i][j] therefore depends only on row i of A and column j of B, never on
// the matrix shape or on where the element falls in the register tiling.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n);

// C = Aᵀ·B with A stored k×m.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);

// C = A·Bᵀ with B stored n×k.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);

}  // namespace residscope::detail
