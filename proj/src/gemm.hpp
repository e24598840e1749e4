#pragma once

#include "semikan/threadpool.hpp"

#include <cstdint>

namespace semikan::detail {

// Dot product with eight independent accumulator lanes. The lane assignment
// and the final reduction order are fixed, so results are bit-stable run to
// run while the per-lane loops vectorize.
inline double dot8(const double* a, const double* b, int64_t n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

// C[m,n] += A[m,k] * B[k,n], row-saxpy order so the n-loop vectorizes.
inline void gemm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k,
                     int64_t n) {
    ThreadPool::instance().parallel_for(m, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            double* ci = C + i * n;
            const double* ai = A + i * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                double av = ai[kk];
                if (av == 0.0) continue;
                const double* bk = B + kk * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
            }
        }
    });
}

// dA[m,k] += G[m,n] * B^T  (rows of G dotted with rows of B).
inline void gemm_gbt(const double* G, const double* B, double* dA, int64_t m, int64_t k,
                     int64_t n) {
    ThreadPool::instance().parallel_for(m, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const double* gi = G + i * n;
            double* dai = dA + i * k;
            for (int64_t kk = 0; kk < k; ++kk) dai[kk] += dot8(gi, B + kk * n, n);
        }
    });
}

// dB[k,n] += A^T * G (saxpy per k-row; parallel over k keeps writes disjoint).
inline void gemm_atg(const double* A, const double* G, double* dB, int64_t m, int64_t k,
                     int64_t n) {
    ThreadPool::instance().parallel_for(k, [&](int64_t k0, int64_t k1) {
        for (int64_t kk = k0; kk < k1; ++kk) {
            double* dbk = dB + kk * n;
            for (int64_t i = 0; i < m; ++i) {
                double av = A[i * k + kk];
                if (av == 0.0) continue;
                const double* gi = G + i * n;
                for (int64_t j = 0; j < n; ++j) dbk[j] += av * gi[j];
            }
        }
    });
}

} // namespace semikan::detail
