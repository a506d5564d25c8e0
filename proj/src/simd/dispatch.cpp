// Copyright 2026 The ffe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "ffe/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace ffe::simd {

const KernelTable* avx2_table_unchecked();  // kernels_avx2.cpp

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick_default() {
    if (const char* env = std::getenv("FFE_SIMD"); env && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return t;
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{pick_default()};
    return current;
}

}  // namespace

const KernelTable* avx2_kernels() {
    static const bool ok = cpu_has_avx2_fma();
    return ok ? avx2_table_unchecked() : nullptr;
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select(Backend backend) {
    const KernelTable* t = nullptr;
    switch (backend) {
        case Backend::Auto: t = pick_default(); break;
        case Backend::Scalar: t = &scalar_kernels(); break;
        case Backend::Avx2: t = avx2_kernels(); break;
    }
    if (!t) return false;
    slot().store(t, std::memory_order_relaxed);
    return true;
}

std::string_view active_name() { return active().name; }

}  // namespace ffe::simd
