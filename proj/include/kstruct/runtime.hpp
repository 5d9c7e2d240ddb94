// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace kstruct {

using Index = std::int64_t;
using Rng = std::mt19937_64;

inline constexpr const char* kVersion = "0.1.0";

// Independent generator for the stream identified by (seed, path...).
// The same (seed, path) always yields the same sequence, so work split into
// fixed streams is reproducible for any number of workers.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {});

// Derive a child seed; used to hand sub-tasks their own seed value.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Number of worker threads: hardware concurrency, capped by KSTRUCT_THREADS.
int worker_count();

// Runs body(i) for i in [0, count) on up to worker_count() threads.
// Each index is processed exactly once; callers write to per-index slots.
void parallel_for(Index count, const std::function<void(Index)>& body);

}  // namespace kstruct
