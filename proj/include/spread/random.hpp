// Copyright 2026 The spread-lil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace spread {

using Rng = std::mt19937_64;

/// Deterministic child seed from a root seed and a path of stream labels,
/// so independent consumers never share a random stream.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> path) {
  std::seed_seq seq{static_cast<std::uint32_t>(root),
                    static_cast<std::uint32_t>(root >> 32)};
  std::uint64_t state = 0;
  {
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    state = (std::uint64_t{out[0]} << 32) | out[1];
  }
  for (auto label : path) {
    std::seed_seq step{static_cast<std::uint32_t>(state),
                       static_cast<std::uint32_t>(state >> 32),
                       static_cast<std::uint32_t>(label),
                       static_cast<std::uint32_t>(label >> 32)};
    std::uint32_t out[2];
    step.generate(out, out + 2);
    state = (std::uint64_t{out[0]} << 32) | out[1];
  }
  return state;
}

inline Rng make_rng(std::uint64_t root,
                    std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(root, path));
}

}  // namespace spread
