// Copyright 2026 The calikit Authors.
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

#ifndef CALIKIT_RANDOM_HPP_
#define CALIKIT_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace calikit {

using Rng = std::mt19937_64;

/// Independent random sub-streams derived from one user seed. Each component
/// draws from its own stream so that, e.g., changing the split does not
/// perturb weight initialization.
enum class Stream : std::uint32_t {
  kInit = 1,
  kDropout = 2,
  kSplit = 3,
  kSynthetic = 4,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x63616c69u};
  return Rng(seq);
}

}  // namespace calikit

#endif  // CALIKIT_RANDOM_HPP_
