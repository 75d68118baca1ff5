// Copyright 2026 The LeaderLab Authors.
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

#ifndef LEADERLAB_RNG_HPP_
#define LEADERLAB_RNG_HPP_

#include <cstdint>
#include <random>

namespace leaderlab {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent per-task seeds from a
// root seed and a task counter so parallel work stays reproducible.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t root, std::uint64_t stream) {
  return Mix64(Mix64(root) ^ Mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t DeriveSeed(std::uint64_t root, std::uint64_t a,
                                   std::uint64_t b) {
  return DeriveSeed(DeriveSeed(root, a), b);
}

}  // namespace leaderlab

#endif  // LEADERLAB_RNG_HPP_
