#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace sda {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(seed ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

// 53-bit uniform strictly inside (0,1)
inline double canonical(std::mt19937_64& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

// A deterministic stream of uniforms derived from a single seed.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : eng_(seed) {}
  double next() { return canonical(eng_); }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// The pseudo-marginal random numbers u, partitioned into U blocks.
// Each block is represented by a seed; every consumer of the block derives
// its uniforms deterministically from (block seed, consumer key). Refreshing
// one block leaves the uniforms of all other blocks bit-identical.
class UniformBlockStore {
 public:
  UniformBlockStore() = default;

  UniformBlockStore(std::size_t num_blocks, std::mt19937_64& rng) {
    seeds_.resize(num_blocks);
    for (auto& s : seeds_) s = rng();
  }

  std::size_t num_blocks() const { return seeds_.size(); }

  std::uint64_t block_seed(std::size_t block) const {
    check(block);
    return seeds_[block];
  }

  UniformStream stream(std::size_t block, std::uint64_t key = 0) const {
    check(block);
    return UniformStream(mix_seed(seeds_[block], key));
  }

  void refresh_block(std::size_t block, std::mt19937_64& rng) {
    check(block);
    seeds_[block] = rng();
  }

  UniformBlockStore with_refreshed_block(std::size_t block,
                                         std::mt19937_64& rng) const {
    UniformBlockStore out(*this);
    out.refresh_block(block, rng);
    return out;
  }

 private:
  void check(std::size_t block) const {
    if (block >= seeds_.size())
      throw std::out_of_range("UniformBlockStore: block index out of range");
  }

  std::vector<std::uint64_t> seeds_;
};

}  // namespace sda
