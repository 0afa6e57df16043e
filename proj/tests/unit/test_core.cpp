#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>

#include "diqa/errors.hpp"
#include "diqa/params.hpp"
#include "diqa/parallel.hpp"
#include "diqa/rng.hpp"
#include "diqa/tensor.hpp"

using namespace diqa;

TEST(Tensor, ShapeAccessAndReshape) {
  TensorD t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  t.at({1, 2}) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(t.at({2, 0}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
  EXPECT_FALSE(t.has_grad());
  t.grad()[0] = 1.0;
  EXPECT_TRUE(t.has_grad());
  t.zero_grad();
  EXPECT_EQ(t.grad()[0], 0.0);
  EXPECT_EQ(t.cast<float>()[5], 4.0f);
}

TEST(ParamSet, NamesAreUniqueAndAddressesStable) {
  ParamSet<float> p;
  auto& a = p.add("a", Shape{2});
  for (int i = 0; i < 100; ++i) p.add("x" + std::to_string(i), Shape{1});
  EXPECT_EQ(&a, &p.at("a"));
  EXPECT_THROW(p.add("a", Shape{1}), ConfigError);
  EXPECT_THROW(p.at("missing"), ConfigError);
  EXPECT_EQ(p.scalar_count(), 102);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a = make_stream(1, Stream::kShuffle), b = make_stream(1, Stream::kShuffle), c = make_stream(1, Stream::kPatches);
  EXPECT_EQ(a(), b());
  EXPECT_NE(make_stream(1, Stream::kShuffle)(), c());
  EXPECT_EQ(make_item_stream(3, Stream::kEval, "img")(), make_item_stream(3, Stream::kEval, "img")());
  EXPECT_NE(make_item_stream(3, Stream::kEval, "img")(), make_item_stream(3, Stream::kEval, "img2")());
}

TEST(Parallel, CoversEveryIndexAndPropagatesErrors) {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw StateError("boom");
               }),
               StateError);
}
