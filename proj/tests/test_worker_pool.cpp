#include <atomic>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "pintda/worker_pool.hpp"

using pintda::WorkerPool;

TEST(WorkerPool, RunsEveryIndexExactlyOnce) {
  for (std::size_t workers : {1u, 2u, 4u, 7u}) {
    WorkerPool pool(workers);
    std::vector<std::atomic<int>> hits(101);
    pool.parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); });
    for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(hits[i].load(), 1) << "index " << i;
    EXPECT_EQ(pool.workers(), workers);
  }
}

TEST(WorkerPool, ReusableAcrossCalls) {
  WorkerPool pool(3);
  std::atomic<long> sum = 0;
  for (int round = 0; round < 50; ++round) {
    pool.parallel_for(10, [&](std::size_t i) { sum += static_cast<long>(i); });
  }
  EXPECT_EQ(sum.load(), 50 * 45);
  pool.parallel_for(0, [](std::size_t) { FAIL(); });
}

TEST(WorkerPool, PropagatesTaskExceptionsAndRecovers) {
  WorkerPool pool(3);
  EXPECT_THROW(pool.parallel_for(8,
                                 [](std::size_t i) {
                                   if (i == 5) throw std::runtime_error("task 5");
                                 }),
               std::runtime_error);
  std::atomic<int> count = 0;
  pool.parallel_for(8, [&](std::size_t) { ++count; });
  EXPECT_EQ(count.load(), 8);
}

TEST(WorkerPool, RejectsZeroWorkers) { EXPECT_THROW(WorkerPool(0), pintda::InvalidArgument); }
