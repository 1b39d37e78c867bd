#include <gtest/gtest.h>

#include "gbu/nn/grad_check.hpp"

TEST(KernelSuite, EveryKernelMatchesFiniteDifferences) {
  gbu::nn::KernelSuiteOptions options;
  options.seed = 2024;
  options.instances = 20;
  const auto entries = gbu::nn::kernel_gradcheck_suite(options);
  ASSERT_FALSE(entries.empty());
  for (const auto& e : entries) {
    EXPECT_TRUE(e.passed()) << e.name << " (" << e.precision << "): max rel error " << e.max_rel_error
                            << " >= " << e.tolerance;
  }
}
