#pragma once

#include <vector>

#include "cbxt/tensor.hpp"

namespace cbxt {

// Adam with bias correction; parameters update in list order so steps are
// deterministic. Callers zero gradients between steps.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace cbxt
