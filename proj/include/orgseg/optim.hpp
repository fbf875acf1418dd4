#pragma once

#include <map>
#include <string>
#include <vector>

#include "orgseg/layers.hpp"

namespace orgseg {

struct AdamConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain Adam with bias correction and a constant learning rate. Frozen
/// parameters and buffers are skipped entirely.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& store);
  long steps() const noexcept { return t_; }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace orgseg
