#include "orgseg/optim.hpp"

#include <cmath>

#include "orgseg/kernels.hpp"

namespace orgseg {

void Adam::step(ParameterStore& store) {
  ++t_;
  kernels::AdamStep s;
  s.learning_rate = static_cast<float>(cfg_.learning_rate);
  s.beta1 = static_cast<float>(cfg_.beta1);
  s.beta2 = static_cast<float>(cfg_.beta2);
  s.epsilon = static_cast<float>(cfg_.epsilon);
  s.bias_correction1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  s.bias_correction2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const auto& k = kernels::active();
  for (Parameter* p : store.all()) {
    if (!p->trainable()) continue;
    auto& st = state_[p->name];
    if (st.m.empty()) {
      st.m.assign(p->numel(), 0.0f);
      st.v.assign(p->numel(), 0.0f);
    }
    k.adam_update(p->value.data(), p->grad.data(), st.m.data(), st.v.data(), p->numel(), s);
  }
}

}  // namespace orgseg
