#pragma once

#include <vector>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"

namespace refvos {

// AdamW with decoupled weight decay; parameters named "backbone.*" use the
// backbone learning rate, everything else the main rate.
class AdamW {
 public:
  AdamW(const std::vector<Tensor>& params, const RunConfig& cfg);

  void set_lr_scale(double s) { lr_scale_ = s; }
  double lr_scale() const { return lr_scale_; }
  void zero_grad();
  void step();

 private:
  struct Slot {
    Tensor p;
    std::vector<double> m, v;
    double lr;
  };
  std::vector<Slot> slots_;
  double wd_, beta1_, beta2_, eps_;
  double lr_scale_ = 1.0;
  long t_ = 0;
};

}  // namespace refvos
