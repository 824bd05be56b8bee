#include "refvos/optim.hpp"

#include <cmath>

namespace refvos {

AdamW::AdamW(const std::vector<Tensor>& params, const RunConfig& cfg)
    : wd_(cfg.weight_decay), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
  for (const auto& p : params) {
    if (!p.requires_grad()) continue;  // frozen parameters stay out
    Slot s;
    s.p = p;
    s.m.assign(p.numel(), 0.0);
    s.v.assign(p.numel(), 0.0);
    s.lr = p.name().rfind("backbone.", 0) == 0 ? cfg.backbone_lr : cfg.lr;
    slots_.push_back(std::move(s));
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.p.zero_grad();
}

void AdamW::step() {
  ++t_;
  const Precision prec = precision();
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.p.has_grad()) continue;  // parameter unused this step
    const double lr = s.lr * lr_scale_;
    const std::vector<double>& g = s.p.grad();
    double* w = s.p.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      double next = w[i] - lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[i]);
      w[i] = round_value(next, prec);
      if (!std::isfinite(w[i])) throw NumericError("AdamW produced a non-finite weight in " + s.p.name());
    }
  }
}

}  // namespace refvos
