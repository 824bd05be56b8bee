#include "refvos/selfcheck.hpp"

#include <cmath>
#include <ostream>

namespace refvos {
namespace selfcheck {

namespace {

struct PrecisionGuard {
  Precision prev;
  PrecisionGuard() : prev(precision()) { set_precision(Precision::f64); }
  ~PrecisionGuard() { set_precision(prev); }
};

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// values with |x| in [0.1, 1.1]: keeps relu/abs kinks away from the samples
Tensor rand_tensor_offzero(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) {
    double m = rng.uniform(0.1, 1.1);
    v = rng.uniform(0.0, 1.0) < 0.5 ? -m : m;
  }
  return t;
}

// deterministic per shape so repeated loss evaluations stay pure
Tensor weighted_sum(const Tensor& out) {
  Rng wr(0x9e3779b9ull * (out.numel() + 31));
  Tensor w(out.shape());
  for (auto& v : w.values()) v = wr.uniform(-1.0, 1.0);
  return ops::sum(ops::mul(out, w));
}

}  // namespace

double max_fd_mismatch(const std::vector<Tensor>& inputs, const std::function<Tensor()>& loss_fn,
                       double step, double abs_floor) {
  for (const auto& t : inputs)
    if (!t.requires_grad()) throw ContractError("max_fd_mismatch: input without requires_grad");

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs)
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));

  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + step;
      const double lp = loss_fn().item();
      t.data()[i] = orig - step;
      const double lm = loss_fn().item();
      t.data()[i] = orig;
      const double fd = (lp - lm) / (2.0 * step);
      worst = std::max(worst, oracles::fd_mismatch(analytic[ti][i], fd, abs_floor));
    }
  }
  return worst;
}

RunConfig micro_run_config() {
  RunConfig cfg;
  cfg.precision = 64;
  cfg.model_dim = 2;
  cfg.num_queries = 2;
  cfg.frames = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 1;
  cfg.ffn_dim = 2;
  cfg.mta_num_blocks = 1;
  cfg.mti_enc_blocks = 1;
  cfg.mti_dec_blocks = 1;
  cfg.stem_stride = 1;
  cfg.backbone_channels = {2, 2, 2};
  cfg.convs_per_stage = 1;
  cfg.text_dim = 2;
  cfg.text_heads = 1;
  cfg.text_layers = 0;
  cfg.audio_dim = 2;
  cfg.audio_channels = {1, 1};
  cfg.seed = 7;
  return cfg;
}

MicroCase micro_case(const RunConfig& cfg, std::uint64_t seed) {
  Rng rng(seed ^ 0x3141592653589793ull);
  MicroCase mc;
  const int t = cfg.frames, h = 8, w = 8;
  mc.input.frames = rand_tensor(rng, {t, h, w, 3}, 0.0, 1.0);
  mc.input.modality = "text";
  mc.input.text.tokens = {0, 8};  // "red circle"
  std::vector<metrics::BinaryMask> masks;
  for (int j = 0; j < t; ++j) {
    metrics::BinaryMask m(h, w);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) m.set(2 + y - j, 2 + x + j, 1);
    masks.push_back(std::move(m));
  }
  mc.targets = {make_target(masks, h / cfg.stem_stride, w / cfg.stem_stride)};
  return mc;
}

std::vector<CheckResult> gradient_suite(std::uint64_t seed) {
  PrecisionGuard guard;
  std::vector<CheckResult> results;
  Rng rng(seed ^ 0x5ca1ab1edeadbeefull);

  auto check = [&](const std::string& name, double tol, const std::vector<Tensor>& inputs,
                   const std::function<Tensor()>& fn) {
    for (Tensor t : inputs) t.set_requires_grad(true);
    double worst = max_fd_mismatch(inputs, fn);
    results.push_back({"grad/" + name, worst < tol, worst, "max rel err"});
  };

  {
    Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 4});
    check("add", 1e-4, {a, b}, [=]() { return weighted_sum(ops::add(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {2, 3, 4}), b = rand_tensor(rng, {4});
    check("add_broadcast", 1e-4, {a, b}, [=]() { return weighted_sum(ops::add(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {1, 4});
    check("sub_broadcast", 1e-4, {a, b}, [=]() { return weighted_sum(ops::sub(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 1});
    check("mul_broadcast", 1e-4, {a, b}, [=]() { return weighted_sum(ops::mul(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor_offzero(rng, {3, 4});
    check("div", 1e-4, {a, b}, [=]() { return weighted_sum(ops::div(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 5}), b = rand_tensor(rng, {4, 5});
    check("minimum", 1e-4, {a, b}, [=]() { return weighted_sum(ops::minimum(a, b)); });
    check("maximum", 1e-4, {a, b}, [=]() { return weighted_sum(ops::maximum(a, b)); });
  }
  {
    Tensor a = rand_tensor_offzero(rng, {4, 5});
    check("relu", 1e-4, {a}, [=]() { return weighted_sum(ops::relu(a)); });
    check("abs", 1e-4, {a}, [=]() { return weighted_sum(ops::abs(a)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 5}, -2.0, 2.0);
    check("gelu", 1e-4, {a}, [=]() { return weighted_sum(ops::gelu(a)); });
    check("sigmoid", 1e-4, {a}, [=]() { return weighted_sum(ops::sigmoid(a)); });
    check("logsigmoid", 1e-4, {a}, [=]() { return weighted_sum(ops::logsigmoid(a)); });
    check("softplus", 1e-4, {a}, [=]() { return weighted_sum(ops::softplus(a)); });
    check("exp", 1e-4, {a}, [=]() { return weighted_sum(ops::exp(a)); });
    check("square", 1e-4, {a}, [=]() { return weighted_sum(ops::square(a)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 5}, 0.3, 2.0);
    check("log", 1e-4, {a}, [=]() { return weighted_sum(ops::log(a)); });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4, 5});
    check("sum", 1e-4, {a}, [=]() { return ops::sum(a); });
    check("mean", 1e-4, {a}, [=]() { return ops::mean(a); });
    check("sum_axis", 1e-4, {a}, [=]() { return weighted_sum(ops::sum_axis(a, 1)); });
    check("mean_axis", 1e-4, {a}, [=]() { return weighted_sum(ops::mean_axis(a, 2)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 3}), b = rand_tensor(rng, {3, 5});
    check("matmul", 1e-4, {a, b}, [=]() { return weighted_sum(ops::matmul(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {2, 3, 4}), b = rand_tensor(rng, {2, 4, 5});
    check("matmul_batched", 1e-4, {a, b},
          [=]() { return weighted_sum(ops::matmul(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {2, 3, 4}), b = rand_tensor(rng, {4, 5});
    check("matmul_bcast", 1e-4, {a, b}, [=]() { return weighted_sum(ops::matmul(a, b)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 7}, -3.0, 3.0);
    check("softmax", 1e-4, {a}, [=]() { return weighted_sum(ops::softmax(a, 1)); });
  }
  {
    Tensor x = rand_tensor(rng, {5, 6}), g = rand_tensor(rng, {6}, 0.5, 1.5), b = rand_tensor(rng, {6});
    check("layer_norm", 1e-4, {x, g, b},
          [=]() { return weighted_sum(ops::layer_norm(x, g, b)); });
  }
  {
    Tensor x = rand_tensor(rng, {6, 6, 3}), k = rand_tensor(rng, {3, 3, 3, 4});
    check("conv2d_3x3", 1e-4, {x, k},
          [=]() { return weighted_sum(ops::conv2d(x, k, 1, 1)); });
    check("conv2d_3x3_s2", 1e-4, {x, k},
          [=]() { return weighted_sum(ops::conv2d(x, k, 2, 1)); });
  }
  {
    Tensor x = rand_tensor(rng, {5, 5, 4}), k = rand_tensor(rng, {1, 1, 4, 3});
    check("conv2d_1x1", 1e-4, {x, k},
          [=]() { return weighted_sum(ops::conv2d(x, k, 1, 0)); });
  }
  {
    Tensor table = rand_tensor(rng, {10, 4});
    std::vector<int> ids = {1, 3, 3, 7};
    check("embedding", 1e-4, {table},
          [=]() { return weighted_sum(ops::embedding(table, ids)); });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4, 5});
    check("permute", 1e-4, {a},
          [=]() { return weighted_sum(ops::permute(a, {2, 0, 1})); });
    check("reshape", 1e-4, {a},
          [=]() { return weighted_sum(ops::reshape(a, {5, 12})); });
    check("slice", 1e-4, {a}, [=]() { return weighted_sum(ops::slice(a, 1, 1, 2)); });
    check("downsample", 1e-4, {a},
          [=]() { return weighted_sum(ops::downsample(a, 2, 2)); });
  }
  {
    Tensor a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {4, 3});
    check("concat", 1e-4, {a, b},
          [=]() { return weighted_sum(ops::concat({a, b}, 0)); });
  }
  {
    Tensor a = rand_tensor(rng, {4, 4, 3});
    check("upsample_nearest", 1e-4, {a},
          [=]() { return weighted_sum(ops::upsample_nearest(a, 8, 8)); });
    check("upsample_bilinear", 1e-4, {a},
          [=]() { return weighted_sum(ops::upsample_bilinear(a, 7, 9)); });
  }
  {
    nn::ParamStore ps(seed + 11);
    nn::MultiHeadAttention mha(ps, "t.mha", 8, 2);
    Tensor q = rand_tensor(rng, {5, 8}), k = rand_tensor(rng, {7, 8}), v = rand_tensor(rng, {7, 8});
    std::vector<Tensor> inputs = {q, k, v};
    for (const auto& p : ps.all()) inputs.push_back(p);
    check("multi_head_attention", 1e-4, inputs,
          [=]() { return weighted_sum(mha.forward(q, k, v)); });
  }
  {
    Tensor logits = rand_tensor(rng, {3, 4}, -2.0, 2.0);
    Tensor targets({3, 4});
    for (auto& v : targets.values()) v = rng.below(2) ? 1.0 : 0.0;
    check("focal_loss", 1e-4, {logits}, [=]() { return focal_loss(logits, targets); });
    check("dice_loss", 1e-4, {logits}, [=]() { return dice_loss(logits, targets); });
  }
  {
    Tensor a = Tensor({4}, {0.4, 0.45, 0.3, 0.35});
    Tensor b = Tensor({4}, {0.55, 0.5, 0.4, 0.3});
    check("giou", 1e-4, {a, b}, [=]() { return giou(a, b); });
  }
  return results;
}

CheckResult end_to_end_gradient_check(std::uint64_t seed, double tol, std::size_t* param_count) {
  PrecisionGuard guard;
  RunConfig cfg = micro_run_config();
  cfg.seed = seed + 7;
  Model model(cfg);
  if (param_count) *param_count = model.params().count_values();
  MicroCase mc = micro_case(cfg, seed);
  const LossWeights weights = LossWeights::from(cfg);

  // assignment frozen at the base point so the loss stays differentiable
  std::vector<int> assign;
  {
    Model::Forward fwd = model.forward(mc.input);
    assign = match(fwd.pred, mc.targets, weights);
  }
  auto loss_fn = [&]() {
    Model::Forward fwd = model.forward(mc.input);
    return total_loss(fwd.pred, mc.targets, assign, weights).total;
  };
  std::vector<Tensor> inputs;
  for (const auto& p : model.params().all()) inputs.push_back(p);
  double worst = max_fd_mismatch(inputs, loss_fn, 1e-5, 1e-6);
  return {"grad/end_to_end_micro", worst < tol, worst,
          "params=" + std::to_string(model.params().count_values())};
}

std::vector<CheckResult> oracle_suite(std::uint64_t seed) {
  PrecisionGuard guard;
  std::vector<CheckResult> results;
  Rng rng(seed ^ 0x0bac1e5ull);

  {
    bool ok = true;
    int trials = 50;
    for (int t = 0; t < trials && ok; ++t) {
      const int k = 1 + static_cast<int>(rng.below(6));
      const int n = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(7 - k)));
      std::vector<std::vector<double>> cost(k, std::vector<double>(n));
      for (auto& row : cost)
        for (auto& c : row) c = rng.uniform(-5.0, 5.0);
      auto assign = hungarian(cost);
      double ours = oracles::assignment_total(cost, assign);
      double best = oracles::brute_force_assignment(cost);
      if (ours != best) ok = false;
    }
    results.push_back({"oracle/hungarian_vs_brute_force", ok, static_cast<double>(trials), "exact totals"});
  }
  {
    bool ok = true;
    for (int t = 0; t < 60 && ok; ++t) {
      metrics::BinaryMask p(8, 8), g(8, 8);
      for (auto& v : p.v) v = rng.below(3) == 0 ? 1 : 0;
      for (auto& v : g.v) v = rng.below(3) == 0 ? 1 : 0;
      if (metrics::region_j(p, g) != oracles::region_j_pixelcount(p, g)) ok = false;
      if (metrics::boundary_f(p, g, 1) != oracles::boundary_f_bruteforce(p, g, 1)) ok = false;
    }
    results.push_back({"oracle/metrics_vs_brute_force", ok, 60, "J and F exact"});
  }
  {
    Tensor a = Tensor({4}, {0.25, 0.25, 0.5, 0.5});
    Tensor b = Tensor({4}, {0.75, 0.75, 0.5, 0.5});
    double ours = giou(a, b).item();
    double ref = oracles::giou_rasterized({0.25, 0.25, 0.5, 0.5}, {0.75, 0.75, 0.5, 0.5});
    double err = std::abs(ours - ref);
    results.push_back({"oracle/giou_rasterized", err < 1e-3, err, "corner-touching squares"});
  }
  {
    Tensor x = Tensor({2, 3}, {1.0, 2.0, 3.0, 50.0, -20.0, 0.0});
    Tensor y = ops::softmax(x, 1);
    bool ok = true;
    for (int r = 0; r < 2; ++r) {
      double s = y.at({r, 0}) + y.at({r, 1}) + y.at({r, 2});
      if (std::abs(s - 1.0) > 1e-6) ok = false;
    }
    results.push_back({"oracle/softmax_normalized", ok, 0.0, "rows sum to 1"});
  }
  return results;
}

bool run_all(std::ostream& log) {
  bool all = true;
  auto emit = [&](const CheckResult& r) {
    log << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.value << (r.detail.empty() ? "" : ", ")
        << r.detail << ")\n";
    all = all && r.pass;
  };
  for (const auto& r : gradient_suite(0)) emit(r);
  emit(end_to_end_gradient_check(0));
  for (const auto& r : oracle_suite(0)) emit(r);
  return all;
}

}  // namespace selfcheck
}  // namespace refvos
