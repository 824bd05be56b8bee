#include "refvos/heads.hpp"

#include <cmath>
#include <limits>

namespace refvos {

SegHead::SegHead(nn::ParamStore& ps, const RunConfig& cfg) {
  const int d = cfg.model_dim;
  class_head_ = nn::Linear(ps, "head.class", d, 1);
  box1_ = nn::Linear(ps, "head.box1", d, d);
  box2_ = nn::Linear(ps, "head.box2", d, d);
  box3_ = nn::Linear(ps, "head.box3", d, 4);
  mask_embed_ = nn::Linear(ps, "head.mask_embed", d, d);
}

Prediction SegHead::forward(const Tensor& p_prime, const Tensor& q_prime,
                            const std::vector<EncodedFrame>& encs) const {
  const int t = p_prime.dim(0), n = p_prime.dim(1), c = p_prime.dim(2);
  if (q_prime.dim(0) != n || q_prime.dim(1) != c)
    throw ContractError("seg_head: query shapes disagree, " + shape_str(p_prime.shape()) + " vs " +
                        shape_str(q_prime.shape()));
  if (static_cast<int>(encs.size()) != t) throw ContractError("seg_head: encoder frames != T");

  Prediction out;
  out.class_logits = ops::reshape(class_head_.forward(q_prime), {n});

  Tensor fused = ops::add(p_prime, q_prime);  // [T,N,C] + [N,C]
  Tensor h = ops::relu(box1_.forward(fused));
  h = ops::relu(box2_.forward(h));
  out.boxes = ops::sigmoid(box3_.forward(h));  // [T,N,4]

  Tensor emb = mask_embed_.forward(fused);  // [T,N,C]
  std::vector<Tensor> frames;
  frames.reserve(t);
  for (int j = 0; j < t; ++j) {
    const Tensor& pix = encs[j].pixel_map;  // [Hm,Wm,C]
    const int hm = pix.dim(0), wm = pix.dim(1);
    Tensor e = ops::reshape(ops::slice(emb, 0, j, 1), {n, c});
    Tensor pflat = ops::permute(ops::reshape(pix, {hm * wm, c}), {1, 0});  // [C, HW]
    Tensor logits = ops::matmul(e, pflat);                                 // [N, HW]
    frames.push_back(ops::reshape(logits, {1, n, hm, wm}));
  }
  out.mask_logits = frames.size() == 1 ? frames[0] : ops::concat(frames, 0);
  return out;
}

namespace {

struct BoxParts {
  Tensor x1, y1, x2, y2, w, h;
};

BoxParts corners(const Tensor& b) {
  Tensor cx = ops::slice(b, 0, 0, 1);
  Tensor cy = ops::slice(b, 0, 1, 1);
  Tensor w = ops::slice(b, 0, 2, 1);
  Tensor h = ops::slice(b, 0, 3, 1);
  BoxParts p;
  p.w = w;
  p.h = h;
  p.x1 = ops::sub(cx, ops::mul_scalar(w, 0.5));
  p.x2 = ops::add(cx, ops::mul_scalar(w, 0.5));
  p.y1 = ops::sub(cy, ops::mul_scalar(h, 0.5));
  p.y2 = ops::add(cy, ops::mul_scalar(h, 0.5));
  return p;
}

constexpr double kBoxEps = 1e-7;

struct IouParts {
  Tensor iou, uni, c_area;
};

IouParts iou_parts(const Tensor& a, const Tensor& b) {
  BoxParts pa = corners(a), pb = corners(b);
  Tensor iw = ops::relu(ops::sub(ops::minimum(pa.x2, pb.x2), ops::maximum(pa.x1, pb.x1)));
  Tensor ih = ops::relu(ops::sub(ops::minimum(pa.y2, pb.y2), ops::maximum(pa.y1, pb.y1)));
  Tensor inter = ops::mul(iw, ih);
  Tensor area = ops::add(ops::mul(pa.w, pa.h), ops::mul(pb.w, pb.h));
  IouParts r;
  r.uni = ops::sub(area, inter);
  r.iou = ops::div(inter, ops::add_scalar(r.uni, kBoxEps));
  Tensor cw = ops::sub(ops::maximum(pa.x2, pb.x2), ops::minimum(pa.x1, pb.x1));
  Tensor ch = ops::sub(ops::maximum(pa.y2, pb.y2), ops::minimum(pa.y1, pb.y1));
  r.c_area = ops::mul(cw, ch);
  return r;
}

}  // namespace

Tensor box_iou(const Tensor& a, const Tensor& b) { return iou_parts(a, b).iou; }

Tensor giou(const Tensor& a, const Tensor& b) {
  if (a.numel() != 4 || b.numel() != 4)
    throw ContractError("giou: boxes must have 4 entries, got " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  IouParts p = iou_parts(a, b);
  Tensor slack = ops::div(ops::sub(p.c_area, p.uni), ops::add_scalar(p.c_area, kBoxEps));
  return ops::sub(p.iou, slack);
}

Tensor focal_loss(const Tensor& logits, const Tensor& targets, double alpha, double gamma) {
  if (logits.shape() != targets.shape())
    throw ContractError("focal_loss: shape mismatch, " + shape_str(logits.shape()) + " vs " +
                        shape_str(targets.shape()));
  for (double v : targets.values())
    if (v != 0.0 && v != 1.0) throw ContractError("focal_loss: targets must be 0/1");
  // sign = +1 for positives, -1 for negatives; p_t = sigmoid(sign * x)
  Tensor sign = ops::add_scalar(ops::mul_scalar(targets, 2.0), -1.0);
  Tensor z = ops::mul(logits, sign);
  Tensor log_pt = ops::logsigmoid(z);
  // (1 - p_t)^gamma = exp(gamma * logsigmoid(-z)), stable for any logit
  Tensor mod = ops::exp(ops::mul_scalar(ops::logsigmoid(ops::neg(z)), gamma));
  Tensor alpha_t = ops::add_scalar(ops::mul_scalar(targets, 2.0 * alpha - 1.0), 1.0 - alpha);
  Tensor loss = ops::neg(ops::mul(ops::mul(alpha_t, mod), log_pt));
  return ops::mean(loss);
}

Tensor dice_loss(const Tensor& mask_logits, const Tensor& gt_mask) {
  if (mask_logits.shape() != gt_mask.shape())
    throw ContractError("dice_loss: shape mismatch, " + shape_str(mask_logits.shape()) + " vs " +
                        shape_str(gt_mask.shape()));
  Tensor p = ops::sigmoid(mask_logits);
  Tensor num = ops::add_scalar(ops::mul_scalar(ops::sum(ops::mul(p, gt_mask)), 2.0), 1.0);
  Tensor den = ops::add_scalar(ops::add(ops::sum(p), ops::sum(gt_mask)), 1.0);
  return ops::add_scalar(ops::neg(ops::div(num, den)), 1.0);
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int k = static_cast<int>(cost.size());
  if (k == 0) return {};
  const int n = static_cast<int>(cost[0].size());
  if (k > n) throw ContractError("hungarian: more rows than columns (" + std::to_string(k) + " > " +
                                 std::to_string(n) + ")");
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n) throw ContractError("hungarian: ragged cost matrix");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(k + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(k, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

namespace {

Tensor pred_box(const Prediction& pred, int t, int n) {
  return ops::reshape(ops::slice(ops::slice(pred.boxes, 0, t, 1), 1, n, 1), {4});
}

Tensor pred_mask(const Prediction& pred, int t, int n) {
  const int hm = pred.mask_logits.dim(2), wm = pred.mask_logits.dim(3);
  return ops::reshape(ops::slice(ops::slice(pred.mask_logits, 0, t, 1), 1, n, 1), {hm, wm});
}

Tensor box_tensor(const std::array<double, 4>& b) { return Tensor({4}, {b[0], b[1], b[2], b[3]}); }

}  // namespace

std::vector<std::vector<double>> match_cost(const Prediction& pred, const std::vector<ObjectTarget>& gts,
                                            const LossWeights& w) {
  NoGradGuard ng;
  const int n = pred.class_logits.dim(0);
  const int t = pred.boxes.dim(0);
  const int k = static_cast<int>(gts.size());
  std::vector<std::vector<double>> cost(k, std::vector<double>(n, 0.0));
  for (int ki = 0; ki < k; ++ki) {
    if (static_cast<int>(gts[ki].frames.size()) != t)
      throw ContractError("match: gt frames != prediction frames");
    for (int ni = 0; ni < n; ++ni) {
      double c = w.cls * (-ops::sigmoid(ops::slice(pred.class_logits, 0, ni, 1)).item());
      for (int ti = 0; ti < t; ++ti) {
        const FrameTarget& ft = gts[ki].frames[ti];
        if (!ft.present) continue;
        Tensor pb = pred_box(pred, ti, ni);
        Tensor gb = box_tensor(ft.box);
        c += w.l1 * ops::sum(ops::abs(ops::sub(pb, gb))).item();
        c += w.giou * (1.0 - giou(pb, gb).item());
        Tensor pm = pred_mask(pred, ti, ni);
        c += w.dice * dice_loss(pm, ft.mask_small).item();
        c += w.focal * focal_loss(pm, ft.mask_small, w.focal_alpha, w.focal_gamma).item();
      }
      cost[ki][ni] = c;
    }
  }
  return cost;
}

std::vector<int> match(const Prediction& pred, const std::vector<ObjectTarget>& gts, const LossWeights& w) {
  const int n = pred.class_logits.dim(0);
  if (static_cast<int>(gts.size()) > n)
    throw ContractError("match: more ground-truth objects than queries (" + std::to_string(gts.size()) +
                        " > " + std::to_string(n) + ")");
  return hungarian(match_cost(pred, gts, w));
}

LossResult total_loss(const Prediction& pred, const std::vector<ObjectTarget>& gts,
                      const std::vector<int>& assignment, const LossWeights& w) {
  const int n = pred.class_logits.dim(0);
  const int t = pred.boxes.dim(0);
  if (assignment.size() != gts.size()) throw ContractError("total_loss: assignment size != gt count");

  std::vector<double> target_vals(n, 0.0);
  for (int col : assignment) {
    if (col < 0 || col >= n) throw ContractError("total_loss: assignment index out of range");
    target_vals[col] = 1.0;
  }
  Tensor targets({n}, std::vector<double>(target_vals));
  Tensor l_cls = focal_loss(pred.class_logits, targets, w.focal_alpha, w.focal_gamma);

  Tensor box_term = Tensor::scalar(0.0);
  Tensor mask_term = Tensor::scalar(0.0);
  double raw_l1 = 0.0, raw_giou = 0.0, raw_dice = 0.0, raw_focal = 0.0;
  int objects_with_frames = 0;
  for (std::size_t ki = 0; ki < gts.size(); ++ki) {
    const int ni = assignment[ki];
    int present = 0;
    Tensor box_sum = Tensor::scalar(0.0);
    Tensor mask_sum = Tensor::scalar(0.0);
    for (int ti = 0; ti < t; ++ti) {
      const FrameTarget& ft = gts[ki].frames[ti];
      if (!ft.present) continue;  // absent frames carry no box/mask supervision
      ++present;
      Tensor pb = pred_box(pred, ti, ni);
      Tensor gb = box_tensor(ft.box);
      Tensor l1 = ops::sum(ops::abs(ops::sub(pb, gb)));
      Tensor gi = ops::add_scalar(ops::neg(giou(pb, gb)), 1.0);
      box_sum = ops::add(box_sum, ops::add(ops::mul_scalar(l1, w.l1), ops::mul_scalar(gi, w.giou)));
      raw_l1 += l1.item();
      raw_giou += gi.item();

      const int h = ft.mask.dim(0), wd = ft.mask.dim(1);
      Tensor pm = ops::upsample_bilinear(pred_mask(pred, ti, ni), h, wd);
      Tensor dl = dice_loss(pm, ft.mask);
      Tensor fl = focal_loss(pm, ft.mask, w.focal_alpha, w.focal_gamma);
      mask_sum = ops::add(mask_sum, ops::add(ops::mul_scalar(dl, w.dice), ops::mul_scalar(fl, w.focal)));
      raw_dice += dl.item();
      raw_focal += fl.item();
    }
    if (present > 0) {
      ++objects_with_frames;
      box_term = ops::add(box_term, ops::mul_scalar(box_sum, 1.0 / present));
      mask_term = ops::add(mask_term, ops::mul_scalar(mask_sum, 1.0 / present));
    }
  }
  if (objects_with_frames > 1) {
    box_term = ops::mul_scalar(box_term, 1.0 / objects_with_frames);
    mask_term = ops::mul_scalar(mask_term, 1.0 / objects_with_frames);
  }

  LossResult r;
  r.total = ops::add(ops::mul_scalar(l_cls, w.cls), ops::add(box_term, mask_term));
  const double denom = std::max(1, objects_with_frames) * std::max(1, t);
  r.terms["cls"] = l_cls.item();
  r.terms["l1"] = raw_l1 / denom;
  r.terms["giou"] = raw_giou / denom;
  r.terms["dice"] = raw_dice / denom;
  r.terms["focal"] = raw_focal / denom;
  r.terms["total"] = r.total.item();
  return r;
}

}  // namespace refvos
