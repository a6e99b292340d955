#include "canseg/loss.hpp"

#include <cmath>

#include "canseg/kern_shim.hpp"

namespace canseg {

template <typename T>
std::pair<TensorPtrT<T>, int> ohem_ce(RunCtxT<T>& ctx,
                                      const TensorPtrT<T>& logits,
                                      const Labels& labels,
                                      const OhemConfig& cfg) {
  int kept = 0;
  auto loss = ops::ohem_softmax_ce(ctx, logits, labels,
                                   static_cast<T>(cfg.prob_threshold),
                                   cfg.min_kept, cfg.ignore_index, &kept);
  return {loss, kept};
}

Labels nearest_downsample(const Labels& in, int oh, int ow) {
  check(oh >= 1 && ow >= 1 && oh <= in.h && ow <= in.w,
        "nearest_downsample: " + std::to_string(in.h) + "x" +
            std::to_string(in.w) + " -> " + std::to_string(oh) + "x" +
            std::to_string(ow));
  Labels out(in.n, oh, ow);
  for (int n = 0; n < in.n; ++n) {
    for (int y = 0; y < oh; ++y) {
      const int sy = static_cast<int>(static_cast<std::int64_t>(y) * in.h / oh);
      for (int x = 0; x < ow; ++x) {
        const int sx = static_cast<int>(static_cast<std::int64_t>(x) * in.w / ow);
        out.v[out.idx(n, y, x)] = in.v[in.idx(n, sy, sx)];
      }
    }
  }
  return out;
}

template <typename T>
LossReportT<T> joint_loss(RunCtxT<T>& ctx, const ForwardOutputT<T>& out,
                          const Labels& labels, const OhemConfig& cfg) {
  check(out.primary != nullptr, "joint_loss: missing primary logits");
  check(out.aux_ga != nullptr && out.aux_la != nullptr,
        "joint_loss: auxiliary logits absent (model not in train mode?)");
  LossReportT<T> rep;
  auto [lp, kp] = ohem_ce(ctx, out.primary, labels, cfg);
  const Labels small = nearest_downsample(labels, out.aux_ga->shape.h,
                                          out.aux_ga->shape.w);
  auto [lc1, k1] = ohem_ce(ctx, out.aux_ga, small, cfg);
  auto [lc2, k2] = ohem_ce(ctx, out.aux_la, small, cfg);
  rep.total = ops::add(ctx, ops::add(ctx, lp, lc1), lc2);
  rep.l_p = lp->data[0];
  rep.l_c1 = lc1->data[0];
  rep.l_c2 = lc2->data[0];
  rep.kept_p = kp;
  rep.kept_c1 = k1;
  rep.kept_c2 = k2;
  return rep;
}

double poly_lr(int iter, const TrainSchedule& sched) {
  check(sched.max_iter > 0 && sched.power > 0,
        "poly_lr: bad schedule (max_iter " + std::to_string(sched.max_iter) +
            ", power " + std::to_string(sched.power) + ")");
  check(iter >= 0, "poly_lr: negative iter");
  if (iter >= sched.max_iter) return 0.0;
  const double frac = static_cast<double>(iter) / sched.max_iter;
  return sched.base_lr * (1.0 - std::pow(frac, sched.power));
}

template <typename T>
SgdT<T>::SgdT(const ParamSetT<T>& ps) {
  velocity.resize(ps.entries.size());
  for (std::size_t i = 0; i < ps.entries.size(); ++i) {
    if (ps.entries[i].learnable)
      velocity[i].assign(ps.entries[i].t->numel(), T(0));
  }
}

template <typename T>
void SgdT<T>::step(ParamSetT<T>& ps, T lr, T momentum, T weight_decay) {
  check(velocity.size() == ps.entries.size(),
        "sgd: optimizer state does not match parameter set");
  for (std::size_t i = 0; i < ps.entries.size(); ++i) {
    auto& e = ps.entries[i];
    if (!e.learnable) continue;
    check(velocity[i].size() == e.t->numel(),
          "sgd: velocity size mismatch for " + e.name);
    if (e.t->grad.empty()) continue;  // never touched by backward
    Kern<T>::sgd_update(e.t->data.data(), velocity[i].data(),
                        e.t->grad.data(), lr, momentum, weight_decay,
                        e.t->numel());
  }
}

template <typename T>
double clip_grad_norm(ParamSetT<T>& ps, double max_norm) {
  check(max_norm > 0, "clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& e : ps.entries) {
    if (!e.learnable) continue;
    for (const T g : e.t->grad) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& e : ps.entries) {
      if (!e.learnable) continue;
      for (T& g : e.t->grad) g *= scale;
    }
  }
  return norm;
}

void ConfusionMatrix::add(const Labels& pred, const Labels& gt,
                          int ignore_index) {
  check(pred.n == gt.n && pred.h == gt.h && pred.w == gt.w,
        "confusion: extents differ");
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    const int g = gt.v[i];
    if (g == ignore_index) continue;
    const int p = pred.v[i];
    check(g >= 0 && g < k && p >= 0 && p < k,
          "confusion: label out of range (gt " + std::to_string(g) +
              ", pred " + std::to_string(p) + ", k " + std::to_string(k) + ")");
    at(g, p) += 1;
  }
}

MiouResult miou_from_confusion(const ConfusionMatrix& cm) {
  MiouResult r;
  r.per_class.assign(cm.k, std::nan(""));
  r.present.assign(cm.k, false);
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < cm.k; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < cm.k; ++o) {
      if (o == c) continue;
      fn += cm.at(c, o);  // gt c predicted as o
      fp += cm.at(o, c);  // gt o predicted as c
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;  // absent from both maps: excluded from the mean
    r.present[c] = true;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += r.per_class[c];
    ++count;
  }
  r.mean = count > 0 ? sum / count : 0.0;
  return r;
}

MiouResult miou(const Labels& pred, const Labels& gt, int num_classes,
                int ignore_index) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt, ignore_index);
  return miou_from_confusion(cm);
}

template <typename T>
Labels argmax_map(const TensorT<T>& logits) {
  const Shape& s = logits.shape;
  Labels out(s.n, s.h, s.w);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        int best = 0;
        T best_v = logits.data[static_cast<std::size_t>(s.at(n, 0, y, x))];
        for (int c = 1; c < s.c; ++c) {
          T v = logits.data[static_cast<std::size_t>(s.at(n, c, y, x))];
          if (v > best_v) {
            best_v = v;
            best = c;
          }
        }
        out.v[(static_cast<std::size_t>(n) * s.h + y) * s.w + x] = best;
      }
  return out;
}

template std::pair<TensorPtrT<float>, int> ohem_ce<float>(
    RunCtxT<float>&, const TensorPtrT<float>&, const Labels&,
    const OhemConfig&);
template std::pair<TensorPtrT<double>, int> ohem_ce<double>(
    RunCtxT<double>&, const TensorPtrT<double>&, const Labels&,
    const OhemConfig&);
template LossReportT<float> joint_loss<float>(RunCtxT<float>&,
                                              const ForwardOutputT<float>&,
                                              const Labels&,
                                              const OhemConfig&);
template LossReportT<double> joint_loss<double>(RunCtxT<double>&,
                                                const ForwardOutputT<double>&,
                                                const Labels&,
                                                const OhemConfig&);
template struct SgdT<float>;
template struct SgdT<double>;
template double clip_grad_norm<float>(ParamSetT<float>&, double);
template double clip_grad_norm<double>(ParamSetT<double>&, double);
template Labels argmax_map<float>(const TensorT<float>&);
template Labels argmax_map<double>(const TensorT<double>&);

}  // namespace canseg
