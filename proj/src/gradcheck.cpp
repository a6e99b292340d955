#include "canseg/gradcheck.hpp"

#include <cmath>

namespace canseg {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using PsPtr = std::shared_ptr<ParamSetT<double>>;

void fill_uniform(TensorT<double>& t, std::mt19937_64& rng, double lo,
                  double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data) v = d(rng);
}

// Keep activation inputs off the piecewise kinks so the central difference
// stays two-sided; the margin is generous vs the 1e-5 step.
void fill_away_from(TensorT<double>& t, std::mt19937_64& rng, double lo,
                    double hi, const std::vector<double>& kinks) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data) {
    double x = d(rng);
    for (double k : kinks) {
      if (std::abs(x - k) < 0.05) x = k + (x >= k ? 0.06 : -0.06);
    }
    v = x;
  }
}

std::vector<double> random_weights(std::int64_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& v : w) v = d(rng);
  return w;
}

Labels random_labels(int n, int h, int w, int num_classes,
                     std::mt19937_64& rng, int ignore_every = 0) {
  Labels lab(n, h, w);
  std::uniform_int_distribution<int> d(0, num_classes - 1);
  for (std::size_t i = 0; i < lab.v.size(); ++i) {
    lab.v[i] = d(rng);
    if (ignore_every > 0 && i % static_cast<std::size_t>(ignore_every) == 3)
      lab.v[i] = 255;
  }
  return lab;
}

struct CaseDef {
  std::string name;
  PsPtr ps;
  LossBuilderD build;
  int samples = 6;
};

}  // namespace

double gradcheck_max_rel_err(ParamSetT<double>& ps, const LossBuilderD& build,
                             int samples_per_tensor, double step,
                             std::mt19937_64& rng, double corrupt_delta) {
  GraphT<double> graph;
  RunCtxT<double> taped{&graph, /*training=*/true, nullptr};
  ps.zero_grads();
  auto loss = build(taped);
  graph.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(ps.entries.size());
  for (const auto& e : ps.entries) analytic.push_back(e.t->grad);

  RunCtxT<double> plain{nullptr, /*training=*/true, nullptr};
  const double l0 = build(plain)->data[0];  // unperturbed loss, reused below
  double worst = 0.0;
  bool corrupted = false;
  int checked = 0;
  for (std::size_t ei = 0; ei < ps.entries.size(); ++ei) {
    auto& e = ps.entries[ei];
    if (!e.learnable) continue;
    const std::int64_t n = e.t->numel();

    std::vector<std::int64_t> idx;
    if (n <= samples_per_tensor) {
      for (std::int64_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<std::int64_t> d(0, n - 1);
      while (idx.size() < static_cast<std::size_t>(samples_per_tensor)) {
        std::int64_t i = d(rng);
        bool dup = false;
        for (std::int64_t j : idx) dup = dup || (j == i);
        if (!dup) idx.push_back(i);
      }
    }

    for (std::int64_t i : idx) {
      double a = analytic[ei].empty()
                     ? 0.0
                     : analytic[ei][static_cast<std::size_t>(i)];
      double& slot = e.t->data[static_cast<std::size_t>(i)];
      const double keep = slot;
      slot = keep + step;
      const double lp = build(plain)->data[0];
      slot = keep - step;
      const double lm = build(plain)->data[0];
      slot = keep;
      // A pre-activation within `step` of a ReLU/hard-swish corner makes the
      // two one-sided slopes disagree by the full slope jump, which the second
      // difference exposes; such coordinates say nothing about the backward
      // rule, so they are skipped rather than reported as failures.
      const double s_plus = (lp - l0) / step;
      const double s_minus = (l0 - lm) / step;
      const double curv = std::abs(lp - 2.0 * l0 + lm) / step;
      if (curv >
          2e-4 * std::max({std::abs(s_plus), std::abs(s_minus), 1e-2}))
        continue;
      if (corrupt_delta != 0.0 && !corrupted) {
        a += corrupt_delta;
        corrupted = true;
      }
      const double numeric = (lp - lm) / (2.0 * step);
      // the 1e-3 floor makes sub-1e-7 absolute noise (roundoff through a deep
      // forward pass) insignificant, like atol in torch.autograd.gradcheck
      const double err = std::abs(a - numeric) /
                         std::max(std::abs(a) + std::abs(numeric), 1e-3);
      worst = std::max(worst, err);
      ++checked;
    }
  }
  return checked > 0 ? worst : 1.0;
}

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed,
                                           const std::string& corrupt_name) {
  std::vector<CaseDef> defs;
  auto rng_for = [seed](std::uint64_t i) {
    return std::mt19937_64(mix64(seed ^ mix64(i + 0x5EED)));
  };
  std::uint64_t case_i = 0;

  // -- plain ops ------------------------------------------------------------

  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 3, 7, 6}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::Conv2dLayerT<double> conv(*ps, "conv", rng, 3, 8, 3, 2, 1, true);
    auto w = random_weights(2 * 8 * 4 * 3, rng);
    defs.push_back({"conv3x3_s2", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, conv.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 8, 5, 5}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::Conv2dLayerT<double> conv(*ps, "conv", rng, 8, 8, 3, 1, 2, false);
    auto w = random_weights(2 * 8 * 5 * 5, rng);
    defs.push_back({"conv3x3_groups2", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, conv.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 6, 6, 6}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::Conv2dLayerT<double> conv(*ps, "conv", rng, 6, 6, 3, 1, 6, true);
    auto w = random_weights(2 * 6 * 6 * 6, rng);
    defs.push_back({"depthwise3x3", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, conv.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto a = ps->add("a", {2, 1, 4, 5}, true);
    auto b = ps->add("b", {2, 1, 5, 3}, true);
    fill_uniform(*a, rng, -1, 1);
    fill_uniform(*b, rng, -1, 1);
    auto w = random_weights(2 * 4 * 3, rng);
    defs.push_back({"matmul", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::matmul(c, a, b, false),
                                               w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto a = ps->add("a", {2, 1, 4, 5}, true);
    auto b = ps->add("b", {2, 1, 3, 5}, true);  // transposed layout
    fill_uniform(*a, rng, -1, 1);
    fill_uniform(*b, rng, -1, 1);
    auto w = random_weights(2 * 4 * 3, rng);
    defs.push_back({"matmul_trans_b", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::matmul(c, a, b, true),
                                               w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 1, 5, 7}, true);
    fill_uniform(*x, rng, -2, 2);
    auto w = random_weights(2 * 5 * 7, rng);
    defs.push_back({"softmax_rows", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::softmax_rows(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 3, 9, 7}, true);
    fill_uniform(*x, rng, -1, 1);
    auto w = random_weights(2 * 3 * 3 * 3, rng);
    defs.push_back({"adaptive_max_pool", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(
                          c, ops::adaptive_max_pool2d(c, x, 3, 3), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {1, 4, 5, 6}, true);
    fill_uniform(*x, rng, -1, 1);
    auto w = random_weights(4 * 10 * 12, rng);
    defs.push_back({"bilinear_resize", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(
                          c, ops::bilinear_resize(c, x, 10, 12, false), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {3, 4, 5, 5}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::BatchNormT<double> bn(*ps, "bn", 4);
    fill_uniform(*bn.gamma, rng, 0.5, 1.5);
    fill_uniform(*bn.beta, rng, -0.5, 0.5);
    auto w = random_weights(3 * 4 * 5 * 5, rng);
    defs.push_back({"batch_norm", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, bn.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 4, 5, 5}, true);
    fill_away_from(*x, rng, -1, 1, {0.0});
    auto w = random_weights(2 * 4 * 5 * 5, rng);
    defs.push_back({"relu", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::relu(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 4, 5, 5}, true);
    fill_away_from(*x, rng, -5, 5, {-3.0, 3.0});
    auto w = random_weights(2 * 4 * 5 * 5, rng);
    defs.push_back({"hard_sigmoid", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::hard_sigmoid(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 4, 5, 5}, true);
    fill_away_from(*x, rng, -5, 5, {-3.0, 3.0});
    auto w = random_weights(2 * 4 * 5 * 5, rng);
    defs.push_back({"hard_swish", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::hard_swish(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 4, 5, 5}, true);
    fill_uniform(*x, rng, -3, 3);
    auto w = random_weights(2 * 4 * 5 * 5, rng);
    defs.push_back({"sigmoid", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ops::sigmoid(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {1, 4, 7, 9}, true);
    fill_uniform(*x, rng, -1, 1);
    std::vector<int> scales{1, 2};
    auto w = random_weights(4 * 5, rng);
    defs.push_back({"spp_flatten", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(
                          c, blocks::spp_flatten(c, x, scales), w);
                    }});
  }

  // -- composite blocks -----------------------------------------------------

  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 6, 6, 6}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::GhostConvT<double> g(*ps, "ghost", rng, 6, 11, 2, 1, 3);
    auto w = random_weights(2 * 11 * 6 * 6, rng);
    defs.push_back({"ghost_conv", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, g.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 8, 5, 5}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::SeBlockT<double> se(*ps, "se", rng, 8, 4);
    auto w = random_weights(2 * 8 * 5 * 5, rng);
    defs.push_back({"se_block", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, se.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 5, 8, 7}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::DsConvT<double> ds(*ps, "ds", rng, 5, 7, 3, 2);
    auto w = random_weights(2 * 7 * 4 * 4, rng);
    defs.push_back({"ds_conv", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ds.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {2, 8, 8, 8}, true);
    fill_uniform(*x, rng, -1, 1);
    blocks::InvertedResidualT<double> ir(*ps, "ir", rng, 8, 16, 8, 3, 1, true,
                                         Act::HardSwish);
    auto w = random_weights(2 * 8 * 8 * 8, rng);
    defs.push_back({"inverted_residual", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ir.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {1, 8, 4, 4}, true);
    fill_uniform(*x, rng, -1, 1);
    SppConfig spp;
    spp.scales = {1, 2};
    GhostConfig ghost;
    ReducedGlobalAttentionT<double> ga(*ps, "ga", rng, 8, 6, 10, spp, ghost);
    // the zero-init projection would hide V-path errors; perturb it
    fill_uniform(*ga.proj.w, rng, -0.3, 0.3);
    auto w = random_weights(8 * 4 * 4, rng);
    defs.push_back({"reduced_global_attention", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ga.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {1, 6, 6, 6}, true);
    fill_uniform(*x, rng, -1, 1);
    LocalAttentionT<double> la(*ps, "la", rng, 6);
    auto w = random_weights(6 * 6 * 6, rng);
    defs.push_back({"local_attention", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, la.forward(c, x), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto sp = ps->add("sp", {1, 6, 4, 4}, true);
    auto cx = ps->add("cx", {1, 8, 4, 4}, true);
    fill_uniform(*sp, rng, -1, 1);
    fill_uniform(*cx, rng, -1, 1);
    FfmT<double> ffm(*ps, "ffm", rng, 6, 8, 8, 12);
    auto w = random_weights(12 * 4 * 4, rng);
    defs.push_back({"ffm", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, ffm.forward(c, sp, cx), w);
                    }});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("x", {1, 3, 16, 16}, true);
    fill_uniform(*x, rng, -1, 1);
    SpatialBranchT<double> sb(*ps, "spatial", rng, 3, {8, 12, 16, 16});
    auto w = random_weights(16 * 2 * 2, rng);
    defs.push_back({"spatial_branch", ps, [=](RunCtxT<double>& c) {
                      return ops::weighted_sum(c, sb.forward(c, x), w);
                    }, 4});
  }

  // -- losses ---------------------------------------------------------------

  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("logits", {1, 5, 4, 4}, true);
    fill_uniform(*x, rng, -2, 2);
    Labels lab = random_labels(1, 4, 4, 5, rng, 5);
    OhemConfig cfg;
    cfg.prob_threshold = 0.7;
    cfg.min_kept = 2;
    defs.push_back({"ohem_ce", ps, [=](RunCtxT<double>& c) {
                      return ohem_ce(c, x, lab, cfg).first;
                    }, 12});
  }
  {
    auto rng = rng_for(case_i++);
    auto ps = std::make_shared<ParamSetT<double>>();
    auto x = ps->add("logits", {2, 4, 3, 5}, true);
    fill_uniform(*x, rng, -2, 2);
    Labels lab = random_labels(2, 3, 5, 4, rng, 7);
    OhemConfig cfg;
    cfg.prob_threshold = 1.0;  // degenerates to plain CE over all valid pixels
    cfg.min_kept = 1;
    defs.push_back({"softmax_ce_all_kept", ps, [=](RunCtxT<double>& c) {
                      return ohem_ce(c, x, lab, cfg).first;
                    }, 12});
  }

  // -- end to end -----------------------------------------------------------

  {
    auto rng = rng_for(case_i++);
    ModelConfig cfg;
    cfg.num_classes = 4;
    cfg.spatial_channels = {8, 12, 16, 16};
    cfg.backbone_stem_channels = 8;
    cfg.backbone = {
        {8, 16, 16, 3, 2, false, Act::Relu},
        {16, 32, 16, 3, 1, true, Act::HardSwish},
        {16, 48, 24, 5, 2, true, Act::HardSwish},
        {24, 72, 24, 5, 2, true, Act::HardSwish},
    };
    cfg.ga_embed_channels = 8;
    cfg.ga_value_channels = 16;
    cfg.spp.scales = {1, 2};
    cfg.context_out_channels = 16;
    cfg.ffm_mid_channels = 16;
    cfg.ffm_out_channels = 24;
    cfg.train_mode = true;
    auto model = std::make_shared<CanModelT<double>>(cfg, seed ^ 0xE2E);
    auto ps = PsPtr(model, &model->params);  // aliasing: keep model alive
    auto x = ps->add("x", {1, 3, 32, 32}, true);
    fill_uniform(*x, rng, -1, 1);
    // the GA projection is zero-init; nudge it so its input path has signal
    fill_uniform(*model->ga.proj.w, rng, -0.2, 0.2);
    Labels lab = random_labels(1, 32, 32, 4, rng, 11);
    OhemConfig ohem;
    ohem.prob_threshold = 1.0;  // plain CE: kept set immune to perturbation
    ohem.min_kept = 1;
    defs.push_back({"model_joint_loss", ps, [=](RunCtxT<double>& c) {
                      auto out = model->forward(c, x);
                      return joint_loss(c, out, lab, ohem).total;
                    }, 2});
  }

  std::vector<GradCheckCase> results;
  std::uint64_t run_i = 0;
  for (auto& d : defs) {
    auto rng = rng_for(0xABCD + run_i++);
    double corrupt = (d.name == corrupt_name) ? 0.05 : 0.0;
    double err =
        gradcheck_max_rel_err(*d.ps, d.build, d.samples, 1e-5, rng, corrupt);
    results.push_back({d.name, err});
  }
  return results;
}

}  // namespace canseg
