#include "canseg/complexity.hpp"

#include <algorithm>

namespace canseg {

namespace {

// Shape-only mirror of a forward pass. Every method mimics one op from
// ops.cpp: same output shape, same cost formula, same execution order as the
// corresponding model code path. Silent ops (reshapes, concats, gathers)
// create tensors for the liveness model but emit no row.
class Walker {
 public:
  explicit Walker(int nothing = 0) { (void)nothing; }

  int input(Shape s) { return node(s); }

  int conv(const std::string& name, int x, int out_c, int kernel, int stride,
           int groups, bool bias) {
    const Shape in = shape(x);
    check(in.c % groups == 0 && out_c % groups == 0,
          "profile conv " + name + ": groups");
    const int pad = kernel / 2;
    const int oh = ops::conv_out_dim(in.h, kernel, stride, pad);
    const int ow = ops::conv_out_dim(in.w, kernel, stride, pad);
    check(oh > 0 && ow > 0, "profile conv " + name + ": input " + in.str() +
                                " too small for k=" + std::to_string(kernel));
    const int cig = in.c / groups;
    const Shape out{in.n, out_c, oh, ow};
    const std::uint64_t macs = static_cast<std::uint64_t>(in.n) * out_c * oh *
                               ow * cig * kernel * kernel;
    const std::uint64_t p =
        static_cast<std::uint64_t>(out_c) * cig * kernel * kernel +
        (bias ? static_cast<std::uint64_t>(out_c) : 0);
    return emit(name, "conv", p, macs, true, out, {x});
  }

  int bn(const std::string& name, int x) {
    const Shape s = shape(x);
    return emit(name, "bn", 4ull * s.c, s.numel(), false, s, {x});
  }

  int act(const std::string& name, int x) {
    const Shape s = shape(x);
    return emit(name, "act", 0, s.numel(), false, s, {x});
  }

  int pool_adaptive(const std::string& name, int x, int oh, int ow) {
    const Shape s = shape(x);
    check(oh <= s.h && ow <= s.w, "profile pool " + name + ": output " +
                                      std::to_string(oh) + "x" +
                                      std::to_string(ow) + " vs " + s.str());
    return emit(name, "pool",
                0, ops::adaptive_pool_cost(s.n, s.c, s.h, s.w, oh, ow), false,
                {s.n, s.c, oh, ow}, {x});
  }

  int pool_global(const std::string& name, int x) {
    const Shape s = shape(x);
    return emit(name, "pool", 0, s.numel(), false, {s.n, s.c, 1, 1}, {x});
  }

  int resize(const std::string& name, int x, int oh, int ow) {
    const Shape s = shape(x);
    const Shape out{s.n, s.c, oh, ow};
    return emit(name, "resize", 0, out.numel(), false, out, {x});
  }

  int eltwise(const std::string& name, int a, int b) {
    const Shape s = shape(a);
    return emit(name, "eltwise", 0, s.numel(), false, s, {a, b});
  }

  // x scaled per channel by s ([N,C,1,1]); cost counts the full map
  int chanmul(const std::string& name, int x, int scale) {
    const Shape s = shape(x);
    return emit(name, "eltwise", 0, s.numel(), false, s, {x, scale});
  }

  int matmul(const std::string& name, int a, int b, bool trans_b) {
    const Shape as = shape(a);
    const Shape bs = shape(b);
    const int p = as.h, k = as.w;
    const int q = trans_b ? bs.h : bs.w;
    check((trans_b ? bs.w : bs.h) == k, "profile matmul " + name + ": " +
                                            as.str() + " x " + bs.str());
    const Shape out{as.n, 1, p, q};
    return emit(name, "matmul",
                0, static_cast<std::uint64_t>(as.n) * p * q * k, true, out,
                {a, b});
  }

  int softmax(const std::string& name, int x) { return act(name, x); }

  // silent data movement
  int reshape(int x, Shape s) {
    touch(x);
    return node(s);
  }
  int select(int x, int out_c) {
    const Shape s = shape(x);
    touch(x);
    return node({s.n, out_c, s.h, s.w});
  }
  int concat_c(const std::vector<int>& xs) {
    int c = 0;
    for (int x : xs) {
      c += shape(x).c;
      touch(x);
    }
    const Shape s0 = shape(xs[0]);
    return node({s0.n, c, s0.h, s0.w});
  }
  int concat_h(const std::vector<int>& xs) {
    int h = 0;
    for (int x : xs) {
      h += shape(x).h;
      touch(x);
    }
    const Shape s0 = shape(xs[0]);
    return node({s0.n, s0.c, h, s0.w});
  }
  int map_to_rows(int x) {
    const Shape s = shape(x);
    touch(x);
    return node({s.n, 1, s.h * s.w, s.c});
  }
  int rows_to_map(int x, int c, int h, int w) {
    touch(x);
    const Shape s = shape(x);
    return node({s.n, c, h, w});
  }

  Shape shape(int id) const { return nodes_[id].s; }

  ComplexityReport finish() {
    ComplexityReport rep;
    rep.rows = std::move(rows_);
    for (const auto& r : rep.rows) {
      rep.total_params += r.params;
      rep.total_flops += r.flops;
      rep.total_madd += r.madd;
    }
    // peak live bytes over the schedule: a tensor is live from its creation
    // step through its last use
    for (int t = 0; t <= step_; ++t) {
      std::uint64_t live = 0;
      for (const auto& n : nodes_) {
        if (n.created <= t && t <= n.last_use) live += 4ull * n.s.numel();
      }
      rep.peak_activation_bytes = std::max(rep.peak_activation_bytes, live);
    }
    return rep;
  }

 private:
  struct Node {
    Shape s;
    int created;
    int last_use;
  };

  int node(Shape s) {
    nodes_.push_back({s, step_, step_});
    return static_cast<int>(nodes_.size()) - 1;
  }
  void touch(int id) { nodes_[id].last_use = step_; }

  int emit(const std::string& name, const char* kind, std::uint64_t params,
           std::uint64_t flops, bool mac, Shape out,
           const std::vector<int>& inputs) {
    ++step_;
    for (int i : inputs) touch(i);
    const int id = node(out);
    rows_.push_back({name, kind, params, flops, mac ? 2 * flops : flops, out,
                     4ull * out.numel()});
    return id;
  }

  std::vector<Node> nodes_;
  std::vector<LayerRow> rows_;
  int step_ = 0;
};

// --- mirrors of the composite blocks -------------------------------------

int walk_conv_bn_act(Walker& w, const std::string& p, int x, int out_c,
                     int kernel, int stride, int groups, Act act) {
  x = w.conv(p + ".conv", x, out_c, kernel, stride, groups, false);
  x = w.bn(p + ".bn", x);
  if (act != Act::None) x = w.act(p + ".act", x);
  return x;
}

int walk_ds_conv(Walker& w, const std::string& p, int x, int in_c, int out_c,
                 int kernel, int stride) {
  x = walk_conv_bn_act(w, p + ".dw", x, in_c, kernel, stride, in_c, Act::Relu);
  return walk_conv_bn_act(w, p + ".pw", x, out_c, 1, 1, 1, Act::Relu);
}

int walk_se(Walker& w, const std::string& p, int x, int c, int reduction = 4) {
  const int mid = (c + reduction - 1) / reduction;
  int g = w.pool_global(p + ".gap", x);
  g = w.conv(p + ".fc1", g, mid, 1, 1, 1, true);
  g = w.act(p + ".fc1_act", g);
  g = w.conv(p + ".fc2", g, c, 1, 1, 1, true);
  g = w.act(p + ".fc2_act", g);
  return w.chanmul(p + ".scale", x, g);
}

int walk_ghost(Walker& w, const std::string& p, int x, int out_c,
               const GhostConfig& g) {
  const int prim = (out_c + g.ratio - 1) / g.ratio;
  const int rem = out_c - prim;
  int pr = w.conv(p + ".primary", x, prim, g.primary_kernel, 1, 1, false);
  if (rem == 0) return pr;
  int sel = w.select(pr, rem);
  int ch = w.conv(p + ".cheap", sel, rem, g.cheap_kernel, 1, rem, false);
  return w.concat_c({pr, ch});
}

int walk_inv_res(Walker& w, const std::string& p, int x, const InvResSpec& b) {
  int h = walk_conv_bn_act(w, p + ".expand", x, b.expand, 1, 1, 1, b.act);
  h = walk_conv_bn_act(w, p + ".dw", h, b.expand, b.kernel, b.stride, b.expand,
                       b.act);
  if (b.use_se) h = walk_se(w, p + ".se", h, b.expand);
  h = walk_conv_bn_act(w, p + ".project", h, b.out, 1, 1, 1, Act::None);
  if (b.stride == 1 && b.in == b.out) h = w.eltwise(p + ".skip", x, h);
  return h;
}

int walk_spp(Walker& w, const std::string& p, int x,
             const std::vector<int>& scales) {
  const Shape s = w.shape(x);
  std::vector<int> parts;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const int n = scales[i];
    check(n <= s.h && n <= s.w, "profile spp: scale " + std::to_string(n) +
                                    " exceeds " + s.str());
    int pl = w.pool_adaptive(p + ".pool" + std::to_string(n), x, n, n);
    parts.push_back(w.reshape(pl, {s.n, s.c, n * n, 1}));
  }
  return w.concat_h(parts);
}

int walk_reduced_ga(Walker& w, const std::string& p, int x, int embed,
                    int value, const SppConfig& spp, const GhostConfig& g) {
  const Shape s = w.shape(x);
  int pooled = walk_spp(w, p + ".spp", x, spp.scales);
  int q = w.map_to_rows(walk_ghost(w, p + ".q", x, embed, g));
  int k = w.map_to_rows(walk_ghost(w, p + ".k", pooled, embed, g));
  int v = w.map_to_rows(walk_ghost(w, p + ".v", pooled, value, g));
  int aff = w.matmul(p + ".attend.qk", q, k, true);
  aff = w.softmax(p + ".attend.softmax", aff);
  int agg = w.matmul(p + ".attend.av", aff, v, false);
  int vmap = w.rows_to_map(agg, value, s.h, s.w);
  int proj = w.conv(p + ".proj", vmap, s.c, 1, 1, 1, true);
  return w.eltwise(p + ".residual", x, proj);
}

int walk_local_attention(Walker& w, const std::string& p, int x, int c) {
  int h = walk_conv_bn_act(w, p + ".dw1", x, c, 3, 1, c, Act::Relu);
  h = walk_conv_bn_act(w, p + ".dw2", h, c, 3, 1, c, Act::Relu);
  h = w.conv(p + ".dw3", h, c, 3, 1, c, true);
  h = w.act(p + ".gate", h);
  int gated = w.eltwise(p + ".mul", x, h);
  return w.eltwise(p + ".residual", x, gated);
}

int walk_ffm(Walker& w, const std::string& p, int spatial, int context,
             int mid_c, int out_c) {
  int f = w.concat_c({spatial, context});
  f = walk_conv_bn_act(w, p + ".reduce", f, mid_c, 1, 1, 1, Act::Relu);
  int g = w.pool_global(p + ".gap", f);
  g = w.conv(p + ".fc1", g, (mid_c + 3) / 4, 1, 1, 1, true);
  g = w.act(p + ".fc1_act", g);
  g = w.conv(p + ".fc2", g, mid_c, 1, 1, 1, true);
  g = w.act(p + ".gate", g);
  int gated = w.chanmul(p + ".mul", f, g);
  int att = w.eltwise(p + ".residual", f, gated);
  return walk_conv_bn_act(w, p + ".expand", att, out_c, 1, 1, 1, Act::Relu);
}

}  // namespace

ComplexityReport profile(const ModelConfig& cfg, int n, int h, int w) {
  cfg.validate();
  check(h % 16 == 0 && w % 16 == 0,
        "profile: input " + std::to_string(h) + "x" + std::to_string(w) +
            " must be divisible by 16");
  Walker wk;
  const int x = wk.input({n, cfg.input_channels, h, w});

  // spatial branch
  int sp = walk_conv_bn_act(wk, "spatial.l1", x, cfg.spatial_channels[0], 7, 2,
                            1, Act::Relu);
  sp = walk_ds_conv(wk, "spatial.l2", sp, cfg.spatial_channels[0],
                    cfg.spatial_channels[1], 3, 2);
  sp = walk_ds_conv(wk, "spatial.l3", sp, cfg.spatial_channels[1],
                    cfg.spatial_channels[2], 3, 2);
  sp = walk_conv_bn_act(wk, "spatial.l4", sp, cfg.spatial_channels[3], 1, 1, 1,
                        Act::Relu);

  // context branch
  int cx = walk_conv_bn_act(wk, "context.stem", x, cfg.backbone_stem_channels,
                            3, 2, 1, Act::HardSwish);
  for (std::size_t i = 0; i < cfg.backbone.size(); ++i) {
    cx = walk_inv_res(wk, "context.b" + std::to_string(i + 1), cx,
                      cfg.backbone[i]);
  }
  if (cfg.backbone_tail_channels > 0) {
    cx = walk_conv_bn_act(wk, "context.tail", cx, cfg.backbone_tail_channels,
                          1, 1, 1, Act::HardSwish);
  }
  int ga = walk_reduced_ga(wk, "context.ga", cx, cfg.ga_embed_channels,
                           cfg.ga_value_channels, cfg.spp, cfg.ghost);
  int la = walk_local_attention(wk, "context.la", ga,
                                cfg.backbone_out_channels());
  int bot = walk_conv_bn_act(wk, "context.bottleneck", la,
                             cfg.context_out_channels, 1, 1, 1, Act::Relu);
  const Shape bs = wk.shape(bot);
  int up = wk.resize("context.upsample", bot, bs.h * 2, bs.w * 2);

  // fusion + classifier
  int fused = walk_ffm(wk, "ffm", sp, up, cfg.ffm_mid_channels,
                       cfg.ffm_out_channels);
  int cls = walk_ds_conv(wk, "classifier.ds", fused, cfg.ffm_out_channels,
                         cfg.ffm_out_channels, 3, 1);
  cls = wk.conv("classifier.pw", cls, cfg.num_classes, 1, 1, 1, true);
  wk.resize("classifier.upsample", cls, h, w);
  return wk.finish();
}

ComplexityReport profile_ffm(int spatial_c, int context_c, int mid_c,
                             int out_c, int n, int h, int w) {
  Walker wk;
  const int sp = wk.input({n, spatial_c, h, w});
  const int cx = wk.input({n, context_c, h, w});
  walk_ffm(wk, "ffm", sp, cx, mid_c, out_c);
  return wk.finish();
}

ComplexityReport profile_ghost_conv(int in_c, int out_c, const GhostConfig& g,
                                    int n, int h, int w) {
  Walker wk;
  const int x = wk.input({n, in_c, h, w});
  walk_ghost(wk, "ghost", x, out_c, g);
  return wk.finish();
}

ComplexityReport profile_plain_conv(int in_c, int out_c, int kernel, int n,
                                    int h, int w) {
  Walker wk;
  const int x = wk.input({n, in_c, h, w});
  wk.conv("conv", x, out_c, kernel, 1, 1, false);
  return wk.finish();
}

AttentionCost attention_cost_ratio(int h, int w, int embed,
                                   const SppConfig& spp) {
  check(h >= 1 && w >= 1 && embed >= 1, "attention_cost_ratio: bad extents");
  AttentionCost c;
  c.a = h * w;
  c.m = spp.positions();
  const std::uint64_t a = static_cast<std::uint64_t>(c.a);
  const std::uint64_t m = static_cast<std::uint64_t>(c.m);
  const std::uint64_t e = static_cast<std::uint64_t>(embed);
  c.dense_madds = 2 * a * a * e;    // affinity + aggregation, dense keys
  c.reduced_madds = 2 * a * m * e;  // same two products over M keys
  c.ratio = static_cast<double>(c.a) / static_cast<double>(c.m);
  return c;
}

}  // namespace canseg
