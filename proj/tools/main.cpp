// canseg: command-line front end. Subcommands: train, infer, profile,
// bench, gradcheck, selftest. Exit codes: 0 ok, 1 runtime failure, 2 bad
// config or usage.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"

#include "canseg/complexity.hpp"
#include "canseg/data_io.hpp"
#include "canseg/gradcheck.hpp"
#include "canseg/kernels.hpp"
#include "canseg/synth.hpp"
#include "canseg/train.hpp"

namespace {

using namespace canseg;

std::string human(std::uint64_t v) {
  char buf[32];
  if (v >= 1000000000ull)
    std::snprintf(buf, sizeof buf, "%.2fG", double(v) / 1e9);
  else if (v >= 1000000ull)
    std::snprintf(buf, sizeof buf, "%.2fM", double(v) / 1e6);
  else if (v >= 10000ull)
    std::snprintf(buf, sizeof buf, "%.1fk", double(v) / 1e3);
  else
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
  return buf;
}

void print_report(const ComplexityReport& rep) {
  std::printf("%-36s %-10s %10s %14s %14s  %-16s %10s\n", "layer", "kind",
              "params", "flops", "madds", "out", "act KiB");
  for (const auto& r : rep.rows) {
    std::printf("%-36s %-10s %10llu %14llu %14llu  %-16s %10.1f\n",
                r.name.c_str(), r.kind.c_str(),
                static_cast<unsigned long long>(r.params),
                static_cast<unsigned long long>(r.flops),
                static_cast<unsigned long long>(r.madd), r.out_shape.str().c_str(),
                double(r.activation_bytes) / 1024.0);
  }
  std::printf("totals: params %llu (%s)  flops %llu (%s)  madds %llu (%s)  "
              "peak activations %.1f KiB\n",
              static_cast<unsigned long long>(rep.total_params),
              human(rep.total_params).c_str(),
              static_cast<unsigned long long>(rep.total_flops),
              human(rep.total_flops).c_str(),
              static_cast<unsigned long long>(rep.total_madd),
              human(rep.total_madd).c_str(),
              double(rep.peak_activation_bytes) / 1024.0);
}

std::string scales_str(const std::vector<int>& scales) {
  std::string s = "{";
  for (std::size_t i = 0; i < scales.size(); ++i)
    s += (i ? "," : "") + std::to_string(scales[i]);
  return s + "}";
}

// one-decimal ratio from exact integer arithmetic: floor(10*a/m) with
// round-half-up
std::string ratio_1dp(int a, int m) {
  const long long deci = (10LL * a + m / 2) / m;
  return std::to_string(deci / 10) + "." + std::to_string(deci % 10);
}

void print_attention(const char* label, int h, int w, int embed,
                     const SppConfig& spp) {
  AttentionCost ac = attention_cost_ratio(h, w, embed, spp);
  std::printf("attention (%s, grid %dx%d, embed %d):\n", label, h, w, embed);
  std::printf("  spp scales %s -> M = %d key positions, A = %d query positions\n",
              scales_str(spp.scales).c_str(), ac.m, ac.a);
  std::printf("  dense   2*A*A*e = %llu MAdds\n",
              static_cast<unsigned long long>(ac.dense_madds));
  std::printf("  reduced 2*A*M*e = %llu MAdds\n",
              static_cast<unsigned long long>(ac.reduced_madds));
  std::printf("  ratio A/M = %d/%d \xE2\x89\x88%s\xC3\x97\n", ac.a, ac.m,
              ratio_1dp(ac.a, ac.m).c_str());
}

int cmd_profile(const RunConfig& cfg, int n, int h, int w, bool as_json) {
  // attention arithmetic needs only the grid, so small --height/--width that
  // the full model rejects (spp scale > 1/16 grid) still get a GA report
  ComplexityReport rep;
  bool have_rep = false;
  std::string rep_err;
  try {
    rep = profile(cfg.model, n, h, w);
    have_rep = true;
  } catch (const std::exception& e) {
    rep_err = e.what();
  }
  AttentionCost raw =
      attention_cost_ratio(h, w, cfg.model.ga_embed_channels, cfg.model.spp);
  if (as_json) {
    nlohmann::json j;
    j["input"] = {n, cfg.model.input_channels, h, w};
    if (have_rep) {
      j["rows"] = nlohmann::json::array();
      for (const auto& r : rep.rows) {
        j["rows"].push_back({{"name", r.name},
                             {"kind", r.kind},
                             {"params", r.params},
                             {"flops", r.flops},
                             {"madds", r.madd},
                             {"out", {r.out_shape.n, r.out_shape.c,
                                      r.out_shape.h, r.out_shape.w}},
                             {"activation_bytes", r.activation_bytes}});
      }
      j["totals"] = {{"params", rep.total_params},
                     {"flops", rep.total_flops},
                     {"madds", rep.total_madd},
                     {"peak_activation_bytes", rep.peak_activation_bytes}};
    } else {
      j["model_error"] = rep_err;
    }
    j["attention"] = {{"a", raw.a},
                      {"m", raw.m},
                      {"dense_madds", raw.dense_madds},
                      {"reduced_madds", raw.reduced_madds},
                      {"ratio", raw.ratio}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  if (have_rep) {
    print_report(rep);
  } else {
    std::printf("model profile unavailable for %dx%d input: %s\n", h, w,
                rep_err.c_str());
  }
  std::printf("\n");
  // the raw grid treats --height/--width as the attention grid itself;
  // the model grid is where GA actually runs (1/16 of the input)
  print_attention("raw grid", h, w, cfg.model.ga_embed_channels, cfg.model.spp);
  if (h % 16 == 0 && w % 16 == 0)
    print_attention("model GA grid", h / 16, w / 16,
                    cfg.model.ga_embed_channels, cfg.model.spp);
  return 0;
}

// training containers carry optimizer state next to the weights; the model
// load stays strict over the model.* subset
void load_model_params(ParamSet& ps, const std::string& path) {
  auto entries = parse_container(read_file(path));
  std::vector<NamedTensor> model_only;
  for (auto& e : entries) {
    if (e.name.rfind("opt.", 0) == 0 || e.name.rfind("meta.", 0) == 0)
      continue;
    model_only.push_back(std::move(e));
  }
  load_params(ps, model_only);
}

int cmd_bench(const RunConfig& cfg, const std::string& weights, int h, int w,
              int iters, int warmup) {
  if (iters < 1) throw ConfigError("bench: --iters must be >= 1");
  ModelConfig mc = cfg.model;
  mc.train_mode = !weights.empty();  // containers from training carry aux heads
  CanModel model(mc, cfg.train.seed);
  if (!weights.empty()) load_model_params(model.params, weights);

  std::mt19937_64 rng(7);
  auto x = make_tensor(Shape{1, mc.input_channels, h, w});
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : x->data) v = d(rng);

  RunCtx ctx;  // eval mode, no tape
  for (int i = 0; i < warmup; ++i) model.forward(ctx, x);

  std::vector<double> ms;
  for (int i = 0; i < iters; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    model.forward(ctx, x);
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms[(ms.size() - 1) / 2];
  const std::size_t p95_idx =
      std::min(ms.size() - 1,
               static_cast<std::size_t>(std::ceil(0.95 * double(ms.size()))) -
                   (ms.size() > 1 ? 1 : 0));
  const double p95 = ms[p95_idx];
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= double(ms.size());
  std::printf("bench: input 1x%dx%dx%d, %d iters (%d warmup), backend %s\n",
              mc.input_channels, h, w, iters, warmup,
              kernels::backend_name(kernels::active_backend()).c_str());
  std::printf("median %.2f ms  p95 %.2f ms  mean %.2f ms  fps %.2f\n", median,
              p95, mean, 1000.0 / median);
  std::printf("note: wall-clock timing, machine dependent, NOT reproducible\n");
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& weights,
              const std::string& image_path, const std::string& out_prefix,
              const std::string& gt_path) {
  ModelConfig mc = cfg.model;
  mc.train_mode = true;  // match the tensor set saved by training
  CanModel model(mc, cfg.train.seed);
  load_model_params(model.params, weights);

  ImageU8 img = read_ppm(image_path);
  auto x = image_to_tensor(img);
  const int pad_b = (16 - img.h % 16) % 16;
  const int pad_r = (16 - img.w % 16) % 16;
  if (pad_b >= img.h || pad_r >= img.w)
    fail("infer: input " + std::to_string(img.w) + "x" +
         std::to_string(img.h) + " too small to reflect-pad to a /16 grid");
  if (pad_b > 0 || pad_r > 0) x = ops::reflect_pad_br(x, pad_b, pad_r);

  RunCtx ctx;
  auto out = model.forward(ctx, x);
  Labels full = argmax_map(*out.primary);
  Labels pred(1, img.h, img.w);  // crop back to the original extents
  for (int y = 0; y < img.h; ++y)
    for (int xx = 0; xx < img.w; ++xx)
      pred.v[std::size_t(y) * img.w + xx] = full.v[full.idx(0, y, xx)];

  write_label_pgm(out_prefix + ".pgm", pred);
  write_color_map(out_prefix + "_color.ppm", pred,
                  make_palette(mc.num_classes));
  std::printf("wrote %s.pgm and %s_color.ppm (%dx%d)\n", out_prefix.c_str(),
              out_prefix.c_str(), img.w, img.h);

  if (!gt_path.empty()) {
    Labels gt = read_label_pgm(gt_path);
    MiouResult r = miou(pred, gt, mc.num_classes, cfg.train.ohem.ignore_index);
    std::printf("mIoU vs %s: %.4f\n", gt_path.c_str(), r.mean);
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt) {
  auto results = gradcheck_suite(seed, corrupt);
  int failed = 0;
  std::printf("%-28s %14s  %s\n", "block", "max rel err", "status");
  for (const auto& r : results) {
    std::printf("%-28s %14.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.ok() ? "ok" : "FAIL");
    if (!r.ok()) ++failed;
  }
  if (failed > 0) {
    std::printf("gradcheck: %d block(s) failed\n", failed);
    return 1;
  }
  std::printf("gradcheck: all %zu blocks below 1e-4\n", results.size());
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: self-contained oracle battery. Naive reference code below is
// deliberately written with plain loops, independent of the ops kernels.

float naive_conv_at(const std::vector<float>& in, int c_in, int ih, int iw,
                    const std::vector<float>& w, int k, int co, int y, int x) {
  // single output element of an unpadded-source, pad=k/2 convolution
  float acc = 0.f;
  const int pad = k / 2;
  for (int c = 0; c < c_in; ++c)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        const int sy = y + dy - pad, sx = x + dx - pad;
        if (sy < 0 || sy >= ih || sx < 0 || sx >= iw) continue;
        acc += w[((std::size_t(co) * c_in + c) * k + dy) * k + dx] *
               in[(std::size_t(c) * ih + sy) * iw + sx];
      }
  return acc;
}

// ghost conv with the block's own weights, evaluated by direct loops
std::vector<float> naive_ghost(const blocks::GhostConvT<float>& g,
                               const std::vector<float>& in, int c_in, int h,
                               int w) {
  const int p = g.primary_channels;
  const int pk = g.primary.opts.pad * 2 + 1;
  std::vector<float> primary(std::size_t(p) * h * w);
  for (int co = 0; co < p; ++co)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        primary[(std::size_t(co) * h + y) * w + x] =
            naive_conv_at(in, c_in, h, w, g.primary.w->data, pk, co, y, x);
  std::vector<float> out = primary;
  out.resize(std::size_t(g.out_channels) * h * w);
  const int r = g.out_channels - p;
  if (r > 0) {
    const int ck = g.cheap.opts.pad * 2 + 1;
    for (int j = 0; j < r; ++j) {
      std::vector<float> src(
          primary.begin() + std::ptrdiff_t(g.cheap_idx[j]) * h * w,
          primary.begin() + std::ptrdiff_t(g.cheap_idx[j] + 1) * h * w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          std::vector<float> wj(
              g.cheap.w->data.begin() + std::ptrdiff_t(j) * ck * ck,
              g.cheap.w->data.begin() + std::ptrdiff_t(j + 1) * ck * ck);
          out[(std::size_t(p + j) * h + y) * w + x] =
              naive_conv_at(src, 1, h, w, wj, ck, 0, y, x);
        }
    }
  }
  return out;
}

// dense non-local attention with the GA block's weights: keys/values from
// every grid position, affinity A x A, all arithmetic in plain loops
std::vector<float> naive_dense_attention(
    const ReducedGlobalAttentionT<float>& ga, const std::vector<float>& x,
    int c, int h, int w) {
  const int a = h * w;
  const int e = ga.q_embed.out_channels;
  const int vch = ga.v_embed.out_channels;
  auto q_map = naive_ghost(ga.q_embed, x, c, h, w);       // [e,h,w] on grid
  auto k_map = naive_ghost(ga.k_embed, x, c, a, 1);       // flat extent Ax1
  auto v_map = naive_ghost(ga.v_embed, x, c, a, 1);
  std::vector<float> outmap(std::size_t(vch) * a, 0.f);
  std::vector<float> logits(static_cast<std::size_t>(a));
  for (int qi = 0; qi < a; ++qi) {
    float mx = -1e30f;
    for (int ki = 0; ki < a; ++ki) {
      float dot = 0.f;
      for (int ec = 0; ec < e; ++ec)
        dot += q_map[std::size_t(ec) * a + qi] * k_map[std::size_t(ec) * a + ki];
      logits[std::size_t(ki)] = dot;
      mx = std::max(mx, dot);
    }
    float denom = 0.f;
    for (int ki = 0; ki < a; ++ki) {
      logits[std::size_t(ki)] = std::exp(logits[std::size_t(ki)] - mx);
      denom += logits[std::size_t(ki)];
    }
    for (int ki = 0; ki < a; ++ki) {
      const float aff = logits[std::size_t(ki)] / denom;
      for (int vc = 0; vc < vch; ++vc)
        outmap[std::size_t(vc) * a + qi] +=
            aff * v_map[std::size_t(vc) * a + ki];
    }
  }
  // 1x1 projection + bias + residual
  std::vector<float> res(std::size_t(c) * a);
  for (int co = 0; co < c; ++co)
    for (int p = 0; p < a; ++p) {
      float acc = ga.proj.b->data[std::size_t(co)];
      for (int vc = 0; vc < vch; ++vc)
        acc += ga.proj.w->data[std::size_t(co) * vch + vc] *
               outmap[std::size_t(vc) * a + p];
      res[std::size_t(co) * a + p] = x[std::size_t(co) * a + p] + acc;
    }
  return res;
}

double dense_equivalence_err(std::uint64_t seed, int hw) {
  std::mt19937_64 rng(seed);
  ParamSet ps;
  SppConfig spp;
  spp.scales = {hw};  // pooling to hw x hw over an hw x hw grid is lossless
  GhostConfig ghost;
  const int c = 12;
  ReducedGlobalAttentionT<float> ga(ps, "ga", rng, c, 8, 10, spp, ghost);
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  for (auto& v : ga.proj.w->data) v = d(rng);  // zero-init would mask errors
  auto x = make_tensor(Shape{1, c, hw, hw});
  for (auto& v : x->data) v = d(rng);
  RunCtx ctx;
  auto got = ga.forward(ctx, x);
  auto want = naive_dense_attention(ga, x->data, c, hw, hw);
  double worst = 0;
  for (std::size_t i = 0; i < want.size(); ++i)
    worst = std::max(worst, double(std::abs(got->data[i] - want[i])));
  return worst;
}

int cmd_selftest() {
  struct Check {
    const char* name;
    std::function<bool()> fn;
  };
  std::vector<Check> checks;

  checks.push_back({"spp_positions_m_110", [] {
    return blocks::spp_positions({1, 3, 6, 8}) == 110;
  }});
  checks.push_back({"attention_ratio_64x32", [] {
    AttentionCost ac = attention_cost_ratio(64, 32, 64, SppConfig{});
    return ac.a == 2048 && ac.m == 110 && ratio_1dp(ac.a, ac.m) == "18.6" &&
           ac.dense_madds == 2ull * 2048 * 2048 * 64 &&
           ac.reduced_madds == 2ull * 2048 * 110 * 64;
  }});
  checks.push_back({"dense_attention_equivalence", [] {
    for (std::uint64_t s = 1; s <= 3; ++s) {
      if (dense_equivalence_err(s, 4) > 1e-5) return false;
      if (dense_equivalence_err(s, 8) > 1e-5) return false;
    }
    return true;
  }});
  checks.push_back({"attention_flop_linearity", [] {
    SppConfig spp;
    const int e = 32;
    AttentionCost a1 = attention_cost_ratio(32, 32, e, spp);
    AttentionCost a2 = attention_cost_ratio(32, 64, e, spp);
    AttentionCost a4 = attention_cost_ratio(64, 64, e, spp);
    return a2.reduced_madds == 2 * a1.reduced_madds &&
           a4.reduced_madds == 4 * a1.reduced_madds &&
           a2.dense_madds == 4 * a1.dense_madds &&
           a4.dense_madds == 16 * a1.dense_madds;
  }});
  checks.push_back({"softmax_fixture", [] {
    RunCtx ctx;
    auto x = make_tensor(Shape{1, 1, 1, 3}, std::vector<float>{1, 2, 3});
    auto y = ops::softmax_rows(ctx, x);
    const double want[3] = {0.09003057, 0.24472847, 0.66524096};
    for (int i = 0; i < 3; ++i)
      if (std::abs(y->data[std::size_t(i)] - want[i]) > 1e-6) return false;
    return true;
  }});
  checks.push_back({"adaptive_pool_fixture", [] {
    RunCtx ctx;
    std::vector<float> v(16);
    for (int i = 0; i < 16; ++i) v[std::size_t(i)] = float(i);
    auto x = make_tensor(Shape{1, 1, 4, 4}, v);
    auto y = ops::adaptive_max_pool2d(ctx, x, 2, 2);
    return y->data == std::vector<float>{5, 7, 13, 15};
  }});
  checks.push_back({"hard_swish_fixture", [] {
    RunCtx ctx;
    auto x = make_tensor(Shape{1, 1, 1, 3}, std::vector<float>{1.5f, -3.f, 3.f});
    auto y = ops::hard_swish(ctx, x);
    return std::abs(y->data[0] - 1.125f) < 1e-6f && y->data[1] == 0.0f &&
           std::abs(y->data[2] - 3.0f) < 1e-6f;
  }});
  checks.push_back({"poly_lr_fixture", [] {
    TrainSchedule s;
    s.base_lr = 0.01;
    s.max_iter = 1000;
    return std::abs(poly_lr(0, s) - 0.01) < 1e-12 &&
           poly_lr(1000, s) == 0.0 &&
           std::abs(poly_lr(500, s) - 0.4641 * 0.01) < 1e-6;
  }});
  checks.push_back({"miou_fixture", [] {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 6;
    cm.at(0, 1) = 2;
    cm.at(1, 0) = 1;
    cm.at(1, 1) = 7;
    const double want = 0.5 * (6.0 / 9.0 + 7.0 / 10.0);
    return std::abs(miou_from_confusion(cm).mean - want) < 1e-9;
  }});
  checks.push_back({"ghost_cheaper_than_plain", [] {
    GhostConfig g;
    g.ratio = 2;
    g.primary_kernel = 3;
    g.cheap_kernel = 3;
    ComplexityReport ghost = profile_ghost_conv(16, 32, g, 1, 16, 16);
    ComplexityReport plain = profile_plain_conv(16, 32, 3, 1, 16, 16);
    std::mt19937_64 rng(3);
    ParamSet ps;
    blocks::GhostConvT<float> gc(ps, "g", rng, 16, 32, 2, 3, 3);
    return ghost.total_params < plain.total_params &&
           ghost.total_params == ps.learnable_count();
  }});
  checks.push_back({"weights_roundtrip_and_crc", [] {
    std::mt19937_64 rng(11);
    ParamSet ps;
    blocks::ConvBnActT<float> layer(ps, "l", rng, 3, 8, 3, 1, 1, Act::Relu);
    auto bytes = serialize_container(collect_params(ps));
    auto back = parse_container(bytes);
    ParamSet ps2;
    std::mt19937_64 rng2(99);  // different init, must be overwritten
    blocks::ConvBnActT<float> layer2(ps2, "l", rng2, 3, 8, 3, 1, 1, Act::Relu);
    load_params(ps2, back);
    for (std::size_t i = 0; i < ps.entries.size(); ++i)
      if (ps.entries[i].t->data != ps2.entries[i].t->data) return false;
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x40;
    try {
      parse_container(bad);
      return false;  // corruption must not pass
    } catch (const std::exception&) {}
    return true;
  }});
  checks.push_back({"profiler_matches_recorder", [] {
    ModelConfig mc;
    mc.num_classes = 4;
    mc.spatial_channels = {8, 12, 16, 16};
    mc.backbone_stem_channels = 8;
    mc.backbone = {{8, 16, 16, 3, 2, false, Act::Relu},
                   {16, 32, 16, 3, 1, true, Act::HardSwish},
                   {16, 48, 24, 5, 2, true, Act::HardSwish},
                   {24, 72, 24, 5, 2, true, Act::HardSwish}};
    mc.ga_embed_channels = 8;
    mc.ga_value_channels = 16;
    mc.spp.scales = {1, 2};
    mc.context_out_channels = 16;
    mc.ffm_mid_channels = 16;
    mc.ffm_out_channels = 24;
    ComplexityReport rep = profile(mc, 1, 64, 64);
    CanModel model(mc, 5);
    CostRecorder rec;
    RunCtx ctx{nullptr, false, &rec};
    auto x = make_tensor(Shape{1, 3, 64, 64});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> d(0, 1);
    for (auto& v : x->data) v = d(rng);
    model.forward(ctx, x);
    return rec.total_flops() == rep.total_flops &&
           rec.total_madds() == rep.total_madd;
  }});
  checks.push_back({"uniform_affinity_on_constant", [] {
    RunCtx ctx;
    auto x = make_tensor(Shape{1, 1, 2, 5}, std::vector<float>(10, 3.25f));
    auto y = ops::softmax_rows(ctx, x);
    for (float v : y->data)
      if (std::abs(v - 0.2f) > 1e-7f) return false;
    return true;
  }});
  checks.push_back({"kernel_backend_agreement", [] {
    const auto& ref = kernels::scalar_table();
    const auto& act = kernels::active();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> d(-1, 1);
    std::vector<float> a(7 * 9), b(9 * 5), c1(7 * 5, 0.f), c2(7 * 5, 0.f);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);
    ref.gemm_nn(a.data(), b.data(), c1.data(), 7, 9, 5, false);
    act.gemm_nn(a.data(), b.data(), c2.data(), 7, 9, 5, false);
    for (std::size_t i = 0; i < c1.size(); ++i)
      if (std::abs(c1[i] - c2[i]) > 1e-5f) return false;
    std::vector<float> r1(64), r2(64);
    ref.relu(a.data(), r1.data(), 63);
    act.relu(a.data(), r2.data(), 63);
    for (std::size_t i = 0; i < 63; ++i)
      if (r1[i] != r2[i]) return false;  // elementwise must be bit-equal
    return true;
  }});
  checks.push_back({"synth_label_color_agreement", [] {
    std::uint64_t agree = 0, total = 0;
    for (std::uint64_t i = 0; i < 8; ++i) {
      SynthSample s = synth_sample(123, i, 64, 64, 4);
      Labels dec = decode_by_color(*s.image, 4);
      for (std::size_t p = 0; p < dec.v.size(); ++p) {
        agree += dec.v[p] == s.label.v[p];
        ++total;
      }
    }
    return double(agree) / double(total) >= 0.99;
  }});

  int failed = 0;
  for (auto& c : checks) {
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("  (%s threw: %s)\n", c.name, e.what());
      ok = false;
    }
    std::printf("%-34s %s\n", c.name, ok ? "PASS" : "FAIL");
    if (!ok) ++failed;
  }
  std::printf("selftest: %d/%zu passed\n", int(checks.size()) - failed,
              checks.size());
  return std::min(failed, 125);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-branch semantic segmentation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, resume_path, weights_path, image_path,
      out_prefix, gt_path, corrupt;
  int height = 1024, width = 2048, batch = 1, iters = 20, warmup = 3;
  std::uint64_t seed = 1;
  bool as_json = false;

  int stop_iter = 0;
  auto* train = app.add_subcommand("train", "train on the synthetic dataset");
  train->add_option("--config", config_path, "JSON run config")->required();
  train->add_option("--out", out_path, "weight container to write");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--stop-iter", stop_iter,
                    "pause after this many total iterations (resumable)");

  auto* infer = app.add_subcommand("infer", "segment a PPM image");
  infer->add_option("--config", config_path, "JSON run config")->required();
  infer->add_option("--weights", weights_path, "weight container");
  infer->add_option("--image", image_path, "input PPM (P6)")->required();
  infer->add_option("--out-prefix", out_prefix,
                    "output prefix (<p>.pgm, <p>_color.ppm)");
  infer->add_option("--gt", gt_path, "optional PGM ground truth; prints mIoU");

  auto* prof = app.add_subcommand("profile", "analytical complexity report");
  prof->add_option("--config", config_path, "JSON run config");
  prof->add_option("--height", height, "input height");
  prof->add_option("--width", width, "input width");
  prof->add_option("--batch", batch, "batch size");
  prof->add_flag("--json", as_json, "machine-readable output");

  auto* bench = app.add_subcommand("bench", "wall-clock forward timing");
  bench->add_option("--config", config_path, "JSON run config");
  bench->add_option("--weights", weights_path, "optional weight container");
  bench->add_option("--height", height, "input height");
  bench->add_option("--width", width, "input width");
  bench->add_option("--iters", iters, "timed iterations");
  bench->add_option("--warmup", warmup, "warmup iterations");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradients");
  grad->add_option("--seed", seed, "RNG seed");
  grad->add_option("--corrupt", corrupt,
                   "skew the named case's gradients (negative control)");

  auto* self = app.add_subcommand("selftest", "oracle equivalence battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage mirrors bad config
  }

  try {
    RunConfig cfg;  // defaults when no --config given
    if (!config_path.empty()) cfg = load_config(config_path);

    if (app.got_subcommand(train)) {
      const std::string out = out_path.empty() ? cfg.io.weights : out_path;
      TrainResult r = train_run(
          cfg, out, resume_path,
          [](const std::string& line) { std::cout << line << "\n"; },
          stop_iter);
      std::printf("done: %d iters, final val mIoU %.4f\n", r.iters_run,
                  r.final_val_miou);
      return 0;
    }
    if (app.got_subcommand(infer)) {
      const std::string w = weights_path.empty() ? cfg.io.weights : weights_path;
      const std::string p = out_prefix.empty() ? cfg.io.out_prefix : out_prefix;
      return cmd_infer(cfg, w, image_path, p, gt_path);
    }
    if (app.got_subcommand(prof)) {
      if (height < 16 || width < 16 || height % 16 || width % 16)
        throw ConfigError("profile: height/width must be /16 multiples");
      return cmd_profile(cfg, batch, height, width, as_json);
    }
    if (app.got_subcommand(bench))
      return cmd_bench(cfg, weights_path, height, width, iters, warmup);
    if (app.got_subcommand(grad)) return cmd_gradcheck(seed, corrupt);
    if (app.got_subcommand(self)) return cmd_selftest();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
