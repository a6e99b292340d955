#include "canseg/train.hpp"

#include <cmath>
#include <cstdio>

#include "canseg/data_io.hpp"
#include "canseg/synth.hpp"

namespace canseg {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// One batch: sample indices wrap over the train slice; the augmentation RNG
// is keyed on the global draw counter so revisits of the same index get
// fresh augmentations, independent of batching or resume point.
void make_batch(const RunConfig& cfg, std::int64_t first_draw, Tensor& images,
                Labels& labels) {
  const auto& ds = cfg.train.dataset;
  for (int b = 0; b < cfg.train.batch_size; ++b) {
    const std::int64_t draw = first_draw + b;
    const std::uint64_t index =
        static_cast<std::uint64_t>(draw % ds.train_count);
    SynthSample s = synth_sample(cfg.train.seed, index, ds.height, ds.width,
                                 cfg.model.num_classes);
    if (ds.augment) {
      std::mt19937_64 aug(
          mix64(cfg.train.seed ^ mix64(static_cast<std::uint64_t>(draw) +
                                       0xA46'0000)));
      augment_sample(s, aug);
    }
    const std::size_t plane =
        static_cast<std::size_t>(3) * ds.height * ds.width;
    std::copy(s.image->data.begin(), s.image->data.end(),
              images.data.begin() + static_cast<std::ptrdiff_t>(b * plane));
    std::copy(s.label.v.begin(), s.label.v.end(),
              labels.v.begin() +
                  static_cast<std::ptrdiff_t>(
                      static_cast<std::size_t>(b) * ds.height * ds.width));
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

double evaluate_val_miou(CanModelT<float>& model, const RunConfig& cfg) {
  const auto& ds = cfg.train.dataset;
  ConfusionMatrix cm(cfg.model.num_classes);
  RunCtx ctx;  // no tape, eval-mode batch norm
  for (int i = 0; i < ds.val_count; ++i) {
    SynthSample s =
        synth_sample(cfg.train.seed,
                     static_cast<std::uint64_t>(ds.train_count + i), ds.height,
                     ds.width, cfg.model.num_classes);
    auto out = model.forward(ctx, s.image);
    cm.add(argmax_map(*out.primary), s.label, cfg.train.ohem.ignore_index);
  }
  return miou_from_confusion(cm).mean;
}

TrainResult train_run(const RunConfig& cfg, const std::string& out_path,
                      const std::string& resume_path, const LogFn& log,
                      int stop_iter) {
  ModelConfig mc = cfg.model;
  mc.train_mode = true;
  CanModel model(mc, cfg.train.seed);
  Sgd opt(model.params);
  int start_iter = 0;

  if (!resume_path.empty()) {
    auto entries = parse_container(read_file(resume_path));
    std::vector<NamedTensor> weights;
    for (auto& t : entries) {
      if (t.name == "meta.iter") {
        start_iter = static_cast<int>(t.data.at(0));
      } else if (t.name.rfind("opt.", 0) == 0) {
        const std::string pname = t.name.substr(4, t.name.size() - 4 - 2);
        bool found = false;
        for (std::size_t i = 0; i < model.params.entries.size(); ++i) {
          if (model.params.entries[i].name != pname) continue;
          check(t.data.size() == opt.velocity[i].size(),
                "resume: velocity size mismatch for " + pname);
          opt.velocity[i] = t.data;
          found = true;
          break;
        }
        check(found, "resume: velocity \"" + t.name +
                         "\" matches no model parameter");
      } else {
        weights.push_back(std::move(t));
      }
    }
    load_params(model.params, weights);
    if (log)
      log("resumed from " + resume_path + " at iter " +
          std::to_string(start_iter));
  }

  const auto& ds = cfg.train.dataset;
  const auto& sched = cfg.train.schedule;
  check(ds.train_count > 0 && cfg.train.batch_size > 0,
        "train: empty dataset or batch");

  TrainResult res;
  res.iters_run = start_iter;
  auto images =
      make_tensor(Shape{cfg.train.batch_size, 3, ds.height, ds.width});
  Labels labels(cfg.train.batch_size, ds.height, ds.width);

  const int end_iter = stop_iter > 0 ? std::min(stop_iter, sched.max_iter)
                                     : sched.max_iter;
  for (int iter = start_iter; iter < end_iter; ++iter) {
    make_batch(cfg, static_cast<std::int64_t>(iter) * cfg.train.batch_size,
               *images, labels);

    GraphT<float> graph;
    RunCtx ctx{&graph, /*training=*/true, nullptr};
    model.params.zero_grads();
    auto out = model.forward(ctx, images);
    LossReport rep = joint_loss(ctx, out, labels, cfg.train.ohem);
    graph.backward(rep.total);

    if (cfg.train.grad_clip > 0) clip_grad_norm(model.params, cfg.train.grad_clip);

    const double lr = poly_lr(iter, sched);
    opt.step(model.params, static_cast<float>(lr),
             static_cast<float>(sched.momentum),
             static_cast<float>(sched.weight_decay));
    res.iters_run = iter + 1;

    const bool last = iter + 1 == sched.max_iter;
    if (log && (iter % cfg.train.log_every == 0 || last)) {
      log("iter " + std::to_string(iter) + "/" +
          std::to_string(sched.max_iter) + "  lr " + fmt("%.5f", lr) +
          "  loss " + fmt("%.4f", rep.total->data[0]) + "  (p " +
          fmt("%.4f", rep.l_p) + " c1 " + fmt("%.4f", rep.l_c1) + " c2 " +
          fmt("%.4f", rep.l_c2) + ")  kept " + std::to_string(rep.kept_p));
    }

    if ((iter + 1) % cfg.train.val_every == 0 || last) {
      res.final_val_miou = evaluate_val_miou(model, cfg);
      if (log)
        log("iter " + std::to_string(iter + 1) + "  val mIoU " +
            fmt("%.4f", res.final_val_miou));
      if (cfg.train.stop_at_miou > 0.0 &&
          res.final_val_miou >= cfg.train.stop_at_miou) {
        res.hit_target = true;
        if (log)
          log("target mIoU " + fmt("%.4f", cfg.train.stop_at_miou) +
              " reached, stopping");
        break;
      }
    }
  }

  if (!out_path.empty()) {
    auto entries = collect_params(model.params);
    for (std::size_t i = 0; i < model.params.entries.size(); ++i) {
      if (!model.params.entries[i].learnable) continue;
      NamedTensor v;
      v.name = "opt." + model.params.entries[i].name + ".v";
      v.shape = model.params.entries[i].t->shape;
      v.data = opt.velocity[i];
      entries.push_back(std::move(v));
    }
    NamedTensor it;
    it.name = "meta.iter";
    it.shape = {1, 1, 1, 1};
    it.data = {static_cast<float>(res.iters_run)};
    entries.push_back(std::move(it));
    write_file(out_path, serialize_container(entries));
    if (log) log("saved " + out_path);
  }
  return res;
}

}  // namespace canseg
