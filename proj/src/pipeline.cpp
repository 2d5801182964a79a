#include "joined/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "joined/augment.hpp"
#include "joined/parallel.hpp"

namespace joined::pipeline {

using losses::Branch;
using losses::BranchSet;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c),    static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

LabelMask threshold_seg(const Tensor& probs, double level) {
  if (probs.n() != 1 || probs.c() != 3) {
    throw std::invalid_argument("threshold_seg: expected (1,3,H,W), got " + probs.shape().str());
  }
  LabelMask m(probs.h(), probs.w());
  for (int y = 0; y < probs.h(); ++y) {
    for (int x = 0; x < probs.w(); ++x) {
      if (probs(0, 0, y, x) > level) m(y, x) = Label::OC;
      else if (probs(0, 1, y, x) > level) m(y, x) = Label::OD;
    }
  }
  return m;
}

namespace {

Tensor stack(const std::vector<const Tensor*>& items) {
  const Shape one = items.front()->shape();
  Tensor out(static_cast<int>(items.size()), one.c, one.h, one.w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i]->shape(), one, "stack");
    std::copy(items[i]->values().begin(), items[i]->values().end(),
              out.sample(static_cast<int>(i)).begin());
  }
  return out;
}

Tensor slice(const Tensor& batch, int n) {
  Tensor out(1, batch.c(), batch.h(), batch.w());
  std::copy(batch.sample(n).begin(), batch.sample(n).end(), out.values().begin());
  return out;
}

Tensor concat(const std::vector<const Tensor*>& parts) {
  int c = 0;
  for (const auto* p : parts) c += p->c();
  const Shape s = parts.front()->shape();
  Tensor out(1, c, s.h, s.w);
  auto it = out.values().begin();
  for (const auto* p : parts) {
    require_same_shape({1, p->c(), s.h, s.w}, p->shape(), "concat");
    it = std::copy(p->values().begin(), p->values().end(), it);
  }
  return out;
}

bool finite(double v) { return std::isfinite(v); }

/// Accumulates dL/dc through a local soft-argmax around `at`.
void soft_argmax_grad(std::span<const float> plane, int h, int w, Coordinate at, double gx,
                      double gy, std::span<float> grad, int radius) {
  const int cx = static_cast<int>(std::lround(at.x)), cy = static_cast<int>(std::lround(at.y));
  const int x0 = std::max(0, cx - radius), x1 = std::min(w - 1, cx + radius);
  const int y0 = std::max(0, cy - radius), y1 = std::min(h - 1, cy + radius);
  double sum = 0, sx = 0, sy = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double v = std::max(0.0f, plane[static_cast<std::size_t>(y) * w + x]);
      sum += v;
      sx += v * x;
      sy += v * y;
    }
  }
  if (sum < 1e-8) return;
  const double mx = sx / sum, my = sy / sum;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (plane[static_cast<std::size_t>(y) * w + x] <= 0.0f) continue;
      grad[static_cast<std::size_t>(y) * w + x] +=
          static_cast<float>((gx * (x - mx) + gy * (y - my)) / sum);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

CoarseItem prepare_coarse(const FundusSample& s, int size, double fov_floor) {
  const auto pre = preprocess::preprocess(s.image, size, fov_floor);
  CoarseItem item;
  item.image_id = s.image_id;
  item.image = pre.image;
  if (s.mask) item.mask = preprocess::mask_to_network(*s.mask, pre);
  if (s.landmarks.od_center) item.landmarks.od_center = pre.to_network(*s.landmarks.od_center);
  if (s.landmarks.fovea) item.landmarks.fovea = pre.to_network(*s.landmarks.fovea);
  return item;
}

CoarseTargets make_coarse_targets(const CoarseItem& item, double sigma) {
  const int h = item.image.h(), w = item.image.w();
  CoarseTargets t;
  t.distance = targets::make_distance_map(h, w, item.landmarks);
  t.detection = targets::make_detection_target(h, w, item.landmarks, sigma);
  if (item.mask) t.onehot = targets::one_hot(*item.mask);
  return t;
}

CoarseLandmarks coarse_landmarks(const Tensor& distance, const Tensor& heatmap,
                                 const config::InferenceConfig& cfg) {
  CoarseLandmarks out;
  const Tensor& ref = heatmap.empty() ? distance : heatmap;
  if (ref.empty()) throw std::invalid_argument("coarse_landmarks: no landmark outputs");
  const int h = ref.h(), w = ref.w();
  const double threshold = cfg.fallback.threshold;

  auto& est = out.estimate;
  if (!heatmap.empty()) est = extraction::coords_from_heatmap(heatmap);
  if (!distance.empty()) {
    const auto peaks = extraction::peaks_from_distance_map(distance, cfg.peak_radius * h);
    if (!peaks.degenerate) {
      out.distance_landmarks = heatmap.empty()
                                   ? extraction::OrderedLandmarks{peaks.first, peaks.second}
                                   : extraction::pair_consistency(est, peaks);
    }
  }

  const bool od_from_heatmap = !heatmap.empty() && est.confidence_od >= threshold;
  if (!od_from_heatmap) {
    if (out.distance_landmarks) {
      est.od = out.distance_landmarks->od;
    } else {
      est.od = {(w - 1) / 2.0, (h - 1) / 2.0};
      out.od_degenerate = true;
    }
  }
  if (heatmap.empty()) {
    if (out.distance_landmarks) {
      est.fovea = out.distance_landmarks->fovea;
      est.confidence_fovea = 1.0;
    } else {
      est.confidence_fovea = 0.0;
    }
  }
  extraction::apply_fovea_fallback(est, h, w, cfg.fallback);
  return out;
}

CoarseResult run_coarse(nn::JsdmNet<float>& net, const Tensor& image,
                        const config::RunConfig& cfg) {
  const int size = net.spec().input_size;
  CoarseResult r;
  r.pre = preprocess::preprocess(image, size, cfg.inference.fov_floor);
  auto out = net.forward(r.pre.image, net.spec().enabled, nn::Mode::Eval);
  r.distance = std::move(out.distance);
  r.heatmap = std::move(out.heatmap);
  r.seg = std::move(out.seg);
  r.mask = r.seg.empty() ? LabelMask(size, size) : threshold_seg(r.seg);
  auto lm = coarse_landmarks(r.distance, r.heatmap, cfg.inference);
  r.net_estimate = lm.estimate;
  r.distance_landmarks = lm.distance_landmarks;
  r.od_degenerate = lm.od_degenerate;
  r.estimate = r.net_estimate;
  r.estimate.od = r.pre.to_original(r.net_estimate.od);
  r.estimate.fovea = r.pre.to_original(r.net_estimate.fovea);
  return r;
}

Tensor to_original(const Tensor& map, const CoarseResult& c) {
  if (map.empty()) return {};
  return geometry::warp_bilinear(map, c.pre.to_net.inverse(), c.pre.src_h, c.pre.src_w);
}

LabelMask to_original(const LabelMask& mask, const CoarseResult& c) {
  return geometry::warp_nearest(mask, c.pre.to_net.inverse(), c.pre.src_h, c.pre.src_w);
}

// ---------------------------------------------------------------------------

CoarseBatchLoss coarse_loss(const nn::JsdmOutputs<float>& out,
                            const std::vector<CoarseTargets>& tg, BranchSet active,
                            const config::CoarseConfig& cfg, double peak_radius) {
  const int n = static_cast<int>(tg.size());
  const auto& w = cfg.weights;
  CoarseBatchLoss res;
  double l_p = 0, l_d = 0, l_s = 0;

  if (active.contains(Branch::Predictor)) {
    std::vector<const Tensor*> gts;
    std::vector<bool> sup;
    for (const auto& t : tg) {
      gts.push_back(&t.distance.values);
      sup.push_back(t.distance.supervised);
    }
    res.grads.distance = Tensor(out.distance.shape());
    l_p = losses::loss_p(stack(gts), out.distance, sup, &res.grads.distance, 1.0);
  }

  if (active.contains(Branch::Detector)) {
    std::vector<const Tensor*> hs, ms;
    for (const auto& t : tg) {
      hs.push_back(&t.detection.heatmap.channels);
      ms.push_back(&t.detection.mask.channels);
    }
    res.grads.heatmap = Tensor(out.heatmap.shape());
    const int h = out.heatmap.h(), wd = out.heatmap.w();
    std::vector<losses::CoordinatePair> c_p, c_d;
    std::vector<extraction::LandmarkEstimate> det;
    std::vector<extraction::OrderedLandmarks> dist;
    std::vector<int> who;
    if (!out.distance.empty()) {
      for (int i = 0; i < n; ++i) {
        const Tensor hm = slice(out.heatmap, i);
        const auto est = extraction::coords_from_heatmap(hm);
        const auto peaks = extraction::peaks_from_distance_map(slice(out.distance, i),
                                                               peak_radius * h);
        if (peaks.degenerate) continue;
        const auto ord = extraction::pair_consistency(est, peaks);
        who.push_back(i);
        det.push_back(est);
        dist.push_back(ord);
        c_d.push_back({losses::normalize(est.od, h, wd), losses::normalize(est.fovea, h, wd)});
        c_p.push_back({losses::normalize(ord.od, h, wd), losses::normalize(ord.fovea, h, wd)});
      }
    }
    const auto terms = losses::loss_d(stack(hs), out.heatmap, c_p, c_d, stack(ms),
                                      &res.grads.heatmap, w.lambda0);
    l_d = terms.total();

    // Coordinate consistency through a local soft-argmax surrogate.
    if (cfg.consistency_backprop != config::ConsistencyBackprop::None && !c_p.empty()) {
      if (cfg.consistency_backprop == config::ConsistencyBackprop::Both &&
          res.grads.distance.empty()) {
        res.grads.distance = Tensor(out.distance.shape());
      }
      const double sigma = h / cfg.sigma_divisor;
      const int radius = std::max(2, static_cast<int>(std::lround(2 * sigma)));
      for (std::size_t k = 0; k < c_p.size(); ++k) {
        const int i = who[k];
        const auto a = c_p[k].flat(), b = c_d[k].flat();
        // d/d c_D of mean((a-b)^2) over 4 values, in pixel units, batch-averaged.
        const double scale = w.lambda0 / static_cast<double>(c_p.size());
        std::array<double, 4> g{};
        for (int j = 0; j < 4; ++j) {
          g[j] = scale * 0.5 * (b[j] - a[j]) / ((j % 2 == 0 ? wd : h) - 1);
        }
        const Coordinate det_pts[2] = {det[k].od, det[k].fovea};
        const Coordinate dist_pts[2] = {dist[k].od, dist[k].fovea};
        for (int lm = 0; lm < 2; ++lm) {
          soft_argmax_grad(out.heatmap.plane(i, lm), h, wd, det_pts[lm], g[2 * lm],
                           g[2 * lm + 1], res.grads.heatmap.plane(i, lm), radius);
          if (cfg.consistency_backprop == config::ConsistencyBackprop::Both) {
            soft_argmax_grad(out.distance.plane(i, 0), h, wd, dist_pts[lm], -g[2 * lm],
                             -g[2 * lm + 1], res.grads.distance.plane(i, 0), radius);
          }
        }
      }
    }
  }

  if (active.contains(Branch::Segmentor)) {
    res.grads.seg = Tensor(out.seg.shape());
    int count = 0;
    for (const auto& t : tg) count += t.onehot ? 1 : 0;
    if (count > 0) {
      for (int i = 0; i < n; ++i) {
        if (!tg[i].onehot) continue;
        Tensor g(1, 3, out.seg.h(), out.seg.w());
        l_s += losses::loss_s(*tg[i].onehot, slice(out.seg, i), &g, w.lambda1 / count);
        std::copy(g.values().begin(), g.values().end(), res.grads.seg.sample(i).begin());
      }
      l_s /= count;
    }
  }

  res.report = losses::combine(l_p, l_d, l_s, active, w);
  return res;
}

std::vector<EpochLog> train_coarse(nn::JsdmNet<float>& net, const std::vector<FundusSample>& data,
                                   const config::RunConfig& cfg, const EpochCallback& cb) {
  if (data.empty()) throw InputError("train_coarse: empty training set");
  const auto& cc = cfg.coarse;
  const int size = net.spec().input_size;
  const double sigma = size / cc.sigma_divisor;
  const int n = static_cast<int>(data.size());

  std::vector<CoarseItem> items(n);
  parallel_for(n, [&](int i) { items[i] = prepare_coarse(data[i], size, cfg.inference.fov_floor); });
  std::vector<CoarseTargets> fixed;
  if (!cc.augment) {
    fixed.resize(n);
    parallel_for(n, [&](int i) { fixed[i] = make_coarse_targets(items[i], sigma); });
  }

  nn::Adam<float> adam(net.params(), cc.lr);
  const BranchSet enabled = net.spec().enabled;
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= cc.epochs; ++epoch) {
    const BranchSet active = losses::jsdm_schedule(epoch, cc.weights, enabled);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = stream(cfg.seed, epoch, 0, 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog entry;
    entry.epoch = epoch;
    entry.report.active = active;
    int batches = 0;
    for (int start = 0; start < n; start += cc.batch_size) {
      const int end = std::min(n, start + cc.batch_size);
      const int bn = end - start;
      std::vector<CoarseItem> aug(bn);
      std::vector<CoarseTargets> tg(bn);
      parallel_for(bn, [&](int j) {
        const int idx = order[start + j];
        if (!cc.augment) {
          tg[j] = fixed[idx];
          aug[j] = items[idx];
          return;
        }
        auto rng = stream(cfg.seed, epoch, idx, 2);
        augment::AugmentSample a{items[idx].image, items[idx].mask, items[idx].landmarks, {}, {}};
        a = augment::augment(std::move(a), cfg.augment, rng);
        aug[j] = {items[idx].image_id, std::move(a.image), std::move(a.mask), a.landmarks};
        tg[j] = make_coarse_targets(aug[j], sigma);
      });
      std::vector<const Tensor*> imgs;
      for (const auto& a : aug) imgs.push_back(&a.image);
      const Tensor x = stack(imgs);

      const auto out = net.forward(x, active, nn::Mode::Train);
      auto loss = coarse_loss(out, tg, active, cc, cfg.inference.peak_radius);
      if (!finite(loss.report.total)) {
        throw std::runtime_error("non-finite coarse loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      net.zero_grad();
      net.backward(loss.grads);
      adam.step();
      entry.report.l_p += loss.report.l_p;
      entry.report.l_d += loss.report.l_d;
      entry.report.l_s += loss.report.l_s;
      entry.report.total += loss.report.total;
      ++batches;
    }
    entry.report.l_p /= batches;
    entry.report.l_d /= batches;
    entry.report.l_s /= batches;
    entry.report.total /= batches;
    log.push_back(entry);
    if (cb) cb(entry);
  }
  return log;
}

// ---------------------------------------------------------------------------

geometry::RoiBox seg_roi(const CoarseResult& coarse, int crop_size, int h, int w) {
  const Coordinate center =
      coarse.od_degenerate ? Coordinate{(w - 1) / 2.0, (h - 1) / 2.0} : coarse.estimate.od;
  return geometry::crop_roi(center, crop_size, h, w);
}

Tensor fsm_input(const Tensor& image, const LabelMask& coarse_mask, const geometry::RoiBox& box) {
  const Tensor rgb = geometry::extract(image, box);
  const LabelMask m = geometry::extract(coarse_mask, box);
  Tensor cond(1, 1, m.h(), m.w());
  for (int y = 0; y < m.h(); ++y) {
    for (int x = 0; x < m.w(); ++x) cond(0, 0, y, x) = static_cast<float>(m(y, x)) / 2.0f;
  }
  Tensor out = concat({&rgb, &cond});
  if (out.c() != 4) throw std::logic_error("fsm_input: expected 4 channels");
  return out;
}

Tensor flm_input(const Tensor& image, const Tensor& distance, const Tensor& heatmap,
                 const geometry::RoiBox& box) {
  const Tensor rgb = geometry::extract(image, box);
  const Tensor d = distance.empty() ? Tensor(1, 1, rgb.h(), rgb.w())
                                    : geometry::extract(distance, box);
  const Tensor hm = heatmap.empty() ? Tensor(1, 2, rgb.h(), rgb.w())
                                    : geometry::extract(heatmap, box);
  Tensor out = concat({&rgb, &d, &hm});
  if (out.c() != 6) throw std::logic_error("flm_input: expected 6 channels");
  return out;
}

LabelMask run_fine_seg(nn::FsmNet<float>& fsm, const Tensor& image, const CoarseResult& coarse,
                       const config::RunConfig& cfg) {
  (void)cfg;
  const int k = fsm.spec().input_size;
  const auto box = seg_roi(coarse, k, image.h(), image.w());
  const Tensor x = fsm_input(image, to_original(coarse.mask, coarse), box);
  const Tensor probs = fsm.forward(x, nn::Mode::Eval);
  LabelMask full(image.h(), image.w());
  geometry::paste(full, threshold_seg(probs), box);
  return full;
}

FineLocResult run_fine_loc(nn::FlmNet<float>& flm, const Tensor& image,
                           const CoarseResult& coarse, const config::RunConfig& cfg) {
  (void)cfg;
  const int k = flm.spec().input_size;
  FineLocResult r;
  r.box = geometry::crop_roi(coarse.estimate.fovea, k, image.h(), image.w());
  const Tensor x = flm_input(image, to_original(coarse.distance, coarse),
                             to_original(coarse.heatmap, coarse), r.box);
  const auto out = flm.forward(x, nn::Mode::Eval);
  r.regression = losses::denormalize({out.coords(0, 0, 0, 0), out.coords(0, 1, 0, 0)}, k, k);
  r.heatmap = extraction::peak_from_plane(out.heatmap.plane(0, 0), k, k).at;
  r.fovea = r.box.uncrop(extraction::ensemble_coords(r.regression, r.heatmap));
  return r;
}

FineContext fine_context(nn::JsdmNet<float>& coarse, const std::vector<FundusSample>& data,
                         const config::RunConfig& cfg) {
  FineContext ctx;
  for (const auto& s : data) {
    auto r = run_coarse(coarse, s.image, cfg);
    ctx.coarse_masks.push_back(to_original(r.mask, r));
    ctx.distances.push_back(to_original(r.distance, r));
    ctx.heatmaps.push_back(to_original(r.heatmap, r));
    ctx.coarse.push_back(std::move(r));
  }
  return ctx;
}

namespace {

Coordinate jittered(Coordinate c, int jitter, std::mt19937_64& rng) {
  if (jitter <= 0) return c;
  std::uniform_int_distribution<int> d(-jitter, jitter);
  const int dx = d(rng);
  const int dy = d(rng);
  return {c.x + dx, c.y + dy};
}

struct SegCrop {
  Tensor input;   // (1,4,K,K)
  Tensor target;  // (1,3,K,K)
};

SegCrop seg_crop(const FundusSample& s, const FineContext& ctx, int i,
                 const config::RunConfig& cfg, int epoch, bool train) {
  const auto& fc = cfg.fine_seg;
  Coordinate center = ctx.coarse[i].estimate.od;
  if (fc.teacher_forcing && s.landmarks.od_center) center = *s.landmarks.od_center;
  else if (ctx.coarse[i].od_degenerate) center = {(s.w() - 1) / 2.0, (s.h() - 1) / 2.0};
  auto rng = stream(cfg.seed, epoch, i, 3);
  if (train) center = jittered(center, fc.jitter, rng);
  const auto box = geometry::crop_roi(center, fc.crop_size, s.h(), s.w());
  Tensor x = fsm_input(s.image, ctx.coarse_masks[i], box);
  LabelMask m = geometry::extract(*s.mask, box);
  if (train && fc.augment) {
    Tensor rgb(1, 3, x.h(), x.w()), cond(1, 1, x.h(), x.w());
    std::copy_n(x.values().begin(), rgb.size(), rgb.values().begin());
    std::copy_n(x.values().begin() + rgb.size(), cond.size(), cond.values().begin());
    augment::AugmentSample a{std::move(rgb), std::move(m), {}, std::move(cond), {}};
    a = augment::augment(std::move(a), cfg.augment, rng);
    x = concat({&a.image, &*a.distance});
    m = std::move(*a.mask);
  }
  return {std::move(x), targets::one_hot(m)};
}

struct LocCrop {
  Tensor input;    // (1,6,K,K)
  Coordinate target;  // normalized to the crop
  Tensor heatmap;  // (1,1,K,K)
  bool valid = false;
};

LocCrop loc_crop(const FundusSample& s, const FineContext& ctx, int i,
                 const config::RunConfig& cfg, int epoch, bool train) {
  const auto& fc = cfg.fine_loc;
  LocCrop out;
  if (!s.landmarks.fovea) return out;
  Coordinate center = fc.teacher_forcing ? *s.landmarks.fovea : ctx.coarse[i].estimate.fovea;
  auto rng = stream(cfg.seed, epoch, i, 4);
  if (train) center = jittered(center, fc.jitter, rng);
  const int k = fc.crop_size;
  const auto box = geometry::crop_roi(center, k, s.h(), s.w());
  Tensor x = flm_input(s.image, ctx.distances[i], ctx.heatmaps[i], box);
  std::optional<Coordinate> fovea = box.crop(*s.landmarks.fovea);
  if (fovea->x < 0 || fovea->y < 0 || fovea->x > k - 1 || fovea->y > k - 1) return out;
  if (train && fc.augment) {
    Tensor rgb(1, 3, k, k), d(1, 1, k, k), hm(1, 2, k, k);
    auto it = x.values().begin();
    std::copy_n(it, rgb.size(), rgb.values().begin());
    std::copy_n(it + rgb.size(), d.size(), d.values().begin());
    std::copy_n(it + rgb.size() + d.size(), hm.size(), hm.values().begin());
    augment::AugmentSample a{std::move(rgb), {}, {std::nullopt, fovea}, std::move(d), std::move(hm)};
    a = augment::augment(std::move(a), cfg.augment, rng);
    fovea = a.landmarks.fovea;
    if (!fovea) return out;
    x = concat({&a.image, &*a.distance, &*a.heatmap});
  }
  out.input = std::move(x);
  out.target = losses::normalize(*fovea, k, k);
  out.heatmap = targets::gaussian_heatmap(k, k, fovea, k / fc.sigma_divisor);
  out.valid = true;
  return out;
}

}  // namespace

std::vector<FineEpochLog> train_fine_seg(nn::FsmNet<float>& fsm,
                                         const std::vector<FundusSample>& data,
                                         const FineContext& ctx, const config::RunConfig& cfg,
                                         const FineCallback& cb) {
  const auto& fc = cfg.fine_seg;
  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    if (data[i].mask) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("train_fine_seg: no sample has a mask");
  nn::Adam<float> adam(fsm.params(), fc.lr);
  std::vector<FineEpochLog> log;
  for (int epoch = 1; epoch <= fc.epochs; ++epoch) {
    auto order = usable;
    auto shuffle_rng = stream(cfg.seed, epoch, 0, 5);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double acc = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += fc.batch_size) {
      const int bn = static_cast<int>(std::min(order.size(), start + fc.batch_size) - start);
      std::vector<SegCrop> crops(bn);
      parallel_for(bn, [&](int j) {
        const int i = order[start + j];
        crops[j] = seg_crop(data[i], ctx, i, cfg, epoch, true);
      });
      std::vector<const Tensor*> xs, ts;
      for (const auto& c : crops) {
        xs.push_back(&c.input);
        ts.push_back(&c.target);
      }
      const Tensor target = stack(ts);
      const Tensor probs = fsm.forward(stack(xs), nn::Mode::Train);
      Tensor grad(probs.shape());
      const double loss = losses::loss_s(target, probs, &grad);
      if (!finite(loss)) {
        throw std::runtime_error("non-finite fine_seg loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      fsm.zero_grad();
      fsm.backward(grad);
      adam.step();
      acc += loss;
      ++batches;
    }
    log.push_back({epoch, acc / batches});
    if (cb) cb(log.back());
  }
  return log;
}

double fine_seg_loss(nn::FsmNet<float>& fsm, const std::vector<FundusSample>& data,
                     const FineContext& ctx, const config::RunConfig& cfg) {
  double acc = 0;
  int count = 0;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    if (!data[i].mask) continue;
    const auto crop = seg_crop(data[i], ctx, i, cfg, 0, false);
    acc += losses::loss_s(crop.target, fsm.forward(crop.input, nn::Mode::Eval));
    ++count;
  }
  return count ? acc / count : 0.0;
}

std::vector<FineEpochLog> train_fine_loc(nn::FlmNet<float>& flm,
                                         const std::vector<FundusSample>& data,
                                         const FineContext& ctx, const config::RunConfig& cfg,
                                         const FineCallback& cb) {
  const auto& fc = cfg.fine_loc;
  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    if (data[i].landmarks.fovea) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("train_fine_loc: no sample has a fovea annotation");
  nn::Adam<float> adam(flm.params(), fc.lr);
  std::vector<FineEpochLog> log;
  for (int epoch = 1; epoch <= fc.epochs; ++epoch) {
    auto order = usable;
    auto shuffle_rng = stream(cfg.seed, epoch, 0, 6);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double acc = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += fc.batch_size) {
      const int bn = static_cast<int>(std::min(order.size(), start + fc.batch_size) - start);
      std::vector<LocCrop> crops(bn);
      parallel_for(bn, [&](int j) {
        const int i = order[start + j];
        crops[j] = loc_crop(data[i], ctx, i, cfg, epoch, true);
      });
      std::erase_if(crops, [](const LocCrop& c) { return !c.valid; });
      if (crops.empty()) continue;
      const int m = static_cast<int>(crops.size());
      std::vector<const Tensor*> xs, hs;
      for (const auto& c : crops) {
        xs.push_back(&c.input);
        hs.push_back(&c.heatmap);
      }
      const Tensor h_gt = stack(hs);
      const auto out = flm.forward(stack(xs), nn::Mode::Train);
      nn::FlmOutputs<float> grads{Tensor(out.coords.shape()), Tensor(out.heatmap.shape())};
      double loss = 0;
      for (int j = 0; j < m; ++j) {
        const Coordinate hat{out.coords(j, 0, 0, 0), out.coords(j, 1, 0, 0)};
        loss += losses::loss_flm(crops[j].target, hat, crops[j].heatmap, slice(out.heatmap, j));
        grads.coords(j, 0, 0, 0) = static_cast<float>((hat.x - crops[j].target.x) / m);
        grads.coords(j, 1, 0, 0) = static_cast<float>((hat.y - crops[j].target.y) / m);
      }
      losses::mse_grad(h_gt.values(), out.heatmap.values(), grads.heatmap.values(), 1.0);
      loss /= m;
      if (!finite(loss)) {
        throw std::runtime_error("non-finite fine_loc loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      }
      flm.zero_grad();
      flm.backward(grads);
      adam.step();
      acc += loss;
      ++batches;
    }
    log.push_back({epoch, batches ? acc / batches : 0.0});
    if (cb) cb(log.back());
  }
  return log;
}

// ---------------------------------------------------------------------------

metrics::Prediction infer(const Models& models, const FundusSample& sample,
                          const config::RunConfig& cfg) {
  if (!models.coarse) throw std::invalid_argument("infer: a coarse model is required");
  const auto coarse = run_coarse(*models.coarse, sample.image, cfg);
  metrics::Prediction p;
  p.image_id = sample.image_id;
  p.mask = models.fine_seg ? run_fine_seg(*models.fine_seg, sample.image, coarse, cfg)
                           : to_original(coarse.mask, coarse);
  p.fovea = models.fine_loc ? run_fine_loc(*models.fine_loc, sample.image, coarse, cfg).fovea
                            : coarse.estimate.fovea;
  p.od_center = targets::od_center_from_mask(p.mask);
  if (!p.od_center && !coarse.od_degenerate) p.od_center = coarse.estimate.od;
  p.vcdr = metrics::vcdr(p.mask);
  p.fovea_via_fallback = coarse.estimate.fovea_via_fallback;
  return p;
}

std::vector<metrics::Prediction> infer_all(const Models& models,
                                           const std::vector<FundusSample>& data,
                                           const config::RunConfig& cfg) {
  std::vector<metrics::Prediction> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(infer(models, s, cfg));
  return out;
}

}  // namespace joined::pipeline
