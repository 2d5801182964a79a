#pragma once

// Three 12x12 images scored by hand in oracles/metrics_fixture.py.

#include <optional>
#include <vector>

#include "joined/metrics.hpp"
#include "joined/targets.hpp"

namespace fixture {

using joined::Coordinate;
using joined::Label;
using joined::LabelMask;

struct Box {
  int r0, r1, c0, c1;
};

inline LabelMask mask(Box disc, std::optional<Box> cup = std::nullopt) {
  LabelMask m(12, 12);
  for (int y = disc.r0; y <= disc.r1; ++y)
    for (int x = disc.c0; x <= disc.c1; ++x) m(y, x) = Label::OD;
  if (cup) {
    for (int y = cup->r0; y <= cup->r1; ++y)
      for (int x = cup->c0; x <= cup->c1; ++x) m(y, x) = Label::OC;
  }
  return m;
}

struct Case {
  std::vector<joined::metrics::Prediction> preds;
  std::vector<joined::metrics::GroundTruth> gts;
};

inline Case three_images() {
  struct Row {
    const char* id;
    LabelMask gt, pred;
    std::optional<Coordinate> gt_fovea, pred_fovea;
  };
  const std::vector<Row> rows = {
      {"a", mask({2, 9, 2, 9}, Box{4, 7, 4, 7}), mask({3, 9, 2, 9}, Box{4, 8, 4, 7}),
       Coordinate{3, 4}, Coordinate{6, 8}},
      {"b", mask({1, 10, 1, 8}, Box{3, 6, 3, 5}), mask({1, 10, 2, 9}), Coordinate{10, 10},
       Coordinate{10, 10}},
      {"c", mask({0, 5, 0, 5}, Box{1, 3, 1, 3}), mask({0, 5, 0, 4}, Box{1, 4, 1, 3}),
       std::nullopt, Coordinate{1, 1}},
  };
  Case c;
  for (const auto& r : rows) {
    joined::metrics::Prediction p;
    p.image_id = r.id;
    p.mask = r.pred;
    p.fovea = r.pred_fovea;
    p.od_center = joined::targets::od_center_from_mask(r.pred);
    p.vcdr = joined::metrics::vcdr(r.pred);
    c.preds.push_back(p);
    joined::metrics::GroundTruth g;
    g.image_id = r.id;
    g.mask = r.gt;
    g.fovea = r.gt_fovea;
    g.od_center = joined::targets::od_center_from_mask(r.gt);
    g.oc_present = true;
    c.gts.push_back(g);
  }
  return c;
}

}  // namespace fixture
