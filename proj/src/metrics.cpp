#include "joined/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "joined/targets.hpp"

namespace joined::metrics {

double aed(Coordinate pred, Coordinate gt) { return std::hypot(pred.x - gt.x, pred.y - gt.y); }

namespace {

bool member(Label l, Structure s) {
  return s == Structure::OC ? l == Label::OC : l != Label::Background;
}

std::optional<std::pair<int, int>> row_extent(const LabelMask& m, Structure s) {
  int lo = std::numeric_limits<int>::max(), hi = -1;
  for (int y = 0; y < m.h(); ++y) {
    for (int x = 0; x < m.w(); ++x) {
      if (!member(m(y, x), s)) continue;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
      break;
    }
  }
  if (hi < 0) return std::nullopt;
  return std::pair{lo, hi};
}

}  // namespace

double dice_score(const LabelMask& pred, const LabelMask& gt, Structure s) {
  if (pred.h() != gt.h() || pred.w() != gt.w()) {
    throw std::invalid_argument("dice_score: mask extents differ");
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels().size(); ++i) {
    const bool p = member(pred.labels()[i], s), g = member(gt.labels()[i], s);
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::optional<double> vcdr(const LabelMask& mask) {
  const auto cup = row_extent(mask, Structure::OC);
  const auto disc = row_extent(mask, Structure::OD);
  if (!cup || !disc) return std::nullopt;
  return static_cast<double>(cup->second - cup->first + 1) /
         static_cast<double>(disc->second - disc->first + 1);
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

EvalRecord evaluate(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts) {
  EvalRecord r;
  std::map<std::string, const GroundTruth*> by_id;
  for (const auto& g : gts) by_id[g.image_id] = &g;
  std::set<std::string> seen;
  r.has_oc = std::any_of(gts.begin(), gts.end(), [](const GroundTruth& g) { return g.oc_present; });

  std::vector<double> fovea, od, odd, ocd, verr;
  auto skip = [&](const char* k) { ++r.skipped[k]; };
  for (const auto& p : preds) {
    auto it = by_id.find(p.image_id);
    if (it == by_id.end()) {
      r.unmatched_predictions.push_back(p.image_id);
      continue;
    }
    seen.insert(p.image_id);
    const GroundTruth& g = *it->second;
    ImageRecord rec;
    rec.image_id = p.image_id;

    if (p.fovea && g.fovea) fovea.push_back(*(rec.fovea_aed = aed(*p.fovea, *g.fovea)));
    else skip("fovea_aed");

    std::optional<Coordinate> gt_od = g.od_center;
    if (!gt_od && g.mask) gt_od = targets::od_center_from_mask(*g.mask);
    std::optional<Coordinate> pred_od = p.od_center;
    if (!pred_od && !p.mask.empty()) pred_od = targets::od_center_from_mask(p.mask);
    if (pred_od && gt_od) od.push_back(*(rec.od_aed = aed(*pred_od, *gt_od)));
    else skip("od_aed");

    if (g.mask && !p.mask.empty()) {
      odd.push_back(*(rec.od_dice = dice_score(p.mask, *g.mask, Structure::OD)));
      if (g.oc_present) {
        ocd.push_back(*(rec.oc_dice = dice_score(p.mask, *g.mask, Structure::OC)));
      } else {
        skip("oc_dice");
      }
      rec.vcdr_gt = g.oc_present ? vcdr(*g.mask) : std::nullopt;
      rec.vcdr_pred = p.vcdr ? p.vcdr : vcdr(p.mask);
    } else {
      skip("od_dice");
      skip("oc_dice");
    }
    if (rec.vcdr_pred && rec.vcdr_gt) {
      verr.push_back(*(rec.abs_vcdr_err = std::abs(*rec.vcdr_pred - *rec.vcdr_gt)));
    } else {
      skip("vcdr");
    }
    r.images.push_back(rec);
  }
  for (const auto& g : gts) {
    if (!seen.count(g.image_id)) r.unmatched_ground_truth.push_back(g.image_id);
  }
  r.fovea_aed = summarize(fovea);
  r.od_aed = summarize(od);
  r.od_dice = summarize(odd);
  r.oc_dice = summarize(ocd);
  r.vcdr_mae = summarize(verr);
  return r;
}

namespace {

std::string cell(const Summary& s, double scale, int precision) {
  if (s.count == 0) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << s.mean * scale << " ± " << s.std * scale;
  return os.str();
}

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

}  // namespace

std::string render_table(const EvalRecord& r, const std::string& method) {
  std::ostringstream os;
  if (r.has_oc) {
    os << "| Method | Fovea AED ↓ | OD AED ↓ | OD Dice (%) ↑ | OC Dice (%) ↑ | vCDR (%) ↓ |\n";
    os << "|---|---|---|---|---|---|\n";
    os << "| " << method << " | " << cell(r.fovea_aed, 1, 2) << " | " << cell(r.od_aed, 1, 2)
       << " | " << cell(r.od_dice, 100, 2) << " | " << cell(r.oc_dice, 100, 2) << " | "
       << cell(r.vcdr_mae, 100, 3) << " |\n";
  } else {
    os << "| Method | Fovea AED ↓ | OD AED ↓ | OD Dice (%) ↑ |\n";
    os << "|---|---|---|---|\n";
    os << "| " << method << " | " << cell(r.fovea_aed, 1, 2) << " | " << cell(r.od_aed, 1, 2)
       << " | " << cell(r.od_dice, 100, 2) << " |\n";
  }
  return os.str();
}

std::string render_csv(const EvalRecord& r) {
  std::ostringstream os;
  os << "image_id,fovea_aed,od_aed,od_dice,oc_dice,vcdr_pred,vcdr_gt,abs_vcdr_err\n";
  for (const auto& i : r.images) {
    os << i.image_id << "," << opt(i.fovea_aed) << "," << opt(i.od_aed) << "," << opt(i.od_dice)
       << "," << opt(i.oc_dice) << "," << opt(i.vcdr_pred) << "," << opt(i.vcdr_gt) << ","
       << opt(i.abs_vcdr_err) << "\n";
  }
  return os.str();
}

}  // namespace joined::metrics
