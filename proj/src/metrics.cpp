#include "pseudotrack/metrics.hpp"

#include "pseudotrack/assignment.hpp"
#include "pseudotrack/errors.hpp"
#include "pseudotrack/tracker.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

namespace pseudotrack {

namespace {

constexpr double kInvalidPair = -1e6;

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw ValidationError("iou threshold must lie in (0, 1)");
}

}  // namespace

std::size_t BoxSequence::num_boxes() const {
  std::size_t n = 0;
  for (const auto& [f, boxes] : frames) n += boxes.size();
  return n;
}

void BoxSequence::validate(const char* what) const {
  for (const auto& [f, boxes] : frames) {
    std::set<int> seen;
    for (const auto& b : boxes) {
      if (!b.object_id) {
        throw DuplicateID(std::string(what) + ": box without id in frame " + std::to_string(f));
      }
      if (!seen.insert(*b.object_id).second) {
        throw DuplicateID(std::string(what) + ": id " + std::to_string(*b.object_id) +
                          " repeated in frame " + std::to_string(f));
      }
    }
  }
}

BoxSequence make_sequence(std::span<const BBox2D> boxes) {
  BoxSequence s;
  for (const auto& b : boxes) s.add(b);
  return s;
}

double mota_from(const ClearMotCounts& c) {
  if (c.num_gt == 0) return c.fp == 0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - static_cast<double>(c.fn + c.fp + c.idsw) / static_cast<double>(c.num_gt);
}

ClearMotCounts clear_mot_counts(const BoxSequence& gt, const BoxSequence& hyp,
                                double iou_threshold) {
  check_threshold(iou_threshold);
  gt.validate("ground truth");
  hyp.validate("hypothesis");

  ClearMotCounts c;
  std::map<int, int> last_match;  // gt id -> hypothesis id
  std::map<int, std::size_t> gt_frames, gt_matched;

  std::set<int> all_frames;
  for (const auto& [f, b] : gt.frames) all_frames.insert(f);
  for (const auto& [f, b] : hyp.frames) all_frames.insert(f);

  static const std::vector<BBox2D> kEmpty;
  for (int f : all_frames) {
    const auto git = gt.frames.find(f);
    const auto hit = hyp.frames.find(f);
    const auto& g = git == gt.frames.end() ? kEmpty : git->second;
    const auto& h = hit == hyp.frames.end() ? kEmpty : hit->second;
    c.num_gt += g.size();
    c.num_hyp += h.size();
    for (const auto& b : g) ++gt_frames[*b.object_id];

    std::vector<int> g_to_h(g.size(), -1);
    std::vector<bool> h_used(h.size(), false);

    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto lm = last_match.find(*g[i].object_id);
      if (lm == last_match.end()) continue;
      for (std::size_t j = 0; j < h.size(); ++j) {
        if (*h[j].object_id == lm->second && !h_used[j] && iou(g[i], h[j]) >= iou_threshold) {
          g_to_h[i] = static_cast<int>(j);
          h_used[j] = true;
        }
      }
    }

    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g_to_h[i] < 0) rows.push_back(i);
    for (std::size_t j = 0; j < h.size(); ++j)
      if (!h_used[j]) cols.push_back(j);
    if (!rows.empty() && !cols.empty()) {
      Eigen::MatrixXd s(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(cols.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
          const double v = iou(g[rows[r]], h[cols[k]]);
          s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
              v >= iou_threshold ? v : kInvalidPair;
        }
      }
      const auto res = solve_assignment(s, iou_threshold);
      for (const auto& [r, k] : res.matches) {
        g_to_h[rows[static_cast<std::size_t>(r)]] = static_cast<int>(cols[static_cast<std::size_t>(k)]);
      }
    }

    std::size_t matched = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g_to_h[i] < 0) continue;
      ++matched;
      const int gid = *g[i].object_id;
      const int hid = *h[static_cast<std::size_t>(g_to_h[i])].object_id;
      ++gt_matched[gid];
      const auto lm = last_match.find(gid);
      if (lm != last_match.end() && lm->second != hid) ++c.idsw;
      last_match[gid] = hid;
    }
    c.matches += matched;
    c.fn += g.size() - matched;
    c.fp += h.size() - matched;
  }

  c.gt_tracks = gt_frames.size();
  for (const auto& [id, n] : gt_frames) {
    const double ratio = static_cast<double>(gt_matched[id]) / static_cast<double>(n);
    if (ratio >= 0.8) ++c.mostly_tracked;
    if (ratio <= 0.2) ++c.mostly_lost;
  }
  return c;
}

namespace {

void fill_clear(EvalReport& r, const ClearMotCounts& c) {
  r.clear = c;
  r.fp = c.fp;
  r.fn = c.fn;
  r.idsw = c.idsw;
  r.mt = c.mostly_tracked;
  r.ml = c.mostly_lost;
  r.num_gt = c.num_gt;
  r.mota = mota_from(c);
}

}  // namespace

EvalReport clear_mot(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold) {
  EvalReport r;
  fill_clear(r, clear_mot_counts(gt, hyp, iou_threshold));
  return r;
}

std::map<int, std::map<int, std::size_t>> identity_overlaps(const BoxSequence& gt,
                                                            const BoxSequence& hyp,
                                                            double iou_threshold) {
  std::map<int, std::map<int, std::size_t>> out;
  for (const auto& [f, g] : gt.frames) {
    const auto hit = hyp.frames.find(f);
    if (hit == hyp.frames.end()) continue;
    for (const auto& gb : g) {
      for (const auto& hb : hit->second) {
        if (iou(gb, hb) >= iou_threshold) ++out[*gb.object_id][*hb.object_id];
      }
    }
  }
  return out;
}

IdentityCounts idf1_counts(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold) {
  check_threshold(iou_threshold);
  gt.validate("ground truth");
  hyp.validate("hypothesis");

  std::set<int> gids, hids;
  for (const auto& [f, boxes] : gt.frames)
    for (const auto& b : boxes) gids.insert(*b.object_id);
  for (const auto& [f, boxes] : hyp.frames)
    for (const auto& b : boxes) hids.insert(*b.object_id);

  const auto overlaps = identity_overlaps(gt, hyp, iou_threshold);
  std::size_t idtp = 0;
  if (!gids.empty() && !hids.empty()) {
    const std::vector<int> gv(gids.begin(), gids.end());
    const std::vector<int> hv(hids.begin(), hids.end());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gv.size()),
                                              static_cast<Eigen::Index>(hv.size()));
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const auto row = overlaps.find(gv[i]);
      if (row == overlaps.end()) continue;
      for (std::size_t j = 0; j < hv.size(); ++j) {
        const auto cell = row->second.find(hv[j]);
        if (cell != row->second.end()) {
          s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              static_cast<double>(cell->second);
        }
      }
    }
    const auto res = solve_assignment(s);
    for (const auto& [r, k] : res.matches) {
      idtp += static_cast<std::size_t>(std::llround(s(r, k)));
    }
  }
  IdentityCounts c;
  c.idtp = idtp;
  c.idfp = hyp.num_boxes() - idtp;
  c.idfn = gt.num_boxes() - idtp;
  return c;
}

void fill_identity_scores(EvalReport& report, const IdentityCounts& id) {
  report.identity = id;
  const double tp = static_cast<double>(id.idtp);
  const double denom = 2.0 * tp + static_cast<double>(id.idfp + id.idfn);
  report.idf1 = denom > 0.0 ? 2.0 * tp / denom : 1.0;
  report.idp = id.idtp + id.idfp > 0 ? tp / static_cast<double>(id.idtp + id.idfp) : 0.0;
  report.idr = id.idtp + id.idfn > 0 ? tp / static_cast<double>(id.idtp + id.idfn) : 0.0;
}

IdentityScores idf1(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold) {
  EvalReport r;
  fill_identity_scores(r, idf1_counts(gt, hyp, iou_threshold));
  return IdentityScores{r.idf1, r.idp, r.idr};
}

EvalReport evaluate(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold) {
  EvalReport r;
  fill_clear(r, clear_mot_counts(gt, hyp, iou_threshold));
  fill_identity_scores(r, idf1_counts(gt, hyp, iou_threshold));
  return r;
}

EvalReport aggregate(std::span<const EvalReport> reports) {
  ClearMotCounts c;
  IdentityCounts id;
  for (const auto& r : reports) {
    c.num_gt += r.clear.num_gt;
    c.num_hyp += r.clear.num_hyp;
    c.fp += r.clear.fp;
    c.fn += r.clear.fn;
    c.idsw += r.clear.idsw;
    c.matches += r.clear.matches;
    c.mostly_tracked += r.clear.mostly_tracked;
    c.mostly_lost += r.clear.mostly_lost;
    c.gt_tracks += r.clear.gt_tracks;
    id.idtp += r.identity.idtp;
    id.idfp += r.identity.idfp;
    id.idfn += r.identity.idfn;
  }
  EvalReport out;
  fill_clear(out, c);
  fill_identity_scores(out, id);
  return out;
}

DepthReport depth_metrics(std::span<const DepthPair> pairs, double max_depth) {
  if (!(max_depth > 0.0)) throw ValidationError("max_depth must be positive");
  DepthReport r;
  for (const auto& p : pairs) {
    if (!(p.predicted > 0.0) || !(p.ground_truth > 0.0)) {
      throw ValidationError("depth_metrics: depths must be positive");
    }
    if (p.ground_truth > max_depth) continue;
    const double d = p.predicted;
    const double g = p.ground_truth;
    const double diff = d - g;
    r.abs_rel += std::abs(diff) / g;
    r.sq_rel += diff * diff / g;
    r.rmse += diff * diff;
    const double ld = std::log(d) - std::log(g);
    r.rmse_log += ld * ld;
    const double ratio = std::max(d / g, g / d);
    if (ratio < 1.25) r.delta1 += 1.0;
    if (ratio < 1.25 * 1.25) r.delta2 += 1.0;
    if (ratio < 1.25 * 1.25 * 1.25) r.delta3 += 1.0;
    ++r.count;
  }
  if (r.count == 0) throw EmptyAfterFilter("depth_metrics: no pairs within max_depth");
  const double n = static_cast<double>(r.count);
  r.abs_rel /= n;
  r.sq_rel /= n;
  r.rmse = std::sqrt(r.rmse / n);
  r.rmse_log = std::sqrt(r.rmse_log / n);
  r.delta1 /= n;
  r.delta2 /= n;
  r.delta3 /= n;
  return r;
}

}  // namespace pseudotrack
