#pragma once

#include "pseudotrack/geometry.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace pseudotrack {

// Boxes with identities, grouped by frame. Used for ground truth and
// hypotheses alike.
struct BoxSequence {
  std::map<int, std::vector<BBox2D>> frames;

  void add(const BBox2D& box) { frames[box.frame_index].push_back(box); }
  std::size_t num_boxes() const;
  // Throws DuplicateID on a repeated (frame, object_id) or a missing id.
  void validate(const char* what) const;
};

BoxSequence make_sequence(std::span<const BBox2D> boxes);

struct ClearMotCounts {
  std::size_t num_gt = 0;
  std::size_t num_hyp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t idsw = 0;
  std::size_t matches = 0;
  std::size_t mostly_tracked = 0;
  std::size_t mostly_lost = 0;
  std::size_t gt_tracks = 0;
};

struct IdentityCounts {
  std::size_t idtp = 0;
  std::size_t idfp = 0;
  std::size_t idfn = 0;
};

struct DepthReport {
  std::size_t count = 0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;  // max(d/d*, d*/d) < 1.25
  double delta2 = 0.0;  // < 1.25^2
  double delta3 = 0.0;  // < 1.25^3
};

struct EvalReport {
  double mota = 0.0;
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t idsw = 0;
  std::size_t mt = 0;
  std::size_t ml = 0;
  std::size_t num_gt = 0;
  ClearMotCounts clear;
  IdentityCounts identity;
  std::optional<DepthReport> depth;
};

double mota_from(const ClearMotCounts& c);
void fill_identity_scores(EvalReport& report, const IdentityCounts& id);

// CLEAR MOT with correspondence carry-over: previous matches that still
// overlap by >= iou_threshold are kept, the rest are matched by maximum IoU.
// A match whose hypothesis differs from the last one seen for that ground
// truth counts as an identity switch.
ClearMotCounts clear_mot_counts(const BoxSequence& gt, const BoxSequence& hyp,
                                double iou_threshold = 0.5);
EvalReport clear_mot(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold = 0.5);

// Overlap frames (IoU >= threshold) per ground-truth / hypothesis identity.
std::map<int, std::map<int, std::size_t>> identity_overlaps(const BoxSequence& gt,
                                                            const BoxSequence& hyp,
                                                            double iou_threshold);

// Global one-to-one identity assignment maximizing overlapping frames.
IdentityCounts idf1_counts(const BoxSequence& gt, const BoxSequence& hyp,
                           double iou_threshold = 0.5);
struct IdentityScores {
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
};
IdentityScores idf1(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold = 0.5);

// CLEAR MOT plus identity scores in one report.
EvalReport evaluate(const BoxSequence& gt, const BoxSequence& hyp, double iou_threshold = 0.5);

// Sums counts over sequences and recomputes the scores.
EvalReport aggregate(std::span<const EvalReport> reports);

struct DepthPair {
  double predicted = 0.0;
  double ground_truth = 0.0;
};

// Pairs with ground-truth depth > max_depth are ignored. Throws
// EmptyAfterFilter when nothing remains.
DepthReport depth_metrics(std::span<const DepthPair> pairs, double max_depth = 75.0);

}  // namespace pseudotrack
