#pragma once

// Hand-computed tracking-metric scenarios and random sequence builders.

#include "pseudotrack/metrics.hpp"
#include "support/oracles.hpp"

#include <random>
#include <set>
#include <string>
#include <vector>

namespace scenario {

using namespace pseudotrack;

// 50x50 box at left = x.
inline BBox2D B(int frame, int id, double x) {
  BBox2D b;
  b.frame_index = frame;
  b.camera_id = "cam0";
  b.object_id = id;
  b.left = x;
  b.top = 0;
  b.width_px = 50;
  b.height_px = 50;
  return b;
}

inline BoxSequence seq(std::initializer_list<BBox2D> boxes) {
  BoxSequence s;
  for (const auto& b : boxes) s.add(b);
  return s;
}

inline oracle::Frames to_frames(const BoxSequence& s) {
  oracle::Frames f;
  for (const auto& [frame, boxes] : s.frames) {
    auto& v = f[frame];
    for (const auto& b : boxes) v.push_back({b.left, b.top, b.width_px, b.height_px, *b.object_id});
  }
  return f;
}

struct Expect {
  std::size_t fp, fn, idsw, mt, ml, num_gt;
  double mota, idf1;
};

struct Micro {
  std::string name;
  BoxSequence gt, hyp;
  Expect expect;
};

// Exact comparison of every counted field; empty string on agreement.
inline std::string compare(const EvalReport& r, const Expect& e) {
  std::string bad;
  auto field = [&](const char* name, bool ok) {
    if (!ok) bad += std::string(bad.empty() ? "" : ",") + name;
  };
  field("fp", r.fp == e.fp);
  field("fn", r.fn == e.fn);
  field("idsw", r.idsw == e.idsw);
  field("mt", r.mt == e.mt);
  field("ml", r.ml == e.ml);
  field("num_gt", r.num_gt == e.num_gt);
  field("mota", r.mota == e.mota);
  field("idf1", r.idf1 == e.idf1);
  return bad;
}

inline std::vector<Micro> micro_scenarios() {
  std::vector<Micro> out;
  const auto two_by_three =
      seq({B(0, 1, 0), B(0, 2, 100), B(1, 1, 0), B(1, 2, 100), B(2, 1, 0), B(2, 2, 100)});

  out.push_back({"perfect hypothesis", two_by_three,
                 seq({B(0, 10, 0), B(0, 11, 100), B(1, 10, 0), B(1, 11, 100), B(2, 10, 0), B(2, 11, 100)}),
                 {0, 0, 0, 2, 0, 6, 1.0, 1.0}});
  // IDTP: (1,1) 3 + (2,2) 1 = 4 over 6 gt and 6 hyp boxes.
  out.push_back({"one FP, one FN, one switch", two_by_three,
                 seq({B(0, 1, 0), B(0, 2, 100), B(1, 1, 0), B(1, 3, 500), B(2, 1, 0), B(2, 4, 100)}),
                 {1, 1, 1, 1, 0, 6, 0.5, 8.0 / 12.0}});
  out.push_back({"empty hypothesis", two_by_three, BoxSequence{}, {0, 6, 0, 0, 2, 6, 0.0, 0.0}});
  {
    BoxSequence gt, hyp;
    for (int f = 0; f < 10; ++f) {
      gt.add(B(f, 1, 0));
      hyp.add(B(f, f < 5 ? 7 : 8, 0));
    }
    out.push_back({"split track", gt, hyp, {0, 0, 1, 1, 0, 10, 0.9, 0.5}});
  }
  // Frame 1: hypothesis 2 overlaps better (IoU 1) but 1 still overlaps by 2/3.
  out.push_back({"carry-over keeps a valid correspondence", seq({B(0, 1, 0), B(1, 1, 0)}),
                 seq({B(0, 1, 0), B(1, 1, 10), B(1, 2, 0)}), {1, 0, 0, 1, 0, 2, 0.5, 0.8}});
  out.push_back({"switch across a gap", seq({B(0, 1, 0), B(1, 1, 0), B(2, 1, 0), B(3, 1, 0)}),
                 seq({B(0, 5, 0), B(2, 6, 0), B(3, 6, 0)}), {0, 1, 1, 0, 0, 4, 0.5, 4.0 / 7.0}});
  out.push_back({"switching back counts again", seq({B(0, 1, 0), B(1, 1, 0), B(2, 1, 0)}),
                 seq({B(0, 5, 0), B(1, 6, 0), B(2, 5, 0)}), {0, 0, 2, 1, 0, 3, 1.0 - 2.0 / 3.0, 2.0 / 3.0}});
  out.push_back({"overlap below threshold", seq({B(0, 1, 0)}), seq({B(0, 1, 25)}),  // IoU 1/3
                 {1, 1, 0, 0, 1, 1, -1.0, 0.0}});
  {
    // a 5/5 and b 4/5 are mostly tracked; c 1/5 is mostly lost.
    BoxSequence gt, hyp;
    for (int f = 0; f < 5; ++f) {
      gt.add(B(f, 1, 0));
      gt.add(B(f, 2, 100));
      gt.add(B(f, 3, 200));
      hyp.add(B(f, 1, 0));
      if (f < 4) hyp.add(B(f, 2, 100));
      if (f < 1) hyp.add(B(f, 3, 200));
    }
    out.push_back({"mostly tracked and lost cutoffs", gt, hyp, {0, 5, 0, 2, 1, 15, 1.0 - 5.0 / 15.0, 0.8}});
  }
  {
    BoxSequence gt, hyp;
    for (int f = 0; f < 4; ++f) {
      gt.add(B(f, 1, 0));
      gt.add(B(f, 2, 100));
      hyp.add(B(f, f < 2 ? 1 : 2, 0));
      hyp.add(B(f, f < 2 ? 2 : 1, 100));
    }
    out.push_back({"hypotheses swap between two objects", gt, hyp, {0, 0, 2, 2, 0, 8, 0.75, 0.5}});
  }
  return out;
}

// Ground truth with occasional misses and jitter.
inline BoxSequence random_gt(std::mt19937_64& rng, int objects, int frames, bool jitter) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BoxSequence s;
  for (int f = 0; f < frames; ++f) {
    for (int o = 0; o < objects; ++o) {
      if (u(rng) < 0.2) continue;
      const double dx = jitter ? (u(rng) - 0.5) * 40.0 : 0.0;
      s.add(B(f, 1 + o, o * 60.0 + dx));
    }
  }
  return s;
}

// Hypothesis built from gt: ids 100.. drawn at random (fragments and swaps),
// drops, position jitter and clutter.
inline BoxSequence random_hypothesis(std::mt19937_64& rng, const BoxSequence& gt, int max_ids) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(100, 100 + max_ids - 1);
  BoxSequence h;
  for (const auto& [f, boxes] : gt.frames) {
    std::set<int> used;
    for (const auto& b : boxes) {
      if (u(rng) < 0.15) continue;
      const int id = pick(rng);
      if (!used.insert(id).second) continue;
      BBox2D c = b;
      c.object_id = id;
      c.left += (u(rng) - 0.5) * 30.0;
      h.add(c);
    }
    if (u(rng) < 0.3) {
      const int id = pick(rng);
      if (used.insert(id).second) h.add(B(f, id, 1000 + u(rng) * 100));
    }
  }
  return h;
}

}  // namespace scenario
