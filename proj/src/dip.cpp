#include "foldnet/dip.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace foldnet {

// Hartigan & Hartigan (1985), following the AS 217 scheme: per cycle, build
// the greatest convex minorant (GCM) and least concave majorant (LCM) of the
// empirical CDF on the current modal candidate interval, walk both vertex
// chains to find the largest minorant/majorant gap (which selects the next,
// nested interval), accumulate the CDF deviations on the parts that leave the
// interval, and stop when the interval is stable. Deviations are tracked in
// sample counts; dip = max_deviation / (2n).
//
// Hull heights are ECDF step counts: the minorant touches pre-jump counts
// (index of the first sample at a value), the majorant post-jump counts
// (index after the last sample at a value). The pointer construction below
// reproduces that for tied values without deduplicating the sample.
DipResult dip_statistic(std::vector<double> sample) {
  if (sample.empty()) throw std::invalid_argument("dip_statistic: empty sample");
  for (double v : sample) {
    if (!std::isfinite(v)) throw std::invalid_argument("dip_statistic: non-finite value");
  }
  std::sort(sample.begin(), sample.end());
  const int n = static_cast<int>(sample.size());
  const std::vector<double>& x = sample;
  if (x.front() == x.back()) return {0.0, x.front(), x.back()};  // point mass is unimodal

  int lo = 0, hi = n - 1;
  double dip = 1.0;  // in counts; enforces the 1/(2n) floor

  std::vector<int> mn(n), mj(n), g, c;
  while (true) {
    if (x[lo] == x[hi]) break;  // interval collapsed onto one value

    // mn[j]: previous GCM vertex for j; mj[k]: next LCM vertex for k.
    mn[lo] = lo;
    for (int j = lo + 1; j <= hi; ++j) {
      mn[j] = j - 1;
      while (true) {
        const int t = mn[j];
        if (t == lo) break;
        const int p = mn[t];
        if ((x[j] - x[t]) * (t - p) < (x[t] - x[p]) * (j - t)) break;
        mn[j] = p;
      }
    }
    mj[hi] = hi;
    for (int k = hi - 1; k >= lo; --k) {
      mj[k] = k + 1;
      while (true) {
        const int t = mj[k];
        if (t == hi) break;
        const int s = mj[t];
        if ((x[k] - x[t]) * (t - s) < (x[t] - x[s]) * (k - t)) break;
        mj[k] = s;
      }
    }

    g.clear();  // GCM vertices, descending from hi to lo
    for (int v = hi;; v = mn[v]) {
      g.push_back(v);
      if (v == lo) break;
    }
    c.clear();  // LCM vertices, ascending from lo to hi
    for (int v = lo;; v = mj[v]) {
      c.push_back(v);
      if (v == hi) break;
    }
    const int Lg = static_cast<int>(g.size());
    const int Ll = static_cast<int>(c.size());

    double d = 0.0;
    int sel_g = Lg - 1, sel_c = Ll - 1;  // defaults keep the interval unchanged
    const bool trivial = (Lg == 2 && Ll == 2);
    if (trivial) {
      d = 1.0;
    } else {
      // Merge-walk both chains upward from lo; at each vertex measure the
      // gap between the other hull's chord and this hull's step height.
      int gx = Lg - 2, cx = 1;
      while (g[gx] != c[cx]) {
        if (g[gx] > c[cx]) {
          // LCM vertex inside the GCM segment (g[gx+1], g[gx]).
          const int a = g[gx + 1], b = g[gx], v = c[cx];
          const double dx =
              (v - a + 1) - (x[v] - x[a]) * static_cast<double>(b - a) / (x[b] - x[a]);
          ++cx;
          if (dx >= d) {
            d = dx;
            sel_g = gx + 1;
            sel_c = cx - 1;
          }
        } else {
          // GCM vertex inside the LCM segment (c[cx-1], c[cx]).
          const int u = g[gx], ca = c[cx - 1], cb = c[cx];
          const double dx =
              (ca + 1) + (x[u] - x[ca]) * static_cast<double>(cb - ca) / (x[cb] - x[ca]) - u;
          --gx;
          if (dx >= d) {
            d = dx;
            sel_g = gx + 1;
            sel_c = cx;
          }
        }
        if (gx < 0) gx = 0;
        if (cx > Ll - 1) cx = Ll - 1;
      }
    }

    if (d < dip) break;

    // CDF deviations over the segments that fall outside the new interval
    // (all segments in the trivial case).
    const int scan_g = trivial ? 0 : sel_g;
    const int scan_c = trivial ? 0 : sel_c;
    double dip_l = 0.0, dip_u = 0.0;
    for (int j = scan_g; j <= Lg - 2; ++j) {
      const int a = g[j + 1], b = g[j];
      const double slope = static_cast<double>(b - a) / (x[b] - x[a]);
      for (int t = a; t <= b; ++t) {
        const double dev = (t - a + 1) - (x[t] - x[a]) * slope;
        if (dev > dip_l) dip_l = dev;
      }
    }
    for (int j = scan_c; j <= Ll - 2; ++j) {
      const int a = c[j], b = c[j + 1];
      const double slope = static_cast<double>(b - a) / (x[b] - x[a]);
      for (int t = a; t <= b; ++t) {
        const double dev = (a + 1) + (x[t] - x[a]) * slope - t;
        if (dev > dip_u) dip_u = dev;
      }
    }
    dip = std::max({dip, dip_l, dip_u});

    const int new_lo = g[sel_g], new_hi = c[sel_c];
    if (new_lo == lo && new_hi == hi) break;
    lo = new_lo;
    hi = new_hi;
  }

  return {dip / (2.0 * n), x[lo], x[hi]};
}

}  // namespace foldnet
