// Shared test helpers: random generators, scratch directories and
// reference implementations written straight from the textbook definitions.
// The references deliberately avoid the library's shortcuts (binary closed
// forms, integer bookkeeping) so that agreement is meaningful.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testsupport {

using Column = std::vector<std::optional<bool>>;
using Columns = std::vector<Column>;  // columns[rater][unit]

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  bool coin(double p = 0.5) { return unit() < p; }

  // Random rater x unit matrix; each rater has its own bias so that marginals
  // differ, and each value is missing with probability `missing`.
  Columns matrix(int raters, int units, double missing) {
    std::vector<double> bias(raters);
    for (auto& b : bias) b = 0.1 + 0.8 * unit();
    std::vector<bool> truth(units);
    for (int u = 0; u < units; ++u) truth[u] = coin();
    Columns cols(raters, Column(units));
    for (int r = 0; r < raters; ++r) {
      for (int u = 0; u < units; ++u) {
        if (coin(missing)) continue;
        cols[r][u] = coin(0.6) ? truth[u] : coin(bias[r]);
      }
    }
    return cols;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("crowdlabel-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// ---- reference statistics ----

inline std::optional<double> ref_percent_agreement(const Column& a, const Column& b) {
  int both = 0, same = 0;
  for (std::size_t u = 0; u < a.size(); ++u) {
    if (!a[u] || !b[u]) continue;
    ++both;
    if (*a[u] == *b[u]) ++same;
  }
  if (both == 0) return std::nullopt;
  return 100.0 * same / both;
}

struct RefKappa {
  double kappa, po, pe;
};

// Generic over any label alphabet: marginals from a map of class counts.
inline std::optional<RefKappa> ref_kappa(const Column& a, const Column& b) {
  std::map<int, double> ma, mb;
  double n = 0, agree = 0;
  for (std::size_t u = 0; u < a.size(); ++u) {
    if (!a[u] || !b[u]) continue;
    const int x = *a[u] ? 1 : 0, y = *b[u] ? 1 : 0;
    ma[x] += 1;
    mb[y] += 1;
    n += 1;
    if (x == y) agree += 1;
  }
  if (n == 0) return std::nullopt;
  double pe = 0;
  for (const auto& [cls, cnt] : ma) pe += (cnt / n) * (mb.count(cls) ? mb[cls] / n : 0.0);
  const double po = agree / n;
  if (1.0 - pe == 0.0) return RefKappa{1.0, po, pe};
  return RefKappa{(po - pe) / (1.0 - pe), po, pe};
}

struct RefAlpha {
  double alpha, d_o, d_e, n;
};

// Coincidence matrix built pair by pair: for every unit, every ordered pair
// of distinct raters with values adds 1/(m_u - 1) to o[c][k].
inline std::optional<RefAlpha> ref_alpha(const Columns& cols) {
  if (cols.empty()) return std::nullopt;
  const std::size_t units = cols.front().size();
  double o[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<int> vals;
    for (const auto& c : cols) {
      if (c[u]) vals.push_back(*c[u] ? 1 : 0);
    }
    const double m = static_cast<double>(vals.size());
    if (vals.size() < 2) continue;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) {
        if (i != j) o[vals[i]][vals[j]] += 1.0 / (m - 1.0);
      }
    }
  }
  const double n0 = o[0][0] + o[0][1], n1 = o[1][0] + o[1][1];
  const double n = n0 + n1;
  if (n == 0) return std::nullopt;
  double disagree = 0, expect = 0;
  const double nc[2] = {n0, n1};
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 2; ++k) {
      if (c == k) continue;
      disagree += o[c][k];
      expect += nc[c] * nc[k];
    }
  }
  const double d_o = disagree / n;
  const double d_e = expect / (n * (n - 1.0));
  if (d_e == 0.0) return RefAlpha{1.0, d_o, d_e, n};
  return RefAlpha{1.0 - d_o / d_e, d_o, d_e, n};
}

struct RefChi {
  double chi, p;
  int dof;
};

// Chi-square density, integrated over [0, x] after substituting t = u^2,
// which removes the integrable singularity at 0 for one degree of freedom.
inline double ref_chi_square_cdf(double x, int k) {
  if (x <= 0) return 0.0;
  const double half = k / 2.0;
  const double log_norm = -half * std::log(2.0) - std::lgamma(half);
  auto integrand = [&](double u) {
    if (u == 0.0) return k == 1 ? 2.0 * std::exp(log_norm) : 0.0;
    return 2.0 * std::exp(log_norm + (k - 1) * std::log(u) - u * u / 2.0);
  };
  // 10-point Gauss-Legendre on many panels.
  static const double xs[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244, 0.8650633666889845,
                               0.9739065285171717};
  static const double ws[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                               0.0666713443086881};
  const double upper = std::sqrt(x);
  const int panels = 400;
  const double h = upper / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h, rad = h / 2.0;
    for (int i = 0; i < 5; ++i) total += ws[i] * rad * (integrand(mid - rad * xs[i]) + integrand(mid + rad * xs[i]));
  }
  return total;
}

inline RefChi ref_chi_square(const std::vector<std::vector<double>>& t) {
  const std::size_t r = t.size(), c = t.front().size();
  double n = 0;
  for (const auto& row : t) {
    for (double v : row) n += v;
  }
  double chi = 0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double ri = 0, cj = 0;
      for (std::size_t jj = 0; jj < c; ++jj) ri += t[i][jj];
      for (std::size_t ii = 0; ii < r; ++ii) cj += t[ii][j];
      const double e = ri * cj / n;
      chi += (t[i][j] - e) * (t[i][j] - e) / e;
    }
  }
  const int dof = static_cast<int>((r - 1) * (c - 1));
  // Far tails: the integral saturates at 1 and the difference is below the
  // double resolution, which is still within the absolute tolerance.
  return {chi, 1.0 - ref_chi_square_cdf(chi, dof), dof};
}

// Rank by counting: rank_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2.
inline std::vector<double> ref_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) less += 1;
      if (v == x[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline std::optional<double> ref_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ref_ranks(x), ry = ref_ranks(y);
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  if (vx <= 0 || vy <= 0) return std::nullopt;
  return cov / std::sqrt(vx * vy);
}

inline std::optional<bool> ref_majority(const std::vector<std::optional<bool>>& votes, std::size_t quorum,
                                        bool tie_negative) {
  int t = 0, f = 0;
  for (const auto& v : votes) {
    if (v) (*v ? t : f)++;
  }
  if (static_cast<std::size_t>(t + f) < std::min(quorum, votes.size()) || t + f == 0) return std::nullopt;
  if (t > f) return true;
  if (f > t) return false;
  if (tie_negative) return false;
  return std::nullopt;
}

// All size-k index subsets via a power-set filter.
inline std::vector<std::vector<int>> ref_subsets(int n, const std::set<int>& sizes) {
  std::vector<std::vector<int>> out;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> s;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) s.push_back(i);
    }
    if (sizes.count(static_cast<int>(s.size()))) out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

}  // namespace testsupport
