#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qrfuse {

/// Sparse constraint row: (column, value) pairs, columns strictly increasing.
struct SparseRow {
  std::vector<std::pair<int, double>> entries;

  void push(int col, double val) {
    if (val == 0.0) return;
    if (!entries.empty() && entries.back().first >= col)
      throw std::invalid_argument("SparseRow: columns must strictly increase");
    entries.emplace_back(col, val);
  }

  double dot(const std::vector<double>& z) const {
    double s = 0.0;
    for (const auto& [j, a] : entries) s += a * z[static_cast<std::size_t>(j)];
    return s;
  }
};

/// min c'z  s.t.  A_eq z = b_eq,  A_ub z <= b_ub,  z >= 0.
struct LpProblem {
  int n = 0;
  std::vector<double> c;
  std::vector<SparseRow> a_eq;
  std::vector<double> b_eq;
  std::vector<SparseRow> a_ub;
  std::vector<double> b_ub;

  void validate() const {
    if (n < 0 || static_cast<int>(c.size()) != n)
      throw std::invalid_argument("LpProblem: objective length mismatch");
    for (double v : c)
      if (!std::isfinite(v)) throw std::invalid_argument("LpProblem: non-finite objective");
    if (a_eq.size() != b_eq.size() || a_ub.size() != b_ub.size())
      throw std::invalid_argument("LpProblem: row count mismatch");
    auto check_rows = [&](const std::vector<SparseRow>& rows,
                          const std::vector<double>& rhs) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!std::isfinite(rhs[i]))
          throw std::invalid_argument("LpProblem: non-finite rhs");
        int last = -1;
        for (const auto& [j, a] : rows[i].entries) {
          if (j <= last || j >= n)
            throw std::invalid_argument("LpProblem: bad column index in row");
          if (!std::isfinite(a))
            throw std::invalid_argument("LpProblem: non-finite coefficient");
          last = j;
        }
      }
    };
    check_rows(a_eq, b_eq);
    check_rows(a_ub, b_ub);
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

struct LpSolution {
  std::vector<double> z;
  double objective = 0.0;
  LpStatus status = LpStatus::IterationLimit;
  long iterations = 0;
  /// Row duals (equality rows first, then inequality rows); diagnostic.
  std::vector<double> duals;
};

struct LpOptions {
  double tol_feas = 1e-8;
  double tol_opt = 1e-8;
  long max_iter = 0;  // 0: 50 * (n + rows)
};

namespace lp_detail {

/// Revised simplex over columns, explicit basis inverse with eta updates
/// and periodic refactorization. Dantzig pricing with index tie-breaks;
/// Bland's rule engages after a degenerate streak to rule out cycling.
class Simplex {
 public:
  Simplex(const LpProblem& p, const LpOptions& opt) : p_(p), opt_(opt) {
    n_struct_ = p.n;
    m_eq_ = static_cast<int>(p.a_eq.size());
    m_ub_ = static_cast<int>(p.a_ub.size());
    m_ = m_eq_ + m_ub_;
    n_slack_ = m_ub_;
    row_sign_.assign(static_cast<std::size_t>(m_), 1.0);
    b_.resize(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_eq_; ++i) b_[static_cast<std::size_t>(i)] = p.b_eq[static_cast<std::size_t>(i)];
    for (int i = 0; i < m_ub_; ++i) b_[static_cast<std::size_t>(m_eq_ + i)] = p.b_ub[static_cast<std::size_t>(i)];
    for (int i = 0; i < m_; ++i) {
      if (b_[static_cast<std::size_t>(i)] < 0.0) {
        row_sign_[static_cast<std::size_t>(i)] = -1.0;
        b_[static_cast<std::size_t>(i)] = -b_[static_cast<std::size_t>(i)];
      }
    }
    // Column-wise matrix: structural columns, then one slack per ub row.
    cols_.resize(static_cast<std::size_t>(n_struct_ + n_slack_));
    auto add_rows = [&](const std::vector<SparseRow>& rows, int row0) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        int r = row0 + static_cast<int>(i);
        for (const auto& [j, a] : rows[i].entries)
          cols_[static_cast<std::size_t>(j)].emplace_back(r, a * row_sign_[static_cast<std::size_t>(r)]);
      }
    };
    add_rows(p.a_eq, 0);
    add_rows(p.a_ub, m_eq_);
    for (int i = 0; i < m_ub_; ++i) {
      int r = m_eq_ + i;
      cols_[static_cast<std::size_t>(n_struct_ + i)].emplace_back(r, row_sign_[static_cast<std::size_t>(r)]);
    }
    // Column entries must be sorted by row for the dense rebuild.
    for (auto& col : cols_)
      std::sort(col.begin(), col.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  LpSolution run() {
    LpSolution sol;
    max_iter_ = opt_.max_iter > 0
                    ? opt_.max_iter
                    : 50L * (static_cast<long>(n_struct_) + m_ + 1);
    crash_basis();
    const int n_noart = n_struct_ + n_slack_;

    if (first_artificial_ < static_cast<int>(cols_.size())) {
      // Phase 1: minimize the sum of artificials.
      std::vector<double> cost1(cols_.size(), 0.0);
      for (std::size_t j = static_cast<std::size_t>(first_artificial_); j < cols_.size(); ++j)
        cost1[j] = 1.0;
      Core st = iterate(cost1, /*allow_artificial_entering=*/true);
      if (st == Core::IterLimit || st == Core::NumFail) {
        finish(sol, LpStatus::IterationLimit);
        return sol;
      }
      double infeas = 0.0;
      for (int i = 0; i < m_; ++i)
        if (basis_[static_cast<std::size_t>(i)] >= first_artificial_)
          infeas += std::max(x_b_[static_cast<std::size_t>(i)], 0.0);
      if (st == Core::Unbounded || infeas > opt_.tol_feas * 10.0) {
        finish(sol, LpStatus::Infeasible);
        return sol;
      }
    }

    // Phase 2: structural objective; artificials cannot re-enter and are
    // pinned at zero by the ratio test.
    std::vector<double> cost2(cols_.size(), 0.0);
    for (int j = 0; j < n_struct_; ++j) cost2[static_cast<std::size_t>(j)] = p_.c[static_cast<std::size_t>(j)];
    Core st = iterate(cost2, /*allow_artificial_entering=*/false);
    switch (st) {
      case Core::Optimal: {
        if (!polish(cost2)) {
          finish(sol, LpStatus::IterationLimit);
          return sol;
        }
        finish(sol, LpStatus::Optimal);
        sol.duals.resize(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i)
          sol.duals[static_cast<std::size_t>(i)] = y_[static_cast<std::size_t>(i)] * row_sign_[static_cast<std::size_t>(i)];
        (void)n_noart;
        return sol;
      }
      case Core::Unbounded:
        finish(sol, LpStatus::Unbounded);
        return sol;
      default:
        finish(sol, LpStatus::IterationLimit);
        return sol;
    }
  }

 private:
  enum class Core { Optimal, Unbounded, IterLimit, NumFail };

  const LpProblem& p_;
  LpOptions opt_;
  int n_struct_ = 0, n_slack_ = 0, m_eq_ = 0, m_ub_ = 0, m_ = 0;
  int first_artificial_ = 0;
  long max_iter_ = 0, iter_ = 0;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> b_, row_sign_;
  std::vector<int> basis_;          // row -> basic column
  std::vector<int> pos_in_basis_;   // column -> row or -1
  std::vector<double> binv_;        // m x m, row-major
  std::vector<double> x_b_, y_, w_;
  std::vector<double> d_;           // reduced costs, kept current by pivot()

  static constexpr double kPivotTol = 1e-9;
  static constexpr double kDegenTol = 1e-11;

  double& binv(int i, int k) { return binv_[static_cast<std::size_t>(i) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(k)]; }

  /// Picks a starting basis: slacks where usable, then singleton columns
  /// with a positive entry, artificials for whatever remains.
  void crash_basis() {
    basis_.assign(static_cast<std::size_t>(m_), -1);
    pos_in_basis_.assign(cols_.size(), -1);
    std::vector<char> row_done(static_cast<std::size_t>(m_), 0);
    for (int i = 0; i < m_ub_; ++i) {
      int r = m_eq_ + i;
      if (row_sign_[static_cast<std::size_t>(r)] > 0.0) {
        basis_[static_cast<std::size_t>(r)] = n_struct_ + i;
        row_done[static_cast<std::size_t>(r)] = 1;
      }
    }
    for (int j = 0; j < n_struct_; ++j) {
      const auto& col = cols_[static_cast<std::size_t>(j)];
      if (col.size() != 1) continue;
      int r = col[0].first;
      if (!row_done[static_cast<std::size_t>(r)] && col[0].second > kPivotTol) {
        basis_[static_cast<std::size_t>(r)] = j;
        row_done[static_cast<std::size_t>(r)] = 1;
      }
    }
    first_artificial_ = static_cast<int>(cols_.size());
    for (int r = 0; r < m_; ++r) {
      if (row_done[static_cast<std::size_t>(r)]) continue;
      cols_.push_back({{r, 1.0}});
      basis_[static_cast<std::size_t>(r)] = static_cast<int>(cols_.size()) - 1;
    }
    pos_in_basis_.assign(cols_.size(), -1);
    for (int r = 0; r < m_; ++r) pos_in_basis_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)])] = r;
    if (!refactor()) throw std::logic_error("lp: singular crash basis");
  }

  /// Rebuilds the dense basis inverse by Gauss-Jordan elimination with
  /// partial pivoting, then recomputes basic values.
  bool refactor() {
    const std::size_t mm = static_cast<std::size_t>(m_);
    std::vector<double> bmat(mm * mm, 0.0);
    for (int r = 0; r < m_; ++r)
      for (const auto& [row, val] : cols_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)])])
        bmat[static_cast<std::size_t>(row) * mm + static_cast<std::size_t>(r)] = val;
    binv_.assign(mm * mm, 0.0);
    for (int i = 0; i < m_; ++i) binv(i, i) = 1.0;
    for (int col = 0; col < m_; ++col) {
      int piv = -1;
      double best = 1e-12;
      for (int i = col; i < m_; ++i) {
        double v = std::fabs(bmat[static_cast<std::size_t>(i) * mm + static_cast<std::size_t>(col)]);
        if (v > best) { best = v; piv = i; }
      }
      if (piv < 0) return false;
      if (piv != col) {
        for (int k = 0; k < m_; ++k) {
          std::swap(bmat[static_cast<std::size_t>(piv) * mm + static_cast<std::size_t>(k)],
                    bmat[static_cast<std::size_t>(col) * mm + static_cast<std::size_t>(k)]);
          std::swap(binv(piv, k), binv(col, k));
        }
      }
      const double inv = 1.0 / bmat[static_cast<std::size_t>(col) * mm + static_cast<std::size_t>(col)];
      for (int k = 0; k < m_; ++k) {
        bmat[static_cast<std::size_t>(col) * mm + static_cast<std::size_t>(k)] *= inv;
        binv(col, k) *= inv;
      }
      for (int i = 0; i < m_; ++i) {
        if (i == col) continue;
        const double f = bmat[static_cast<std::size_t>(i) * mm + static_cast<std::size_t>(col)];
        if (f == 0.0) continue;
        for (int k = 0; k < m_; ++k) {
          bmat[static_cast<std::size_t>(i) * mm + static_cast<std::size_t>(k)] -= f * bmat[static_cast<std::size_t>(col) * mm + static_cast<std::size_t>(k)];
          binv(i, k) -= f * binv(col, k);
        }
      }
    }
    recompute_x_b();
    return true;
  }

  void recompute_x_b() {
    x_b_.assign(static_cast<std::size_t>(m_), 0.0);
    for (int i = 0; i < m_; ++i) {
      double s = 0.0;
      for (int k = 0; k < m_; ++k) s += binv(i, k) * b_[static_cast<std::size_t>(k)];
      x_b_[static_cast<std::size_t>(i)] = s;
    }
  }

  void compute_y(const std::vector<double>& cost) {
    y_.assign(static_cast<std::size_t>(m_), 0.0);
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
      if (cb == 0.0) continue;
      const double* row = &binv_[static_cast<std::size_t>(i) * static_cast<std::size_t>(m_)];
      for (int k = 0; k < m_; ++k) y_[static_cast<std::size_t>(k)] += cb * row[k];
    }
  }

  /// Full recomputation of reduced costs; runs at phase starts and
  /// refactorization points. Between those, pivot() keeps d_ updated.
  void recompute_reduced(const std::vector<double>& cost) {
    compute_y(cost);
    d_.assign(cols_.size(), 0.0);
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (pos_in_basis_[j] >= 0) continue;
      double d = cost[j];
      for (const auto& [row, val] : cols_[j]) d -= y_[static_cast<std::size_t>(row)] * val;
      d_[j] = d;
    }
  }

  /// Entering column from the maintained reduced costs, or -1.
  int price(bool bland, bool allow_art) const {
    const int limit = allow_art ? static_cast<int>(cols_.size()) : first_artificial_;
    int best = -1;
    double best_d = -opt_.tol_opt;
    for (int j = 0; j < limit; ++j) {
      if (pos_in_basis_[static_cast<std::size_t>(j)] >= 0) continue;
      const double d = d_[static_cast<std::size_t>(j)];
      if (d < best_d) {
        if (bland) return j;
        best_d = d;
        best = j;
      }
    }
    return best;
  }

  void ftran(int j) {
    w_.assign(static_cast<std::size_t>(m_), 0.0);
    for (const auto& [row, val] : cols_[static_cast<std::size_t>(j)]) {
      for (int i = 0; i < m_; ++i) w_[static_cast<std::size_t>(i)] += binv(i, row) * val;
    }
  }

  /// Leaving row for the current direction w_, or -1 (unbounded). Basic
  /// artificials act as if upper-bounded at zero so phase 2 cannot regrow
  /// them.
  int ratio_test(bool bland, bool phase2, double* theta_out) const {
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m_; ++i) {
      const double wi = w_[static_cast<std::size_t>(i)];
      double ratio;
      if (wi > kPivotTol) {
        ratio = std::max(x_b_[static_cast<std::size_t>(i)], 0.0) / wi;
      } else if (phase2 && wi < -kPivotTol &&
                 basis_[static_cast<std::size_t>(i)] >= first_artificial_) {
        ratio = 0.0;
      } else {
        continue;
      }
      if (best < 0 || ratio < best_ratio - 1e-12) {
        best = i;
        best_ratio = ratio;
      } else if (ratio < best_ratio + 1e-12) {
        bool take = false;
        if (bland) {
          take = basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(best)];
        } else {
          const bool i_art = basis_[static_cast<std::size_t>(i)] >= first_artificial_;
          const bool b_art = basis_[static_cast<std::size_t>(best)] >= first_artificial_;
          if (i_art != b_art)
            take = i_art;
          else
            take = std::fabs(wi) > std::fabs(w_[static_cast<std::size_t>(best)]) + 1e-12;
        }
        if (take) {
          best = i;
          best_ratio = ratio;
        }
      }
    }
    *theta_out = best < 0 ? 0.0 : best_ratio;
    return best;
  }

  void pivot(int r, int s, double theta) {
    const double wr = w_[static_cast<std::size_t>(r)];
    double* row_r = &binv_[static_cast<std::size_t>(r) * static_cast<std::size_t>(m_)];
    const double inv = 1.0 / wr;
    for (int k = 0; k < m_; ++k) row_r[k] *= inv;

    // Reduced-cost update from the new pivot row: d_j -= d_s * (B^-1 A)_rj.
    const double ds = d_[static_cast<std::size_t>(s)];
    const int leaving = basis_[static_cast<std::size_t>(r)];
    if (ds != 0.0) {
      for (std::size_t j = 0; j < cols_.size(); ++j) {
        if (pos_in_basis_[j] >= 0 || static_cast<int>(j) == s) continue;
        double alpha = 0.0;
        for (const auto& [row, val] : cols_[j]) alpha += row_r[row] * val;
        if (alpha != 0.0) d_[j] -= ds * alpha;
      }
    }
    d_[static_cast<std::size_t>(leaving)] = -ds * inv;
    d_[static_cast<std::size_t>(s)] = 0.0;

    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = w_[static_cast<std::size_t>(i)];
      if (f == 0.0) continue;
      double* row_i = &binv_[static_cast<std::size_t>(i) * static_cast<std::size_t>(m_)];
      for (int k = 0; k < m_; ++k) row_i[k] -= f * row_r[k];
      x_b_[static_cast<std::size_t>(i)] -= theta * f;
      if (x_b_[static_cast<std::size_t>(i)] < 0.0 && x_b_[static_cast<std::size_t>(i)] > -1e-11) x_b_[static_cast<std::size_t>(i)] = 0.0;
    }
    x_b_[static_cast<std::size_t>(r)] = theta;
    pos_in_basis_[static_cast<std::size_t>(leaving)] = -1;
    basis_[static_cast<std::size_t>(r)] = s;
    pos_in_basis_[static_cast<std::size_t>(s)] = r;
  }

  Core iterate(const std::vector<double>& cost, bool allow_artificial_entering) {
    const bool phase2 = !allow_artificial_entering;
    long degen_streak = 0;
    const long bland_after = 2L * m_ + 64;
    bool bland = false;
    long since_refactor = 0;
    const long refactor_every = 512;
    recompute_reduced(cost);
    while (true) {
      if (iter_ >= max_iter_) return Core::IterLimit;
      if (since_refactor >= refactor_every) {
        if (!refactor()) return Core::NumFail;
        recompute_reduced(cost);
        since_refactor = 0;
      }
      int s = price(bland, allow_artificial_entering);
      if (s < 0) {
        // Re-verify optimality on a freshly rebuilt inverse so the returned
        // basic values, duals and reduced costs are free of update drift.
        if (since_refactor == 0) return Core::Optimal;
        if (!refactor()) return Core::NumFail;
        recompute_reduced(cost);
        since_refactor = 0;
        s = price(bland, allow_artificial_entering);
        if (s < 0) return Core::Optimal;
      }
      ftran(s);
      double theta = 0.0;
      const int r = ratio_test(bland, phase2, &theta);
      if (r < 0) return Core::Unbounded;
      pivot(r, s, theta);
      ++iter_;
      ++since_refactor;
      if (theta <= kDegenTol) {
        if (++degen_streak > bland_after) bland = true;
      } else {
        degen_streak = 0;
        bland = false;
      }
    }
  }

  /// Final feasibility sanity check at the claimed optimum.
  bool polish(const std::vector<double>& cost) {
    compute_y(cost);
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) worst = std::min(worst, x_b_[static_cast<std::size_t>(i)]);
    return worst >= -opt_.tol_feas * 100.0;
  }

  void finish(LpSolution& sol, LpStatus status) {
    sol.status = status;
    sol.iterations = iter_;
    sol.z.assign(static_cast<std::size_t>(n_struct_), 0.0);
    for (int j = 0; j < n_struct_; ++j) {
      const int r = pos_in_basis_[static_cast<std::size_t>(j)];
      if (r >= 0) sol.z[static_cast<std::size_t>(j)] = x_b_[static_cast<std::size_t>(r)];
    }
    double obj = 0.0;
    for (int j = 0; j < n_struct_; ++j) obj += p_.c[static_cast<std::size_t>(j)] * sol.z[static_cast<std::size_t>(j)];
    sol.objective = obj;
  }
};

}  // namespace lp_detail

/// Solves the linear program. Infeasible/unbounded problems are reported via
/// the status, not as errors; malformed input throws.
inline LpSolution solve(const LpProblem& p, const LpOptions& opt = {}) {
  p.validate();
  if (p.n == 0) {
    LpSolution sol;
    bool feasible = true;
    for (double v : p.b_eq)
      if (std::fabs(v) > opt.tol_feas) feasible = false;
    for (double v : p.b_ub)
      if (v < -opt.tol_feas) feasible = false;
    sol.status = feasible ? LpStatus::Optimal : LpStatus::Infeasible;
    sol.duals.assign(p.a_eq.size() + p.a_ub.size(), 0.0);
    return sol;
  }
  lp_detail::Simplex spx(p, opt);
  return spx.run();
}

/// Block-diagonal concatenation: variables and rows of each problem are
/// offset so the stacked program decomposes exactly into its blocks.
inline LpProblem stack_problems(const std::vector<LpProblem>& blocks) {
  if (blocks.empty())
    throw std::invalid_argument("stack_problems: empty list");
  LpProblem out;
  int offset = 0;
  for (const auto& blk : blocks) {
    blk.validate();
    out.c.insert(out.c.end(), blk.c.begin(), blk.c.end());
    auto shift_rows = [&](const std::vector<SparseRow>& rows,
                          std::vector<SparseRow>& dst) {
      for (const auto& row : rows) {
        SparseRow r;
        r.entries.reserve(row.entries.size());
        for (const auto& [j, a] : row.entries) r.entries.emplace_back(j + offset, a);
        dst.push_back(std::move(r));
      }
    };
    shift_rows(blk.a_eq, out.a_eq);
    shift_rows(blk.a_ub, out.a_ub);
    out.b_eq.insert(out.b_eq.end(), blk.b_eq.begin(), blk.b_eq.end());
    out.b_ub.insert(out.b_ub.end(), blk.b_ub.begin(), blk.b_ub.end());
    offset += blk.n;
  }
  out.n = offset;
  return out;
}

/// Plain-text dump for inspection. Format: header, then one line per
/// objective/constraint entry; not a load-bearing interchange format.
inline void dump_problem(const LpProblem& p, std::ostream& os) {
  os << "LP n=" << p.n << " eq=" << p.a_eq.size() << " ub=" << p.a_ub.size()
     << "\n";
  os << "OBJECTIVE\n";
  for (int j = 0; j < p.n; ++j)
    if (p.c[static_cast<std::size_t>(j)] != 0.0) os << "  z" << j << " " << p.c[static_cast<std::size_t>(j)] << "\n";
  auto dump_rows = [&](const char* tag, const std::vector<SparseRow>& rows,
                       const std::vector<double>& rhs, const char* rel) {
    os << tag << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      os << "  r" << i << ":";
      for (const auto& [j, a] : rows[i].entries) os << " " << a << "*z" << j;
      os << " " << rel << " " << rhs[i] << "\n";
    }
  };
  dump_rows("EQUALITIES", p.a_eq, p.b_eq, "=");
  dump_rows("INEQUALITIES", p.a_ub, p.b_ub, "<=");
  os << "BOUNDS z >= 0\n";
}

}  // namespace qrfuse
