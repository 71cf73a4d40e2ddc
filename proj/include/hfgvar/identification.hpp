#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "hfgvar/error.hpp"
#include "hfgvar/model_core.hpp"
#include "hfgvar/rng.hpp"

namespace hfgvar {

enum class Sign { positive, negative, zero, unrestricted };

inline Sign parse_sign(const std::string& s) {
  if (s == "+") return Sign::positive;
  if (s == "-") return Sign::negative;
  if (s == "0") return Sign::zero;
  if (s == "~") return Sign::unrestricted;
  fail(ErrorKind::config, "restriction cell '" + s + "' is not one of +, -, 0, ~");
}
inline const char* sign_symbol(Sign s) {
  switch (s) {
    case Sign::positive: return "+";
    case Sign::negative: return "-";
    case Sign::zero: return "0";
    case Sign::unrestricted: return "~";
  }
  return "?";
}

// Impact restrictions. Labeled shock s is impact column s (s < 2m, ordered
// as the surprise block); the optional "Other" column applies to every
// remaining column. Rows may repeat a variable.
struct RestrictionTable {
  static constexpr int kOther = -1;

  struct Cell {
    int variable;  // stacked index
    int shock;     // column index, or kOther
    Sign sign;
  };

  std::vector<std::string> shocks;
  std::vector<Cell> cells;  // restricted cells only

  void set(int variable, int shock, Sign sign) {
    if (sign != Sign::unrestricted) cells.push_back({variable, shock, sign});
  }
};

inline std::vector<std::string> validate_table(const RestrictionTable& t, const ModelSpec& spec) {
  std::vector<std::string> out;
  if (static_cast<int>(t.shocks.size()) != spec.n_surprises()) {
    out.push_back("restriction table labels " + std::to_string(t.shocks.size()) + " shocks; expected 2m = " +
                  std::to_string(spec.n_surprises()));
  }
  for (const auto& c : t.cells) {
    if (c.variable < 0 || c.variable >= spec.K()) {
      out.push_back("restricted cell references variable index " + std::to_string(c.variable) + " outside 0.." +
                    std::to_string(spec.K() - 1));
    }
    if (c.shock != RestrictionTable::kOther && (c.shock < 0 || c.shock >= static_cast<int>(t.shocks.size()))) {
      out.push_back("restricted cell references unknown shock index " + std::to_string(c.shock));
    }
    if (c.sign == Sign::zero && c.variable >= spec.n_surprises()) {
      out.push_back("zero restriction on non-surprise variable index " + std::to_string(c.variable));
    }
  }
  return out;
}

// {"shocks": [...], "rows": [{"variable": "<id>", "cells": {"<shock>": "+", ...}}, ...]}
// Cells may also be an array in shock order; "Other" is accepted as an extra
// shock key.
inline RestrictionTable parse_restriction_table(const nlohmann::json& j, const std::vector<std::string>& variables) {
  RestrictionTable t;
  try {
    t.shocks = j.at("shocks").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      const std::string var = row.at("variable").get<std::string>();
      const auto it = std::find(variables.begin(), variables.end(), var);
      if (it == variables.end()) fail(ErrorKind::config, "restriction table: unknown variable id '" + var + "'");
      const int vi = static_cast<int>(it - variables.begin());
      const auto& cells = row.at("cells");
      if (cells.is_array()) {
        if (cells.size() != t.shocks.size() && cells.size() != t.shocks.size() + 1) {
          fail(ErrorKind::config, "restriction table: row '" + var + "' has " + std::to_string(cells.size()) +
                                      " cells for " + std::to_string(t.shocks.size()) + " shocks");
        }
        for (std::size_t s = 0; s < cells.size(); ++s) {
          const int shock = s < t.shocks.size() ? static_cast<int>(s) : RestrictionTable::kOther;
          t.set(vi, shock, parse_sign(cells[s].get<std::string>()));
        }
      } else {
        for (const auto& [label, cell] : cells.items()) {
          int shock = RestrictionTable::kOther;
          if (label != "Other") {
            const auto sit = std::find(t.shocks.begin(), t.shocks.end(), label);
            if (sit == t.shocks.end()) fail(ErrorKind::config, "restriction table: unknown shock label '" + label + "'");
            shock = static_cast<int>(sit - t.shocks.begin());
          }
          t.set(vi, shock, parse_sign(cell.get<std::string>()));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed restriction table: ") + e.what());
  }
  return t;
}

inline RestrictionTable load_restriction_table(const std::string& path, const std::vector<std::string>& variables) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open restriction table '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, "restriction table '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_restriction_table(j, variables);
}

// ---------------------------------------------------------------------------

inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& xi) {
  if (xi.rows() != xi.cols()) fail(ErrorKind::numerical, "Cholesky: matrix is not square");
  Eigen::LLT<Eigen::MatrixXd> llt(xi);
  if (llt.info() != Eigen::Success || !xi.allFinite()) {
    const Eigen::MatrixXd sym = 0.5 * (xi + xi.transpose());
    const double min_eig = xi.allFinite() ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
                                                .eigenvalues()
                                                .minCoeff()
                                          : std::nan("");
    fail(ErrorKind::numerical, "Cholesky: matrix is not positive definite (smallest eigenvalue ~ " +
                                   std::to_string(min_eig) + ")");
  }
  return llt.matrixL();
}

// Haar-distributed orthonormal matrix: QR of a Gaussian matrix with the
// triangular factor's diagonal made positive.
inline Eigen::MatrixXd random_block_rotation(int m, Rng& rng) {
  Eigen::MatrixXd g(m, m);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < m; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

inline Eigen::MatrixXd embed_rotation(const Eigen::MatrixXd& rot_us, const Eigen::MatrixXd& rot_ea, int K, int m) {
  if (rot_us.rows() != m || rot_us.cols() != m || rot_ea.rows() != m || rot_ea.cols() != m || K < 2 * m) {
    fail(ErrorKind::numerical, "embed_rotation: blocks must be m x m with K >= 2m");
  }
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(K, K);
  R.block(0, 0, m, m) = rot_us;
  R.block(m, m, m, m) = rot_ea;
  return R;
}

// Q R without touching the columns beyond 2m.
inline Eigen::MatrixXd rotate_impact(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& rot_us,
                                     const Eigen::MatrixXd& rot_ea) {
  const Eigen::Index m = rot_us.rows();
  Eigen::MatrixXd impact = Q;
  impact.middleCols(0, m).noalias() = Q.middleCols(0, m) * rot_us;
  impact.middleCols(m, m).noalias() = Q.middleCols(m, m) * rot_ea;
  return impact;
}

struct CellViolation {
  int variable;
  int shock;  // column index
  Sign required;
  double value;
};

struct RestrictionReport {
  bool accepted = false;
  std::vector<int> column_signs;  // +1 / -1 per labeled shock column
  std::vector<CellViolation> violations;
};

namespace ident_detail {

inline bool satisfied(Sign sign, double v, double zero_tol) {
  switch (sign) {
    case Sign::positive: return v > 0.0;
    case Sign::negative: return v < 0.0;
    case Sign::zero: return std::abs(v) <= zero_tol;
    case Sign::unrestricted: return true;
  }
  return true;
}

inline std::vector<CellViolation> column_violations(const Eigen::MatrixXd& impact, const RestrictionTable& t,
                                                    int shock_key, int column, double flip, double zero_tol) {
  std::vector<CellViolation> out;
  for (const auto& c : t.cells) {
    if (c.shock != shock_key) continue;
    const double v = flip * impact(c.variable, column);
    if (!satisfied(c.sign, v, zero_tol)) out.push_back({c.variable, column, c.sign, v});
  }
  return out;
}

}  // namespace ident_detail

// Each restricted column may be negated as a whole; the orientation with no
// violations (preferring the original) is reported in column_signs.
inline RestrictionReport check_restrictions(const Eigen::MatrixXd& impact, const RestrictionTable& t, double zero_tol) {
  using ident_detail::column_violations;
  RestrictionReport rep;
  const int labeled = static_cast<int>(t.shocks.size());
  auto orient = [&](int key, int column) {
    auto keep = column_violations(impact, t, key, column, 1.0, zero_tol);
    if (keep.empty()) return 1;
    auto flip = column_violations(impact, t, key, column, -1.0, zero_tol);
    if (flip.empty()) return -1;
    auto& worse = flip.size() < keep.size() ? flip : keep;
    for (auto& v : worse) rep.violations.push_back(v);
    return flip.size() < keep.size() ? -1 : 1;
  };
  for (int s = 0; s < labeled; ++s) rep.column_signs.push_back(orient(s, s));
  const bool has_other = std::any_of(t.cells.begin(), t.cells.end(),
                                     [](const auto& c) { return c.shock == RestrictionTable::kOther; });
  if (has_other) {
    for (int col = labeled; col < impact.cols(); ++col) orient(RestrictionTable::kOther, col);
  }
  rep.accepted = rep.violations.empty();
  return rep;
}

struct IdentifiedDraw {
  Eigen::MatrixXd rotation_us;  // m x m, sign normalization folded in
  Eigen::MatrixXd rotation_ea;
  Eigen::MatrixXd rotation;     // K x K
  Eigen::MatrixXd impact;       // Q R
  long attempts = 0;
};

struct SearchResult {
  std::optional<IdentifiedDraw> draw;  // empty on exhaustion
  long attempts = 0;
};

inline SearchResult rotation_search(const Eigen::MatrixXd& Q, const RestrictionTable& t, int m, double zero_tol,
                                    long max_attempts, Rng& rng) {
  if (max_attempts < 1) fail(ErrorKind::config, "rotation search needs max_attempts >= 1");
  const int K = static_cast<int>(Q.rows());
  SearchResult res;
  for (long attempt = 1; attempt <= max_attempts; ++attempt) {
    res.attempts = attempt;
    Eigen::MatrixXd rot_us = random_block_rotation(m, rng);
    Eigen::MatrixXd rot_ea = random_block_rotation(m, rng);
    const Eigen::MatrixXd impact = rotate_impact(Q, rot_us, rot_ea);
    const RestrictionReport rep = check_restrictions(impact, t, zero_tol);
    if (!rep.accepted) continue;
    for (int s = 0; s < static_cast<int>(rep.column_signs.size()); ++s) {
      if (rep.column_signs[s] > 0) continue;
      if (s < m) {
        rot_us.col(s) = -rot_us.col(s);
      } else {
        rot_ea.col(s - m) = -rot_ea.col(s - m);
      }
    }
    IdentifiedDraw d;
    d.rotation_us = rot_us;
    d.rotation_ea = rot_ea;
    d.rotation = embed_rotation(rot_us, rot_ea, K, m);
    d.impact = rotate_impact(Q, rot_us, rot_ea);
    d.attempts = attempt;
    res.draw = std::move(d);
    return res;
  }
  return res;
}

}  // namespace hfgvar
