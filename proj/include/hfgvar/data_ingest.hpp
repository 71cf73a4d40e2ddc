#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "hfgvar/error.hpp"
#include "hfgvar/model_core.hpp"

namespace hfgvar {

// ---------------------------------------------------------------------------
// Calendar months ("YYYY-MM") as consecutive integers.

inline int parse_month(const std::string& key) {
  int y = 0, m = 0;
  char dash = 0;
  std::istringstream is(key.substr(0, 7));
  if (key.size() < 7 || !(is >> y >> dash >> m) || dash != '-' || m < 1 || m > 12) {
    fail(ErrorKind::data, "malformed month key '" + key + "' (expected YYYY-MM)");
  }
  return y * 12 + (m - 1);
}

inline std::string format_month(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", index / 12, index % 12 + 1);
  return buf;
}

inline std::vector<std::string> month_range(const std::string& first, int count) {
  std::vector<std::string> out;
  const int start = parse_month(first);
  for (int i = 0; i < count; ++i) out.push_back(format_month(start + i));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open CSV file '" + path + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(t.header.size()) + " fields, got " +
                                std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (first) fail(ErrorKind::data, "CSV file '" + path + "' is empty");
  return t;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::data, "non-numeric value '" + s + "' at " + where);
  }
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// High-frequency surprise events

enum class Region { US, EA };
enum class Instrument { rate_surprise, stock_surprise };
enum class EventWindow { press_release, conference };

struct RawEventRecord {
  std::string timestamp;  // ISO-8601; the first seven characters are the month
  Region region = Region::US;
  Instrument instrument = Instrument::rate_surprise;
  EventWindow window = EventWindow::press_release;
  double value = 0.0;  // percent change within the window
};

inline Region parse_region(const std::string& s) {
  if (s == "US") return Region::US;
  if (s == "EA") return Region::EA;
  fail(ErrorKind::data, "unknown region '" + s + "'");
}
inline Instrument parse_instrument(const std::string& s) {
  if (s == "rate_surprise") return Instrument::rate_surprise;
  if (s == "stock_surprise") return Instrument::stock_surprise;
  fail(ErrorKind::data, "unknown instrument '" + s + "'");
}
inline EventWindow parse_window(const std::string& s) {
  if (s == "press_release") return EventWindow::press_release;
  if (s == "conference") return EventWindow::conference;
  fail(ErrorKind::data, "unknown event window '" + s + "'");
}

inline const char* region_name(Region r) { return r == Region::US ? "US" : "EA"; }
inline const char* instrument_name(Instrument i) {
  return i == Instrument::rate_surprise ? "rate_surprise" : "stock_surprise";
}

// Monthly instrument matrix, columns ordered (US instruments, EA instruments).
struct MonthlySurprises {
  std::vector<std::string> periods;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

// Window values add up to the event value, events add up within a month, and
// months without events are zero. `instruments` selects the m instruments per
// region (rate first by default).
inline MonthlySurprises aggregate_surprises_to_monthly(
    const std::vector<RawEventRecord>& events, const std::string& first_month, int n_months,
    const std::vector<Instrument>& instruments = {Instrument::rate_surprise,
                                                  Instrument::stock_surprise}) {
  using Key = std::tuple<std::string, int, int, int>;
  std::map<Key, int> seen;
  std::vector<std::string> duplicates;
  for (const auto& e : events) {
    if (!std::isfinite(e.value)) fail(ErrorKind::data, "non-finite surprise value at " + e.timestamp);
    const Key key{e.timestamp, static_cast<int>(e.region), static_cast<int>(e.instrument),
                  static_cast<int>(e.window)};
    if (++seen[key] == 2) {
      duplicates.push_back(e.timestamp + "/" + region_name(e.region) + "/" +
                           instrument_name(e.instrument) + "/" +
                           (e.window == EventWindow::press_release ? "press_release" : "conference"));
    }
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate surprise rows:";
    for (const auto& d : duplicates) msg += " " + d;
    fail(ErrorKind::data, msg);
  }

  const int m = static_cast<int>(instruments.size());
  MonthlySurprises out;
  out.periods = month_range(first_month, n_months);
  for (Region r : {Region::US, Region::EA}) {
    for (Instrument i : instruments) {
      out.columns.push_back(std::string(region_name(r)) + "." + instrument_name(i));
    }
  }
  out.values = Eigen::MatrixXd::Zero(n_months, 2 * m);
  const int start = parse_month(first_month);
  for (const auto& e : events) {
    const int row = parse_month(e.timestamp) - start;
    if (row < 0 || row >= n_months) continue;
    const auto it = std::find(instruments.begin(), instruments.end(), e.instrument);
    if (it == instruments.end()) continue;
    const int col = (e.region == Region::US ? 0 : m) + static_cast<int>(it - instruments.begin());
    out.values(row, col) += e.value;
  }
  return out;
}

// Columns: timestamp, region, instrument, window, value.
inline std::vector<RawEventRecord> load_events_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  auto col = [&](const std::string& name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) fail(ErrorKind::data, path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
  };
  const auto cts = col("timestamp"), creg = col("region"), cins = col("instrument"),
             cwin = col("window"), cval = col("value");
  std::vector<RawEventRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    RawEventRecord e;
    e.timestamp = row[cts];
    e.region = parse_region(row[creg]);
    e.instrument = parse_instrument(row[cins]);
    e.window = parse_window(row[cwin]);
    e.value = parse_number(row[cval], path + " row " + std::to_string(r + 2));
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

enum class Transform { pct, log100 };

inline Transform parse_transform(const std::string& tag) {
  if (tag == "pct") return Transform::pct;
  if (tag == "100log") return Transform::log100;
  fail(ErrorKind::config, "unknown transform tag '" + tag + "' (expected 100log or pct)");
}
inline const char* transform_tag(Transform t) { return t == Transform::pct ? "pct" : "100log"; }

// "100log" -> 100 ln(x); "pct" -> identity.
inline Eigen::MatrixXd apply_transforms(const Eigen::MatrixXd& raw, const std::vector<Transform>& tags,
                                        const std::vector<std::string>& names = {}) {
  if (static_cast<Eigen::Index>(tags.size()) != raw.cols()) {
    fail(ErrorKind::config, "transform list has " + std::to_string(tags.size()) + " entries for " +
                                std::to_string(raw.cols()) + " columns");
  }
  Eigen::MatrixXd out = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    if (tags[c] != Transform::log100) continue;
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      if (!(raw(r, c) > 0.0)) {
        const std::string name = c < static_cast<Eigen::Index>(names.size()) ? names[c] : std::to_string(c);
        fail(ErrorKind::data, "nonpositive value " + format_number(raw(r, c)) + " under 100log at row " +
                                  std::to_string(r) + ", column " + name);
      }
      out(r, c) = 100.0 * std::log(raw(r, c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel

struct StandardizationLedger {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

struct PanelDataset {
  std::vector<std::string> periods;   // contiguous YYYY-MM keys
  std::vector<std::string> columns;   // "<block>.<variable>", stacked order
  Eigen::MatrixXd values;             // T x K
  std::vector<Transform> transforms;  // per column
  StandardizationLedger ledger;       // identity until standardize() runs

  int periods_count() const { return static_cast<int>(values.rows()); }
};

inline StandardizationLedger identity_ledger(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

// Zero sample mean and unit sample variance (n - 1 denominator) per column.
// The returned panel's ledger composes with any earlier one, so
// unstandardize() always maps back to transformed original units.
inline PanelDataset standardize(const PanelDataset& in) {
  const Eigen::Index T = in.values.rows();
  if (T < 2) fail(ErrorKind::data, "standardize needs at least two periods");
  PanelDataset out = in;
  const Eigen::VectorXd prev_mean = in.ledger.mean.size() ? in.ledger.mean : Eigen::VectorXd::Zero(in.values.cols());
  const Eigen::VectorXd prev_sd = in.ledger.sd.size() ? in.ledger.sd : Eigen::VectorXd::Ones(in.values.cols());
  out.ledger.mean.resize(in.values.cols());
  out.ledger.sd.resize(in.values.cols());
  for (Eigen::Index c = 0; c < in.values.cols(); ++c) {
    const auto col = in.values.col(c);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(T - 1);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || col.maxCoeff() == col.minCoeff()) {
      const std::string name = c < static_cast<Eigen::Index>(in.columns.size()) ? in.columns[c] : std::to_string(c);
      fail(ErrorKind::data, "cannot standardize constant column " + name);
    }
    out.values.col(c) = (col.array() - mean) / sd;
    out.ledger.mean(c) = prev_mean(c) + prev_sd(c) * mean;
    out.ledger.sd(c) = prev_sd(c) * sd;
  }
  return out;
}

inline Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& z, const StandardizationLedger& ledger) {
  Eigen::MatrixXd out = z;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    out.col(c) = z.col(c).array() * ledger.sd(c) + ledger.mean(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights

enum class WeightKind { gdp_share, export_share };

// `flows` holds one origin x destination matrix per period. GDP shares use a
// single origin row (the aggregate); export shares use N origins, with the
// self-flow dropped. Output rows are time averages normalized to sum to one.
inline Eigen::MatrixXd build_weights(WeightKind kind, const std::vector<Eigen::MatrixXd>& flows) {
  if (flows.empty()) fail(ErrorKind::data, "no weight flows supplied");
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(flows[0].rows(), flows[0].cols());
  for (const auto& f : flows) {
    if (f.rows() != avg.rows() || f.cols() != avg.cols()) {
      fail(ErrorKind::data, "weight flows change shape across periods");
    }
    if (!f.allFinite() || (f.array() < 0.0).any()) fail(ErrorKind::data, "weight flows must be nonnegative");
    avg += f;
  }
  avg /= static_cast<double>(flows.size());
  if (kind == WeightKind::export_share) {
    if (avg.rows() != avg.cols()) fail(ErrorKind::data, "export flows must be N x N");
    avg.diagonal().setZero();
  }
  for (Eigen::Index i = 0; i < avg.rows(); ++i) {
    const double s = avg.row(i).sum();
    if (!(s > 0.0)) {
      fail(ErrorKind::data, "weight row " + std::to_string(i) + " has no positive flows; cannot normalize");
    }
    avg.row(i) /= s;
  }
  return avg;
}

inline WeightMatrix combine_weights(const Eigen::MatrixXd& aggregate_row, const Eigen::MatrixXd& country_rows) {
  if (aggregate_row.rows() != 1 || aggregate_row.cols() != country_rows.cols() ||
      country_rows.rows() != country_rows.cols()) {
    fail(ErrorKind::data, "aggregate weights must be 1 x N and country weights N x N");
  }
  Eigen::MatrixXd w(country_rows.rows() + 1, country_rows.cols());
  w.row(0) = aggregate_row;
  w.bottomRows(country_rows.rows()) = country_rows;
  return WeightMatrix(std::move(w));
}

// Flows CSV: columns period, origin, then one column per destination. Rows
// sharing a period form one flow matrix, origins in file order.
inline std::vector<Eigen::MatrixXd> load_flows_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 3 || t.header[0] != "period" || t.header[1] != "origin") {
    fail(ErrorKind::data, path + ": flows CSV must start with columns period,origin");
  }
  const std::size_t n_dest = t.header.size() - 2;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> by_period;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (!by_period.count(row[0])) order.push_back(row[0]);
    std::vector<double> vals(n_dest);
    for (std::size_t c = 0; c < n_dest; ++c) {
      vals[c] = parse_number(row[c + 2], path + " row " + std::to_string(r + 2));
    }
    by_period[row[0]].push_back(std::move(vals));
  }
  std::vector<Eigen::MatrixXd> out;
  for (const auto& p : order) {
    const auto& rows = by_period[p];
    Eigen::MatrixXd m(rows.size(), n_dest);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < n_dest; ++c) m(i, c) = rows[i][c];
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_flows_csv(const std::string& path, const Eigen::MatrixXd& flows,
                            const std::vector<std::string>& origins,
                            const std::vector<std::string>& destinations, const std::string& period) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write '" + path + "'");
  out << "period,origin";
  for (const auto& d : destinations) out << ',' << d;
  out << '\n';
  for (Eigen::Index i = 0; i < flows.rows(); ++i) {
    out << period << ',' << origins[i];
    for (Eigen::Index j = 0; j < flows.cols(); ++j) out << ',' << format_number(flows(i, j));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Wide block CSVs: "period" + columns "<block>.<variable>".

struct BlockTable {
  std::vector<std::string> periods;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

inline BlockTable load_block_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "period") {
    fail(ErrorKind::data, path + ": first column must be 'period'");
  }
  BlockTable b;
  b.columns.assign(t.header.begin() + 1, t.header.end());
  for (const auto& c : b.columns) {
    if (c.find('.') == std::string::npos) {
      fail(ErrorKind::data, path + ": column id '" + c + "' is not of the form <block>.<variable>");
    }
  }
  b.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(b.columns.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    b.periods.push_back(t.rows[r][0]);
    if (r > 0 && parse_month(t.rows[r][0]) != parse_month(t.rows[r - 1][0]) + 1) {
      fail(ErrorKind::data, path + ": missing or unordered period before " + t.rows[r][0]);
    }
    for (std::size_t c = 0; c < b.columns.size(); ++c) {
      b.values(r, c) = parse_number(t.rows[r][c + 1], path + " row " + std::to_string(r + 2) + " column " + b.columns[c]);
    }
  }
  return b;
}

inline void write_block_csv(const std::string& path, const std::vector<std::string>& periods,
                            const std::vector<std::string>& columns, const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write '" + path + "'");
  out << "period";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << periods[r];
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << format_number(values(r, c));
    out << '\n';
  }
}

// Concatenates blocks column-wise over their common period range (all blocks
// must cover it without gaps) and applies the per-column transforms.
inline PanelDataset assemble_panel(const std::vector<BlockTable>& blocks,
                                   const std::map<std::string, std::string>& transform_tags,
                                   int expected_columns) {
  if (blocks.empty()) fail(ErrorKind::data, "no data blocks supplied");
  int first = parse_month(blocks[0].periods.front());
  int last = parse_month(blocks[0].periods.back());
  for (const auto& b : blocks) {
    if (b.periods.empty()) fail(ErrorKind::data, "empty data block");
    first = std::max(first, parse_month(b.periods.front()));
    last = std::min(last, parse_month(b.periods.back()));
  }
  if (last < first) fail(ErrorKind::data, "data blocks share no common periods");
  const int T = last - first + 1;
  PanelDataset p;
  for (int t = 0; t < T; ++t) p.periods.push_back(format_month(first + t));
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.values.cols();
  if (total != expected_columns) {
    fail(ErrorKind::data, "data blocks provide " + std::to_string(total) + " columns; model needs K = " +
                              std::to_string(expected_columns));
  }
  Eigen::MatrixXd raw(T, total);
  Eigen::Index col = 0;
  for (const auto& b : blocks) {
    const int off = first - parse_month(b.periods.front());
    raw.middleCols(col, b.values.cols()) = b.values.middleRows(off, T);
    for (const auto& c : b.columns) {
      p.columns.push_back(c);
      const auto it = transform_tags.find(c);
      p.transforms.push_back(it == transform_tags.end() ? Transform::pct : parse_transform(it->second));
    }
    col += b.values.cols();
  }
  p.values = apply_transforms(raw, p.transforms, p.columns);
  p.ledger = identity_ledger(total);
  return p;
}

}  // namespace hfgvar
