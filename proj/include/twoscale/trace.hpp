// Per-iteration run records and their CSV form.
#ifndef TWOSCALE_TRACE_HPP
#define TWOSCALE_TRACE_HPP

#include <ostream>
#include <string>
#include <vector>

#include "twoscale/io.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

struct TraceRow {
  long t = 0;
  double opt_err = 0.0;     // |chi - chi_star| when a reference is known, else NaN
  double track_err = 0.0;   // tracker error metric (see RunOptions)
  double constr_res = 0.0;  // |sum_i (A_i x_i - b_i)| for constrained setups, else 0
  int lambda_neg = 0;       // 1 if any multiplier component is negative
  Vec state;                // stacked chi
  Vec proxies;              // stacked per-agent aggregate estimates (empty in exact runs)
};

struct RunTrace {
  std::vector<TraceRow> rows;
  bool diverged = false;
  long divergence_iteration = -1;
  std::vector<std::string> warnings;

  const TraceRow& front() const { return rows.front(); }
  const TraceRow& back() const { return rows.back(); }
  std::vector<double> column_opt_err() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& row : rows) v.push_back(row.opt_err);
    return v;
  }
  std::vector<double> column_track_err() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& row : rows) v.push_back(row.track_err);
    return v;
  }
};

/// Header `t,opt_err,track_err,constr_res,lambda_neg`; with include_state the
/// stacked state (chi_k) and proxy (proxy_k) columns are appended.
inline void write_trace_csv(std::ostream& out, const RunTrace& trace, bool include_state = false) {
  out << "t,opt_err,track_err,constr_res,lambda_neg";
  if (include_state && !trace.rows.empty()) {
    for (Eigen::Index k = 0; k < trace.rows.front().state.size(); ++k) out << ",chi_" << k;
    for (Eigen::Index k = 0; k < trace.rows.front().proxies.size(); ++k) out << ",proxy_" << k;
  }
  out << "\n";
  for (const auto& row : trace.rows) {
    out << row.t << "," << format_double(row.opt_err) << "," << format_double(row.track_err)
        << "," << format_double(row.constr_res) << "," << row.lambda_neg;
    if (include_state) {
      for (Eigen::Index k = 0; k < row.state.size(); ++k) out << "," << format_double(row.state(k));
      for (Eigen::Index k = 0; k < row.proxies.size(); ++k)
        out << "," << format_double(row.proxies(k));
    }
    out << "\n";
  }
}

}  // namespace twoscale

#endif  // TWOSCALE_TRACE_HPP
