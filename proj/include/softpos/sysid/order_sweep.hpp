#pragma once

// Model-order sweep: one realization per candidate order, scored by one-step
// prediction on the training and test partitions.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/state_space.hpp"
#include "softpos/sysid/dataset.hpp"
#include "softpos/sysid/metrics.hpp"
#include "softpos/sysid/realization.hpp"

namespace softpos::sysid {

/// Free parameters of an order-n SISO innovations model in canonical form:
/// n each for the A, B and K polynomials.
inline std::size_t statespace_params(std::size_t n) { return 3 * n; }

inline constexpr double kOrderTieTolerance = 0.01;  // relative FPE slack

struct SweepRow {
  std::size_t order = 0;
  std::optional<FitReport> train;
  std::optional<FitReport> test;
  std::optional<StateSpaceModel> model;
  std::vector<double> singular_values;
  std::string error;  // set when the realization failed

  bool ok() const { return error.empty(); }
};

/// Rows come back in the order requested; a failed realization records its
/// message and the sweep continues.
inline std::vector<SweepRow> order_sweep(const IdDataset& ds, const std::vector<std::size_t>& orders,
                                         const RealizationOptions& opt = {}) {
  ds.validate();
  if (orders.empty()) throw InvalidInput("order_sweep: at least one order required");
  const std::size_t ntr = ds.train_size();
  std::vector<SweepRow> rows;
  rows.reserve(orders.size());
  for (const std::size_t n : orders) {
    SweepRow row;
    row.order = n;
    try {
      auto real = realize_statespace(ds, n, opt);
      const auto yhat = predict_one_step(real.model, ds.u, ds.y);
      const std::span<const double> yh(yhat);
      const std::size_t d = statespace_params(n);
      row.train = fit_metrics(ds.train_y(), yh.first(ntr), d);
      row.test = fit_metrics(ds.test_y(), yh.subspan(ntr), d);
      row.model = std::move(real.model);
      row.singular_values = std::move(real.singular_values);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Smallest order whose test FPE is within `tie` (relative) of the best.
inline std::optional<std::size_t> select_order(const std::vector<SweepRow>& rows, double tie = kOrderTieTolerance) {
  std::optional<double> best;
  for (const auto& r : rows) {
    if (r.ok() && (!best || r.test->fpe < *best)) best = r.test->fpe;
  }
  if (!best) return std::nullopt;
  std::optional<std::size_t> pick;
  for (const auto& r : rows) {
    if (r.ok() && r.test->fpe <= *best * (1.0 + tie) && (!pick || r.order < *pick)) pick = r.order;
  }
  return pick;
}

namespace sweep_detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace sweep_detail

/// Aligned text table:
///   MO | Training MSE  Fit(%)  FPE | Testing MSE  Fit(%)  FPE
inline std::string render_sweep_table(const std::vector<SweepRow>& rows) {
  using sweep_detail::fmt;
  std::ostringstream os;
  os << "                     Training                          Testing\n";
  os << "MO        MSE     Fit(%)          FPE          MSE     Fit(%)          FPE\n";
  for (const auto& r : rows) {
    os << fmt("%2.0f", static_cast<double>(r.order));
    if (!r.ok()) {
      os << "  error: " << r.error << '\n';
      continue;
    }
    for (const auto* rep : {&*r.train, &*r.test}) {
      os << fmt(" %12.6g", rep->mse) << fmt(" %9.2f", rep->fit_display()) << fmt(" %12.6g", rep->fpe);
    }
    os << '\n';
  }
  return os.str();
}

/// CSV with full-precision numbers; fit columns hold the unclamped value or
/// are empty when undefined.
inline std::string render_sweep_csv(const std::vector<SweepRow>& rows) {
  using sweep_detail::fmt;
  std::ostringstream os;
  os << "order,train_mse,train_fit_pct,train_fpe,test_mse,test_fit_pct,test_fpe,error\n";
  for (const auto& r : rows) {
    os << r.order;
    if (!r.ok()) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      os << ",,,,,,,\"" << msg << "\"\n";
      continue;
    }
    for (const auto* rep : {&*r.train, &*r.test}) {
      os << ',' << fmt("%.17g", rep->mse) << ',' << (rep->fit_pct ? fmt("%.17g", *rep->fit_pct) : "") << ','
         << fmt("%.17g", rep->fpe);
    }
    os << ",\n";
  }
  return os.str();
}

}  // namespace softpos::sysid
