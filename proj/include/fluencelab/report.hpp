// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Per-case metric rows, summaries and significance tables, plus their CSV
// forms:
//   metrics:      run_id,case_id,mae,energy_err_pct,psnr_db,ssim
//   summary:      run_id,metric,mean,std,n
//   significance: run_a,run_b,metric,w_stat,p_value

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fluencelab/kv_text.hpp"
#include "fluencelab/wilcoxon.hpp"

namespace fluencelab {

struct MetricRow {
  std::string run_id;
  std::string case_id;
  double mae = 0;
  double energy_err_pct = 0;
  double psnr_db = 0;
  double ssim = 0;
};

inline constexpr const char* kMetricNames[] = {"mae", "energy_err_pct", "psnr_db", "ssim"};

inline double metric_value(const MetricRow& r, const std::string& metric) {
  if (metric == "mae") return r.mae;
  if (metric == "energy_err_pct") return r.energy_err_pct;
  if (metric == "psnr_db") return r.psnr_db;
  if (metric == "ssim") return r.ssim;
  throw ConfigError("unknown metric '" + metric + "'");
}

struct SummaryRow {
  std::string run_id;
  std::string metric;
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 when n == 1
  int n = 0;
};

struct SignificanceRow {
  std::string run_a;
  std::string run_b;
  std::string metric;
  double w_stat = 0;
  double p_value = 1;
};

struct MeanStd {
  double mean = 0;
  double std = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  bool all_equal = true;
  for (double x : v) {
    r.mean += x;
    all_equal &= (x == v.front());
  }
  r.mean /= static_cast<double>(v.size());
  // Identical values (including all-infinite PSNR) have zero spread.
  if (v.size() < 2 || all_equal) return {all_equal ? v.front() : r.mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return r;
}

/// One row per (run, metric), runs in first-appearance order.
inline std::vector<SummaryRow> aggregate_report(const std::vector<MetricRow>& rows) {
  std::vector<std::string> runs;
  std::map<std::string, std::vector<const MetricRow*>> by_run;
  for (const auto& r : rows) {
    if (!by_run.count(r.run_id)) runs.push_back(r.run_id);
    by_run[r.run_id].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& run : runs)
    for (const char* metric : kMetricNames) {
      std::vector<double> v;
      for (const auto* r : by_run[run]) v.push_back(metric_value(*r, metric));
      const auto ms = mean_std(v);
      out.push_back({run, metric, ms.mean, ms.std, static_cast<int>(v.size())});
    }
  return out;
}

/// Wilcoxon signed-rank tests between two runs, paired by case_id, for every metric.
inline std::vector<SignificanceRow> compare_runs(const std::vector<MetricRow>& rows, const std::string& run_a,
                                                 const std::string& run_b) {
  std::map<std::string, const MetricRow*> a, b;
  for (const auto& r : rows) {
    if (r.run_id == run_a) a[r.case_id] = &r;
    if (r.run_id == run_b) b[r.case_id] = &r;
  }
  std::vector<SignificanceRow> out;
  for (const char* metric : kMetricNames) {
    std::vector<double> va, vb;
    for (const auto& [id, ra] : a) {
      auto it = b.find(id);
      if (it == b.end()) continue;
      va.push_back(metric_value(*ra, metric));
      vb.push_back(metric_value(*it->second, metric));
    }
    if (va.empty()) throw ConfigError("runs '" + run_a + "' and '" + run_b + "' share no cases");
    const auto w = wilcoxon_signed_rank(va, vb);
    out.push_back({run_a, run_b, metric, w.w_plus, w.p_value});
  }
  return out;
}

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

inline double parse_csv_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s, "csv field");
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "run_id,case_id,mae,energy_err_pct,psnr_db,ssim\n";
  for (const auto& r : rows)
    out += r.run_id + "," + r.case_id + "," + csv_number(r.mae) + "," + csv_number(r.energy_err_pct) + "," +
           csv_number(r.psnr_db) + "," + csv_number(r.ssim) + "\n";
  return out;
}

inline std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricRow> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (trim(line) != "run_id,case_id,mae,energy_err_pct,psnr_db,ssim") throw DataError("unexpected metrics CSV header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw DataError("metrics CSV row needs 6 fields");
    rows.push_back({f[0], f[1], parse_csv_number(f[2]), parse_csv_number(f[3]), parse_csv_number(f[4]),
                    parse_csv_number(f[5])});
  }
  return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "run_id,metric,mean,std,n\n";
  for (const auto& r : rows)
    out += r.run_id + "," + r.metric + "," + csv_number(r.mean) + "," + csv_number(r.std) + "," + std::to_string(r.n) + "\n";
  return out;
}

inline std::string significance_csv(const std::vector<SignificanceRow>& rows) {
  std::string out = "run_a,run_b,metric,w_stat,p_value\n";
  for (const auto& r : rows)
    out += r.run_a + "," + r.run_b + "," + r.metric + "," + csv_number(r.w_stat) + "," + csv_number(r.p_value) + "\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace fluencelab
