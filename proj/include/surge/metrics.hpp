#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace surge {

// One diagnostics row per logged training step. l1/l2 refer to the first and
// second binarizable layer; columns that do not apply to a method stay NaN.
struct MetricRow {
  long step = 0;
  std::uint64_t seed = 0;
  std::string method;
  double loss = std::nan("");
  double dist_to_opt = std::nan("");
  double lambda_l1 = std::nan("");
  double lambda_l2 = std::nan("");
  double wb_norm_l1 = std::nan("");
  double wb_norm_l2 = std::nan("");
  double wa_norm_l1 = std::nan("");
  double wa_norm_l2 = std::nan("");
  double alpha_w_l1 = std::nan("");
  double alpha_x_l1 = std::nan("");
  double alpha_w_l2 = std::nan("");
  double alpha_x_l2 = std::nan("");
  double cos_w = std::nan("");
  double cos_x = std::nan("");
};

inline const char* metrics_csv_header() {
  return "step,seed,method,loss,dist_to_opt,lambda_l1,lambda_l2,wb_norm_l1,wb_norm_l2,"
         "wa_norm_l1,wa_norm_l2,alpha_w_l1,alpha_x_l1,alpha_w_l2,alpha_x_l2,cos_w,cos_x";
}

// Shortest exact decimal form; locale-independent and stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline std::string metrics_csv_row(const MetricRow& r) {
  std::string out;
  out.reserve(256);
  out += std::to_string(r.step);
  out += ',';
  out += std::to_string(r.seed);
  out += ',';
  out += r.method;
  for (double v : {r.loss, r.dist_to_opt, r.lambda_l1, r.lambda_l2, r.wb_norm_l1, r.wb_norm_l2,
                   r.wa_norm_l1, r.wa_norm_l2, r.alpha_w_l1, r.alpha_x_l1, r.alpha_w_l2,
                   r.alpha_x_l2, r.cos_w, r.cos_x}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream f(path, std::ios::binary);  // binary: no newline translation
  if (!f) throw std::runtime_error("metrics: cannot write '" + path + "'");
  f << metrics_csv_header() << '\n';
  for (const MetricRow& r : rows) f << metrics_csv_row(r) << '\n';
  if (!f) throw std::runtime_error("metrics: write failure on '" + path + "'");
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace surge
