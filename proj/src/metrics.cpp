// SPDX-License-Identifier: Apache-2.0
#include "gradekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"

namespace gradekit {

namespace {

void check_lengths(std::span<const Grade> pred, std::span<const Grade> ref) {
  if (pred.size() != ref.size())
    throw ShapeError(fmt::format("length mismatch: {} predictions, {} references",
                                 pred.size(), ref.size()));
  if (pred.empty()) throw ShapeError("metrics need at least one prediction");
}

}  // namespace

double rmse(std::span<const Grade> pred, std::span<const Grade> ref) {
  check_lengths(pred, ref);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

double pcc(std::span<const Grade> pred, std::span<const Grade> ref) {
  check_lengths(pred, ref);
  if (pred.size() < 2) throw DegenerateInput("correlation needs at least two points");
  const double n = static_cast<double>(pred.size());
  const double mean_p = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double mean_r = std::accumulate(ref.begin(), ref.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mean_p;
    const double dr = ref[i] - mean_r;
    sxy += dp * dr;
    sxx += dp * dp;
    syy += dr * dr;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("correlation of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) hold ranks i+1..j+1
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double src(std::span<const Grade> pred, std::span<const Grade> ref) {
  check_lengths(pred, ref);
  const auto rp = average_ranks(pred);
  const auto rr = average_ranks(ref);
  return pcc(rp, rr);
}

double within(std::span<const Grade> pred, std::span<const Grade> ref, double tau) {
  check_lengths(pred, ref);
  if (!(tau > 0.0)) throw DataError("tau must be positive");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (std::abs(pred[i] - ref[i]) <= tau) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

MetricsReport report(std::span<const Grade> pred, std::span<const Grade> ref) {
  MetricsReport r;
  r.rmse = rmse(pred, ref);
  r.pcc = pcc(pred, ref);
  r.src = src(pred, ref);
  r.within_half = within(pred, ref, 0.5);
  r.within_one = within(pred, ref, 1.0);
  r.n = pred.size();
  return r;
}

std::string render_metrics_table(std::span<const LabelledReport> rows) {
  std::string out = "| System | PCC | SRC | RMSE | %≤0.5 | %≤1.0 | n |\n";
  out += "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out += fmt::format("| {} | {:.3f} | {:.3f} | {:.3f} | {:.1f} | {:.1f} | {} |\n", row.label,
                       m.pcc, m.src, m.rmse, m.within_half, m.within_one, m.n);
  }
  return out;
}

std::string serialize_report(const MetricsReport& r) {
  std::string out = "{\"pcc\": " + format_real(r.pcc);
  out += ", \"src\": " + format_real(r.src);
  out += ", \"rmse\": " + format_real(r.rmse);
  out += ", \"within_0.5\": " + format_real(r.within_half);
  out += ", \"within_1.0\": " + format_real(r.within_one);
  out += ", \"n\": " + std::to_string(r.n) + "}";
  return out;
}

MetricsReport parse_report(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.pcc = j.at("pcc").get<double>();
    r.src = j.at("src").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.within_half = j.at("within_0.5").get<double>();
    r.within_one = j.at("within_1.0").get<double>();
    r.n = j.at("n").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid metrics report: ") + e.what());
  }
}

std::string render_scatter_csv(std::span<const ScatterPoint> points) {
  std::string out = "speaker,ref,pred\n";
  for (const auto& p : points)
    out += p.speaker + "," + format_real(p.ref) + "," + format_real(p.pred) + "\n";
  return out;
}

}  // namespace gradekit
