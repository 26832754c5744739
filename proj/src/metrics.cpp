#include "stlcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stlcal/errors.hpp"
#include "stlcal/stl.hpp"

namespace stlcal {

namespace {

void check_lengths(const std::vector<double>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw SchemaError("predictions and labels differ in length");
  }
  if (preds.empty()) throw SchemaError("no predictions");
}

std::size_t bin_of(double p, std::size_t bins) {
  auto b = static_cast<std::size_t>(std::floor(p * static_cast<double>(bins)));
  if (b >= bins) b = bins - 1;
  return b;
}

}  // namespace

std::vector<ReliabilityBin> reliability_bins(const std::vector<double>& preds,
                                             const std::vector<int>& labels,
                                             std::size_t bins) {
  check_lengths(preds, labels);
  if (bins < 1) throw SchemaError("bin count must be >= 1");

  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> label_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t b = bin_of(preds[i], bins);
    conf_sum[b] += preds[i];
    label_sum[b] += static_cast<double>(labels[i]);
    ++count[b];
  }

  std::vector<ReliabilityBin> out(bins);
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? 1.0 : width * static_cast<double>(b + 1);
    out[b].count = count[b];
    if (count[b] > 0) {
      out[b].mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
      out[b].accuracy = label_sum[b] / static_cast<double>(count[b]);
    }
  }
  return out;
}

double ece(const std::vector<double>& preds, const std::vector<int>& labels,
           std::size_t bins) {
  const auto table = reliability_bins(preds, labels, bins);
  const auto n = static_cast<double>(preds.size());
  double acc = 0.0;
  for (const auto& b : table) {
    if (b.count == 0) continue;
    acc += (static_cast<double>(b.count) / n) * std::fabs(b.accuracy - b.mean_confidence);
  }
  return acc;
}

double brier(const std::vector<double>& preds, const std::vector<int>& labels) {
  check_lengths(preds, labels);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - static_cast<double>(labels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

std::optional<double> auroc(const std::vector<double>& preds, const std::vector<int>& labels) {
  check_lengths(preds, labels);
  const std::size_t n = preds.size();
  std::size_t n_pos = 0;
  for (int c : labels) n_pos += static_cast<std::size_t>(c);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });

  // average ranks over tie runs; ranks are 1-based
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && preds[order[j + 1]] == preds[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) rank_sum_pos += rank[k];
  }
  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

CalibrationReport calibration_report(const std::vector<double>& preds,
                                     const std::vector<int>& labels, std::size_t bins) {
  CalibrationReport rep;
  rep.bins = reliability_bins(preds, labels, bins);
  rep.ece = ece(preds, labels, bins);
  rep.brier = brier(preds, labels);
  rep.auroc = auroc(preds, labels);
  rep.n = preds.size();
  return rep;
}

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count,conf,acc\n";
  for (const auto& b : bins) {
    out << format_double(b.lo) << "," << format_double(b.hi) << "," << b.count << ","
        << format_double(b.mean_confidence) << "," << format_double(b.accuracy) << "\n";
  }
  return out.str();
}

}  // namespace stlcal
