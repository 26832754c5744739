#pragma once

#include <optional>
#include <string>
#include <vector>

namespace stlcal {

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  double brier = 0.0;
  std::optional<double> auroc;  // empty when a class is absent
  std::vector<ReliabilityBin> bins;
  std::size_t n = 0;
};

// Equal-width binning over [0, 1]; p lands in bin floor(p*B) clamped to B-1,
// so 1.0 joins the top bin. Empty bins contribute nothing.
double ece(const std::vector<double>& preds, const std::vector<int>& labels, std::size_t bins);

double brier(const std::vector<double>& preds, const std::vector<int>& labels);

// Mann-Whitney formulation with the 0.5 tie convention, computed by rank sum.
std::optional<double> auroc(const std::vector<double>& preds, const std::vector<int>& labels);

std::vector<ReliabilityBin> reliability_bins(const std::vector<double>& preds,
                                             const std::vector<int>& labels,
                                             std::size_t bins);

CalibrationReport calibration_report(const std::vector<double>& preds,
                                     const std::vector<int>& labels, std::size_t bins);

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins);

}  // namespace stlcal
