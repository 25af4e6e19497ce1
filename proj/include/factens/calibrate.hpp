#pragma once

// Post-hoc maps from raw P(consistent) to calibrated probabilities.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace factens {

enum class CalibratorKind { Platt, Isotonic, HistogramBinning, BBQ };

inline constexpr CalibratorKind kAllCalibratorKinds[] = {CalibratorKind::Platt, CalibratorKind::Isotonic,
                                                         CalibratorKind::HistogramBinning, CalibratorKind::BBQ};

std::string_view to_string(CalibratorKind k);
CalibratorKind parse_calibrator_kind(std::string_view s);

// Bins [edges[i], edges[i+1]), the last closed; edges strictly increasing
// from 0 to 1.
struct Binning {
    std::vector<double> edges;
    std::vector<double> values;
    std::size_t bin_of(double p) const;
};

struct Calibrator {
    CalibratorKind kind = CalibratorKind::Platt;
    // Platt: sigma(a p + b)
    double a = 1, b = 0;
    int iterations = 0;
    // Isotonic: block lower scores (ascending) and block means.
    std::vector<double> knots;
    std::vector<double> knot_values;
    // HistogramBinning
    Binning histogram;
    // BBQ
    std::vector<Binning> models;
    std::vector<double> weights;
};

inline constexpr std::size_t kDefaultHistogramBins = 10;

// Throws DegenerateLabels when one class is absent.
Calibrator fit_platt(std::span<const double> scores, std::span<const int> labels);
Calibrator fit_isotonic(std::span<const double> scores, std::span<const int> labels);
Calibrator fit_histogram(std::span<const double> scores, std::span<const int> labels,
                         std::size_t bins = kDefaultHistogramBins);
// Candidate bin counts default to 2 .. ceil(2 N^(1/3)).
Calibrator fit_bbq(std::span<const double> scores, std::span<const int> labels,
                   std::optional<std::vector<std::size_t>> bin_counts = std::nullopt);

Calibrator fit_calibrator(CalibratorKind kind, std::span<const double> scores, std::span<const int> labels);

// Equal-frequency edges: each interior edge sits halfway between the sorted
// scores on either side of a quantile cut. Duplicate edges are dropped.
std::vector<double> equal_frequency_edges(std::span<const double> scores, std::size_t bins);

double apply(const Calibrator& c, double p);
std::vector<double> apply_all(const Calibrator& c, std::span<const double> p);

inline constexpr int kCalibratorFormatVersion = 1;

nlohmann::json to_json(const Calibrator& c);
Calibrator calibrator_from_json(const nlohmann::json& j);

}  // namespace factens
