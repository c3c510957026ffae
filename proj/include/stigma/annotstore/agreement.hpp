#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stigma/annotstore/dataset.hpp"

namespace stigma::annotstore {

struct WelchResult {
  double mean_1 = 0.0, mean_0 = 0.0;
  std::size_t n_1 = 0, n_0 = 0;
  double t = 0.0;
  double df = 0.0;  // Welch-Satterthwaite
  double p = 1.0;   // two-sided
};

// Welch's unequal-variance t-test. Throws ArgumentError("degenerate group")
// when either group has fewer than 2 observations.
WelchResult welch_t_test(std::span<const double> group_1, std::span<const double> group_0);

struct GroupRateTest {
  Attribute attribute{};
  double rate_1 = 0.0, rate_0 = 0.0;
  WelchResult test;
};

// Compares annotation-level positive-stigma rates between workers with
// attribute = 1 and = 0.
GroupRateTest group_rate_ttest(const CleanDataset& dataset, Attribute attribute);

// One rating: unit (comment), rater (worker) and a nominal value.
struct Rating {
  std::string unit;
  std::string rater;
  int value = 0;
};

struct AlphaResult {
  double alpha = 0.0;
  std::size_t pairable_values = 0;  // values in units with >= 2 ratings
  std::size_t units = 0;            // units with >= 2 ratings
};

/// Krippendorff's alpha for nominal data from the coincidence matrix;
/// missing ratings are simply absent. Throws NumericError("no overlap")
/// if no unit has two ratings, and NumericError("no variation") if all
/// pairable values are identical (alpha undefined).
AlphaResult krippendorff_alpha(std::span<const Rating> ratings);

// Alpha over the dataset's labels, optionally restricted to workers with
// the given attribute value.
AlphaResult krippendorff_alpha(const CleanDataset& dataset,
                               std::optional<std::pair<Attribute, int>> subgroup = std::nullopt);

// One row of the worker demographic summary. Binary measures fill
// count/percent; continuous ones fill mean/sd.
struct DemographicRow {
  std::string measure;
  std::size_t n = 0;
  std::optional<std::size_t> count;
  std::optional<double> percent;
  std::optional<double> mean;
  std::optional<double> sd;
};

std::vector<DemographicRow> demographic_summary(std::span<const WorkerProfile> workers);
void write_demographics(std::ostream& out, std::span<const DemographicRow> rows);

}  // namespace stigma::annotstore
