#pragma once

// Real-data path: one CSV file per server, fitted locally, aggregated and
// screened for contaminated estimates.
//
// Shard CSV: a header row naming the columns, one of which is `y`; every
// other column is a covariate, used in header order. All shards must share
// the same header. Server ids are 1..K in the order the files are given.

#include <ostream>
#include <string>
#include <vector>

#include "robagg/aggregate.hpp"
#include "robagg/detect.hpp"
#include "robagg/models.hpp"

namespace robagg {

struct Shard {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::string> covariates;  // header without `y`
  Dataset data;
};

/// Parses shard CSV text; `source` names the input in error messages.
Shard parse_shard_csv(std::string_view text, const std::string& source);
Shard read_shard_csv(const std::string& path);

/// Reads every shard and checks that the headers agree.
std::vector<Shard> read_shards(const std::vector<std::string>& paths);

struct PipelineReport {
  std::vector<std::string> covariates;
  std::vector<LocalFit> fits;
  std::int64_t total_n = 0;
  Eigen::MatrixXd sigma_s;
  AggregationResult huber;
  WeightedAverage wavg;
  Eigen::VectorXd wavg_se;
  DetectionReport detection;
};

PipelineReport fit_aggregate_detect(const std::vector<Shard>& shards, ModelKind model, double c,
                                    double alpha);

/// coefficient,huber,huber_se,weighted_average,weighted_average_se
void write_aggregate_csv(const PipelineReport& report, std::ostream& out);

/// Human-readable summary, 6 significant digits.
void print_report(const PipelineReport& report, std::ostream& out);

}  // namespace robagg
