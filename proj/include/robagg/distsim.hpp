#pragma once

// Simulated distributed system: data generation, sharding, contamination of
// transmitted estimates and the Monte Carlo study harness.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robagg/aggregate.hpp"
#include "robagg/models.hpp"

namespace robagg {

enum class ContaminationKind { None, Omniscient, Gaussian, BitFlip };

std::string_view to_string(ContaminationKind kind);
ContaminationKind parse_contamination_kind(std::string_view name);

struct ContaminationSpec {
  ContaminationKind kind = ContaminationKind::None;
  std::optional<int> count;           // default floor(K^{1/4})
  double omniscient_value = -1e6;     // every coordinate of the replacement
  double gaussian_variance = 200.0;   // theta* ~ N(0, variance I)
  bool randomize_placement = false;   // default: servers 1..count

  int resolved_count(int servers) const;
};

struct StudyConfig {
  ModelKind model = ModelKind::Logistic;
  Eigen::VectorXd theta0 = (Eigen::VectorXd(2) << 2.0, 1.0).finished();
  int servers = 20;            // K
  std::int64_t shard_size = 1000;  // n, so N = n K
  double c = 1.345;
  ContaminationSpec contamination;
  int replicates = 200;
  double alpha = 0.05;
  std::uint64_t base_seed = 20240601;

  void validate() const;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// Independent stream seed for (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// X ~ N(0, I_p); logistic y ~ Bernoulli(sigmoid(x^T theta0)), linear
/// y = x^T theta0 + N(0, 1). Deterministic in `seed`.
Dataset generate_dataset(ModelKind kind, const Eigen::VectorXd& theta0, std::int64_t total,
                         std::uint64_t seed);

/// K contiguous equal shards; N must be divisible by K.
std::vector<Dataset> partition(const Dataset& data, int servers);

struct ContaminatedEstimates {
  std::vector<LocalEstimate> estimates;
  std::vector<int> contaminated_ids;  // server ids whose payload was altered
};

/// Builds the payloads the central processor receives. Contaminated servers
/// transmit the theta* chosen by `spec` and the sandwich variance re-evaluated
/// at theta* on their own shard (pseudo-inverse where the Hessian vanishes).
ContaminatedEstimates contaminate(std::span<const LocalFit> fits, std::span<const Dataset> shards,
                                  ModelKind model, const ContaminationSpec& spec,
                                  std::uint64_t seed);

struct ReplicateRecord {
  int index = 0;
  bool ok = false;
  std::string error;

  Eigen::VectorXd huber_theta;
  Eigen::VectorXd huber_se;
  Eigen::VectorXd wavg_theta;
  Eigen::VectorXd wavg_se;
  double tau = 1.0;

  std::optional<double> detection_ratio;  // absent without contamination
  double clean_flag_rate = 0.0;           // theta-flag rate among clean servers
  std::vector<bool> theta_flagged;        // by server position
  std::vector<bool> sigma_flagged;
};

ReplicateRecord run_replicate(const StudyConfig& config, int replicate_index);

struct CoefficientMetrics {
  double bias = 0.0;
  double sd = 0.0;
  double ase = 0.0;
  double cp = 0.0;
};

struct StudyMetrics {
  std::vector<CoefficientMetrics> huber;
  std::vector<CoefficientMetrics> wavg;
  std::vector<double> re;  // MSE(weighted average) / MSE(Huber)
  std::optional<double> hit_rate;
  double clean_flag_rate = 0.0;
  std::vector<double> server_theta_flag_rate;
  std::vector<double> server_sigma_flag_rate;
  int replicates = 0;  // successful
  int failed = 0;
  double tau = 1.0;
  double runtime_seconds = 0.0;
};

/// Thread count from ROBAGG_THREADS, else the hardware concurrency.
int default_thread_count();

/// Runs every replicate (in parallel when threads > 1) and reduces in
/// replicate order, so results do not depend on the thread count.
StudyMetrics run_study(const StudyConfig& config, int threads = 0);

/// Reduction used by run_study, exposed for testing.
StudyMetrics summarize(const StudyConfig& config, std::span<const ReplicateRecord> records);

/// estimator,coefficient,bias,sd,ase,cp,re,value rows plus summary rows.
void write_metrics_csv(const StudyMetrics& metrics, std::ostream& out);

}  // namespace robagg
