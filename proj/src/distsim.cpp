#include "robagg/distsim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "robagg/detect.hpp"
#include "robagg/message.hpp"
#include "robagg/spatialmed.hpp"

namespace robagg {

std::string_view to_string(ContaminationKind kind) {
  switch (kind) {
    case ContaminationKind::None: return "none";
    case ContaminationKind::Omniscient: return "omniscient";
    case ContaminationKind::Gaussian: return "gaussian";
    case ContaminationKind::BitFlip: return "bitflip";
  }
  return "none";
}

ContaminationKind parse_contamination_kind(std::string_view name) {
  if (name == "none") return ContaminationKind::None;
  if (name == "omniscient") return ContaminationKind::Omniscient;
  if (name == "gaussian") return ContaminationKind::Gaussian;
  if (name == "bitflip" || name == "bit-flip") return ContaminationKind::BitFlip;
  throw DomainError("unknown contamination '" + std::string(name) +
                    "' (expected none, omniscient, gaussian or bitflip)");
}

int ContaminationSpec::resolved_count(int servers) const {
  if (kind == ContaminationKind::None) return 0;
  if (count) return *count;
  // floor(K^{1/4}) without trusting pow() at exact fourth powers.
  int m = 0;
  while (static_cast<std::int64_t>(m + 1) * (m + 1) * (m + 1) * (m + 1) <= servers) ++m;
  return m;
}

void StudyConfig::validate() const {
  std::ostringstream os;
  if (servers < 1) os << "K must be >= 1";
  else if (shard_size < 1) os << "n must be >= 1";
  else if (replicates < 1) os << "replicates must be >= 1";
  else if (!(c > 0.0)) os << "c must be positive";
  else if (!(alpha > 0.0 && alpha < 1.0)) os << "alpha must lie in (0, 1)";
  else if (theta0.size() < 1) os << "theta0 must be non-empty";
  else if (contamination.count && (*contamination.count < 0 || *contamination.count > servers))
    os << "contamination count must lie in [0, K]";
  else if (!(contamination.gaussian_variance > 0.0)) os << "gaussian variance must be positive";
  else return;
  throw ConfigError("invalid study configuration: " + os.str());
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

Dataset generate_dataset(ModelKind kind, const Eigen::VectorXd& theta0, std::int64_t total,
                         std::uint64_t seed) {
  if (total < 1) throw DomainError("generate_dataset: N must be >= 1");
  const Eigen::Index p = theta0.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Dataset data;
  data.x.resize(total, p);
  data.y.resize(total);
  for (Eigen::Index i = 0; i < total; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) data.x(i, j) = normal(rng);
    const double eta = data.x.row(i).dot(theta0);
    if (kind == ModelKind::Linear) {
      data.y(i) = eta + normal(rng);
    } else {
      const double prob = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
      data.y(i) = uniform(rng) < prob ? 1.0 : 0.0;
    }
  }
  return data;
}

std::vector<Dataset> partition(const Dataset& data, int servers) {
  if (servers < 1) throw ConfigError("partition: K must be >= 1");
  const Eigen::Index total = data.size();
  if (total % servers != 0) {
    std::ostringstream os;
    os << "partition: N=" << total << " is not divisible by K=" << servers;
    throw ConfigError(os.str());
  }
  const Eigen::Index n = total / servers;
  std::vector<Dataset> shards;
  shards.reserve(static_cast<std::size_t>(servers));
  for (int k = 0; k < servers; ++k) {
    Dataset s;
    s.x = data.x.middleRows(k * n, n);
    s.y = data.y.segment(k * n, n);
    shards.push_back(std::move(s));
  }
  return shards;
}

ContaminatedEstimates contaminate(std::span<const LocalFit> fits, std::span<const Dataset> shards,
                                  ModelKind model, const ContaminationSpec& spec,
                                  std::uint64_t seed) {
  if (fits.size() != shards.size()) throw DomainError("contaminate: one shard per fit required");
  const int servers = static_cast<int>(fits.size());
  const int count = spec.resolved_count(servers);
  if (count < 0 || count > servers) throw DomainError("contaminate: count must lie in [0, K]");

  ContaminatedEstimates out;
  out.estimates.reserve(fits.size());
  for (const auto& f : fits) out.estimates.push_back({f.server_id, f.n_k, f.theta_hat, f.sigma_hat});
  if (count == 0) return out;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> positions(fits.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  if (spec.randomize_placement) std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(static_cast<std::size_t>(count));
  std::sort(positions.begin(), positions.end());

  std::normal_distribution<double> normal(0.0, std::sqrt(spec.gaussian_variance));
  for (const std::size_t k : positions) {
    LocalEstimate& est = out.estimates[k];
    const Eigen::Index p = est.theta_star.size();
    switch (spec.kind) {
      case ContaminationKind::Omniscient:
        est.theta_star = Eigen::VectorXd::Constant(p, spec.omniscient_value);
        break;
      case ContaminationKind::Gaussian:
        for (Eigen::Index j = 0; j < p; ++j) est.theta_star(j) = normal(rng);
        break;
      case ContaminationKind::BitFlip:
        est.theta_star = -fits[k].theta_hat;
        break;
      case ContaminationKind::None:
        break;
    }
    const ModelSpec spec_k{model, p};
    est.sigma_star =
        sandwich_variance(spec_k, shards[k], est.theta_star, SingularHessian::PseudoInverse).sigma;
    out.contaminated_ids.push_back(est.server_id);
  }
  return out;
}

ReplicateRecord run_replicate(const StudyConfig& config, int replicate_index) {
  config.validate();
  ReplicateRecord rec;
  rec.index = replicate_index;
  const std::uint64_t seed = derive_seed(config.base_seed, static_cast<std::uint64_t>(replicate_index));
  const Eigen::Index p = config.theta0.size();
  const ModelSpec model{config.model, p};

  try {
    const Dataset data = generate_dataset(config.model, config.theta0,
                                          config.shard_size * config.servers, derive_seed(seed, 0));
    const std::vector<Dataset> shards = partition(data, config.servers);
    std::vector<LocalFit> fits;
    fits.reserve(shards.size());
    for (int k = 0; k < config.servers; ++k)
      fits.push_back(fit_local(model, shards[static_cast<std::size_t>(k)], {}, k + 1));

    const ContaminatedEstimates sent =
        contaminate(fits, shards, config.model, config.contamination, derive_seed(seed, 1));

    // Transport through the wire format.
    std::vector<LocalEstimate> received;
    received.reserve(sent.estimates.size());
    for (const auto& est : sent.estimates) received.push_back(decode_message(encode_message(est)));

    const Eigen::MatrixXd sigma_s = aggregate_sigma(received);
    const AggregationResult huber = huber_aggregate(received, sigma_s, HuberConfig{config.c});
    // Sigma-bar from the repaired matrices; a contaminated server may send one
    // that overflowed.
    std::vector<LocalEstimate> repaired = received;
    for (auto& est : repaired) est.sigma_star = repair_sigma(est.sigma_star, SigmaAggregationOptions{}.eps);
    const WeightedAverage wavg = weighted_average(repaired);
    const std::int64_t total_n = total_size(received);

    rec.huber_theta = huber.theta_hat;
    rec.huber_se = huber.se;
    rec.tau = huber.tau;
    rec.wavg_theta = wavg.theta_bar;
    rec.wavg_se = standard_errors(wavg.sigma_bar, total_n, 1.0);

    const DetectionReport report = detect(received, huber.theta_hat, sigma_s, config.alpha);
    rec.theta_flagged.assign(report.servers.size(), false);
    rec.sigma_flagged.assign(report.servers.size(), false);
    int hits = 0;
    int clean = 0;
    int clean_flagged = 0;
    for (std::size_t k = 0; k < report.servers.size(); ++k) {
      const auto& s = report.servers[k];
      rec.theta_flagged[k] = s.theta_flagged;
      rec.sigma_flagged[k] = s.sigma_flagged;
      const bool bad = std::find(sent.contaminated_ids.begin(), sent.contaminated_ids.end(),
                                 s.server_id) != sent.contaminated_ids.end();
      if (bad && s.theta_flagged) ++hits;
      if (!bad) {
        ++clean;
        if (s.theta_flagged) ++clean_flagged;
      }
    }
    if (!sent.contaminated_ids.empty())
      rec.detection_ratio = static_cast<double>(hits) / static_cast<double>(sent.contaminated_ids.size());
    rec.clean_flag_rate = clean > 0 ? static_cast<double>(clean_flagged) / clean : 0.0;
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

int default_thread_count() {
  if (const char* env = std::getenv("ROBAGG_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

StudyMetrics summarize(const StudyConfig& config, std::span<const ReplicateRecord> records) {
  const Eigen::Index p = config.theta0.size();
  StudyMetrics m;
  m.tau = tau_c(config.c);
  std::vector<const ReplicateRecord*> good;
  for (const auto& r : records) {
    if (r.ok) good.push_back(&r);
    else ++m.failed;
  }
  m.replicates = static_cast<int>(good.size());
  if (good.empty()) return m;
  const double count = static_cast<double>(good.size());

  auto reduce = [&](auto theta_of, auto se_of) {
    std::vector<CoefficientMetrics> out(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
      double mean = 0.0;
      double ase = 0.0;
      double covered = 0.0;
      for (const auto* r : good) {
        const double est = theta_of(*r)(j);
        const double se = se_of(*r)(j);
        mean += est;
        ase += se;
        if (std::abs(est - config.theta0(j)) <= 1.96 * se) covered += 1.0;
      }
      mean /= count;
      double ss = 0.0;
      for (const auto* r : good) ss += (theta_of(*r)(j) - mean) * (theta_of(*r)(j) - mean);
      auto& cm = out[static_cast<std::size_t>(j)];
      cm.bias = mean - config.theta0(j);
      cm.sd = std::sqrt(ss / count);
      cm.ase = ase / count;
      cm.cp = covered / count;
    }
    return out;
  };
  m.huber = reduce([](const ReplicateRecord& r) -> const Eigen::VectorXd& { return r.huber_theta; },
                   [](const ReplicateRecord& r) -> const Eigen::VectorXd& { return r.huber_se; });
  m.wavg = reduce([](const ReplicateRecord& r) -> const Eigen::VectorXd& { return r.wavg_theta; },
                  [](const ReplicateRecord& r) -> const Eigen::VectorXd& { return r.wavg_se; });
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& h = m.huber[static_cast<std::size_t>(j)];
    const auto& w = m.wavg[static_cast<std::size_t>(j)];
    m.re.push_back((w.bias * w.bias + w.sd * w.sd) / (h.bias * h.bias + h.sd * h.sd));
  }

  double hr = 0.0;
  int hr_count = 0;
  double clean_rate = 0.0;
  const std::size_t servers = good.front()->theta_flagged.size();
  m.server_theta_flag_rate.assign(servers, 0.0);
  m.server_sigma_flag_rate.assign(servers, 0.0);
  for (const auto* r : good) {
    if (r->detection_ratio) {
      hr += *r->detection_ratio;
      ++hr_count;
    }
    clean_rate += r->clean_flag_rate;
    for (std::size_t k = 0; k < servers && k < r->theta_flagged.size(); ++k) {
      m.server_theta_flag_rate[k] += r->theta_flagged[k] ? 1.0 : 0.0;
      m.server_sigma_flag_rate[k] += r->sigma_flagged[k] ? 1.0 : 0.0;
    }
  }
  if (hr_count > 0) m.hit_rate = hr / hr_count;
  m.clean_flag_rate = clean_rate / count;
  for (auto& v : m.server_theta_flag_rate) v /= count;
  for (auto& v : m.server_sigma_flag_rate) v /= count;
  return m;
}

StudyMetrics run_study(const StudyConfig& config, int threads) {
  config.validate();
  if (config.replicates < 2) throw ConfigError("run_study: at least 2 replicates are required");
  const auto start = std::chrono::steady_clock::now();
  if (threads <= 0) threads = default_thread_count();
  threads = std::min(threads, config.replicates);

  std::vector<ReplicateRecord> records(static_cast<std::size_t>(config.replicates));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < config.replicates; r = next++)
      records[static_cast<std::size_t>(r)] = run_replicate(config, r);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  StudyMetrics m = summarize(config, records);
  m.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (10 * m.failed > config.replicates) {
    std::string first;
    for (const auto& r : records)
      if (!r.ok) {
        first = r.error;
        break;
      }
    std::ostringstream os;
    os << "run_study: " << m.failed << " of " << config.replicates
       << " replicates failed (first: " << first << ")";
    throw Error(os.str());
  }
  return m;
}

void write_metrics_csv(const StudyMetrics& metrics, std::ostream& out) {
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << "estimator,coefficient,bias,sd,ase,cp,re,value\n";
  auto rows = [&](std::string_view name, const std::vector<CoefficientMetrics>& cm, bool with_re) {
    for (std::size_t j = 0; j < cm.size(); ++j) {
      out << name << ',' << (j + 1) << ',' << cm[j].bias << ',' << cm[j].sd << ',' << cm[j].ase
          << ',' << cm[j].cp << ',';
      if (with_re) out << metrics.re[j];
      out << ",\n";
    }
  };
  rows("huber", metrics.huber, true);
  rows("weighted_average", metrics.wavg, false);
  out << "summary,hr,,,,,,";
  if (metrics.hit_rate) out << *metrics.hit_rate;
  else out << "NA";
  out << '\n';
  out << "summary,clean_flag_rate,,,,,," << metrics.clean_flag_rate << '\n';
  out << "summary,tau,,,,,," << metrics.tau << '\n';
  out << "summary,replicates,,,,,," << metrics.replicates << '\n';
  out << "summary,failed,,,,,," << metrics.failed << '\n';
  out.precision(old_precision);
}

}  // namespace robagg
