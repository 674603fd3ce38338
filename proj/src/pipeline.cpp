#include "robagg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "robagg/error.hpp"
#include "robagg/spatialmed.hpp"

namespace robagg {

namespace {

std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) return cells;
    start = comma + 1;
  }
}

bool parse_cell(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return end == cell.c_str() + cell.size() && std::isfinite(out);
}

}  // namespace

Shard parse_shard_csv(std::string_view text, const std::string& source) {
  Shard shard;
  shard.path = source;
  std::vector<std::vector<double>> rows;
  std::size_t y_col = 0;
  int line_no = 0;
  bool have_header = false;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    std::vector<std::string> cells = split_row(line);
    if (!have_header) {
      shard.header = cells;
      const auto y = std::find(cells.begin(), cells.end(), "y");
      if (y == cells.end()) throw DomainError(source + ": header has no 'y' column");
      if (std::count(cells.begin(), cells.end(), "y") > 1)
        throw DomainError(source + ": header names 'y' more than once");
      y_col = static_cast<std::size_t>(y - cells.begin());
      for (std::size_t j = 0; j < cells.size(); ++j)
        if (j != y_col) shard.covariates.push_back(cells[j]);
      if (shard.covariates.empty()) throw DomainError(source + ": no covariate columns");
      have_header = true;
      continue;
    }
    if (cells.size() != shard.header.size()) {
      std::ostringstream os;
      os << source << ": row " << line_no << " has " << cells.size() << " cells, header has "
         << shard.header.size();
      throw DomainError(os.str());
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_cell(cells[j], row[j])) {
        std::ostringstream os;
        os << source << ": row " << line_no << ", column '" << shard.header[j]
           << "': non-numeric value '" << cells[j] << "'";
        throw DomainError(os.str());
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw DomainError(source + ": empty file");
  if (rows.empty()) throw DomainError(source + ": shard has no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(shard.covariates.size());
  shard.data.x.resize(n, p);
  shard.data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    Eigen::Index j = 0;
    for (std::size_t col = 0; col < row.size(); ++col) {
      if (col == y_col) shard.data.y(i) = row[col];
      else shard.data.x(i, j++) = row[col];
    }
  }
  return shard;
}

Shard read_shard_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open shard file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_shard_csv(buf.str(), path);
}

std::vector<Shard> read_shards(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("no shard files given");
  std::vector<Shard> shards;
  shards.reserve(paths.size());
  for (const auto& path : paths) {
    shards.push_back(read_shard_csv(path));
    if (shards.back().header != shards.front().header)
      throw DomainError(path + ": header differs from " + shards.front().path);
  }
  return shards;
}

PipelineReport fit_aggregate_detect(const std::vector<Shard>& shards, ModelKind model, double c,
                                    double alpha) {
  if (shards.empty()) throw ConfigError("no shards");
  PipelineReport report;
  report.covariates = shards.front().covariates;
  const ModelSpec spec{model, static_cast<Eigen::Index>(report.covariates.size())};

  std::vector<LocalEstimate> estimates;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    try {
      report.fits.push_back(fit_local(spec, shards[k].data, {}, id));
    } catch (const Error& e) {
      throw Error("server " + std::to_string(id) + " (" + shards[k].path + "): " + e.what());
    }
    const LocalFit& f = report.fits.back();
    estimates.push_back({f.server_id, f.n_k, f.theta_hat, f.sigma_hat});
  }
  report.total_n = total_size(estimates);
  report.sigma_s = aggregate_sigma(estimates);
  report.huber = huber_aggregate(estimates, report.sigma_s, HuberConfig{c});
  report.wavg = weighted_average(estimates);
  report.wavg_se = standard_errors(report.wavg.sigma_bar, report.total_n, 1.0);
  report.detection = detect(estimates, report.huber.theta_hat, report.sigma_s, alpha);
  return report;
}

void write_aggregate_csv(const PipelineReport& report, std::ostream& out) {
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << "coefficient,huber,huber_se,weighted_average,weighted_average_se\n";
  for (std::size_t j = 0; j < report.covariates.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    out << report.covariates[j] << ',' << report.huber.theta_hat(i) << ',' << report.huber.se(i)
        << ',' << report.wavg.theta_bar(i) << ',' << report.wavg_se(i) << '\n';
  }
  out.precision(old_precision);
}

void print_report(const PipelineReport& report, std::ostream& out) {
  const auto old_precision = out.precision();
  out << std::setprecision(6);
  out << "servers: " << report.fits.size() << "  N: " << report.total_n
      << "  tau: " << report.huber.tau << '\n';
  out << std::left << std::setw(14) << "coefficient" << std::setw(14) << "huber" << std::setw(14)
      << "se" << std::setw(14) << "w.average" << "se\n";
  for (std::size_t j = 0; j < report.covariates.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    out << std::setw(14) << report.covariates[j] << std::setw(14) << report.huber.theta_hat(i)
        << std::setw(14) << report.huber.se(i) << std::setw(14) << report.wavg.theta_bar(i)
        << report.wavg_se(i) << '\n';
  }
  out << std::right;
  out << "detection (threshold " << report.detection.threshold << ", alpha "
      << report.detection.alpha << ")\n";
  std::vector<int> theta_ids;
  std::vector<int> sigma_ids;
  for (const auto& s : report.detection.servers) {
    if (s.theta_flagged) theta_ids.push_back(s.server_id);
    if (s.sigma_flagged) sigma_ids.push_back(s.server_id);
    if (!s.error.empty()) out << "  server " << s.server_id << ": " << s.error << '\n';
  }
  auto list = [&](const char* label, const std::vector<int>& ids) {
    out << "  " << label << ':';
    if (ids.empty()) out << " none";
    for (int id : ids) out << ' ' << id;
    out << '\n';
  };
  list("theta flagged", theta_ids);
  list("sigma flagged", sigma_ids);
  out.precision(old_precision);
}

}  // namespace robagg
