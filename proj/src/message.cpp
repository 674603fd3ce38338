#include "robagg/message.hpp"

#include <boost/crc.hpp>

#include <charconv>
#include <cstdio>
#include <vector>

#include "robagg/numkit.hpp"

namespace robagg {

namespace {

void append_real(std::string& out, double v) {
  char buf[40];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

void append_list(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_real(out, v(i));
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
Int parse_int(std::string_view field, const char* name) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw DecodeError(DecodeError::Kind::Malformed, std::string("message: bad ") + name + " field");
  return v;
}

double parse_real(std::string_view field) {
  // from_chars rejects "inf"/"nan" spellings that %.17g may produce, strtod
  // accepts them.
  std::string tmp(field);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size())
    throw DecodeError(DecodeError::Kind::Malformed, "message: bad real '" + tmp + "'");
  return v;
}

Eigen::VectorXd parse_list(std::string_view field, Eigen::Index expected, const char* name) {
  const auto items = split(field, ',');
  if (static_cast<Eigen::Index>(items.size()) != expected)
    throw DecodeError(DecodeError::Kind::Truncated,
                      std::string("message: ") + name + " carries " + std::to_string(items.size()) +
                          " values, expected " + std::to_string(expected));
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v(i) = parse_real(items[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::string encode_message(const LocalEstimate& est) {
  const Eigen::Index p = est.theta_star.size();
  if (est.sigma_star.rows() != p || est.sigma_star.cols() != p)
    throw DomainError("encode_message: sigma dimension does not match theta");
  std::string out(kMessageVersion);
  out += '|' + std::to_string(est.server_id) + '|' + std::to_string(est.n_k) + '|' +
         std::to_string(p) + '|';
  append_list(out, est.theta_star);
  out += '|';
  append_list(out, vech(est.sigma_star));
  char crc_hex[9];
  std::snprintf(crc_hex, sizeof crc_hex, "%08x", static_cast<unsigned>(crc32(out)));
  out += '|';
  out += crc_hex;
  return out;
}

LocalEstimate decode_message(std::string_view bytes) {
  while (!bytes.empty() && (bytes.back() == '\n' || bytes.back() == '\r')) bytes.remove_suffix(1);

  const std::string_view tag = bytes.substr(0, bytes.find('|'));
  if (tag != kMessageVersion)
    throw DecodeError(DecodeError::Kind::Version,
                      "message: unsupported version tag '" + std::string(tag) + "'");

  const std::size_t bar = bytes.rfind('|');
  const std::string_view trailer = bar == std::string_view::npos ? std::string_view{} : bytes.substr(bar + 1);
  std::uint32_t declared = 0;
  const auto [ptr, ec] = std::from_chars(trailer.data(), trailer.data() + trailer.size(), declared, 16);
  if (trailer.size() != 8 || ec != std::errc{} || ptr != trailer.data() + trailer.size())
    throw DecodeError(DecodeError::Kind::Truncated, "message: missing or malformed checksum");
  if (crc32(bytes.substr(0, bar)) != declared)
    throw DecodeError(DecodeError::Kind::Checksum, "message: checksum mismatch");

  const auto fields = split(bytes.substr(0, bar), '|');
  if (fields.size() != 6)
    throw DecodeError(DecodeError::Kind::Truncated, "message: expected 7 fields");

  LocalEstimate est;
  est.server_id = parse_int<int>(fields[1], "server_id");
  est.n_k = parse_int<std::int64_t>(fields[2], "n_k");
  const auto p = parse_int<Eigen::Index>(fields[3], "p");
  if (p < 1) throw DecodeError(DecodeError::Kind::Malformed, "message: p must be >= 1");
  est.theta_star = parse_list(fields[4], p, "theta");
  est.sigma_star = vech_inv(parse_list(fields[5], p * (p + 1) / 2, "vech(sigma)"), p);
  return est;
}

}  // namespace robagg
