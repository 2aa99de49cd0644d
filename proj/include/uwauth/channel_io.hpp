#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "uwauth/channel.hpp"
#include "uwauth/error.hpp"
#include "uwauth/scm.hpp"

namespace uwauth {

/// (time index, receiver index) -> arrivals, ordered by time then receiver.
using ArrivalMap = std::map<std::pair<std::int64_t, std::int64_t>, ArrivalSet>;

/// One JSON Lines record: {"t_idx":..,"rx":..,"arrivals":[{"re","im","tau_s"}...]}.
inline std::string arrivals_record(std::int64_t t_idx, std::int64_t rx, const ArrivalSet& arrivals) {
  nlohmann::json j;
  j["t_idx"] = t_idx;
  j["rx"] = rx;
  nlohmann::json list = nlohmann::json::array();
  for (const Arrival& a : arrivals) list.push_back({{"re", a.amplitude.real()}, {"im", a.amplitude.imag()}, {"tau_s", a.delay_s}});
  j["arrivals"] = std::move(list);
  return j.dump() + "\n";
}

inline std::string arrivals_jsonl(const ArrivalMap& map) {
  std::string out;
  for (const auto& [key, set] : map) out += arrivals_record(key.first, key.second, set);
  return out;
}

inline ArrivalMap parse_arrivals(std::istream& in, const std::string& source) {
  using Kind = ParseError::Kind;
  ArrivalMap map;
  std::string line;
  std::size_t number = 0;
  std::int64_t last_t = INT64_MIN;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(Kind::kMalformed, number, source + ": invalid JSON: " + e.what());
    }
    std::int64_t t_idx = 0, rx = 0;
    ArrivalSet set;
    try {
      if (!j.is_object() || !j.at("t_idx").is_number_integer() || !j.at("rx").is_number_integer() || !j.at("arrivals").is_array())
        throw ParseError(Kind::kMalformed, number, source + ": record needs integer t_idx, rx and an arrivals array");
      t_idx = j.at("t_idx").get<std::int64_t>();
      rx = j.at("rx").get<std::int64_t>();
      for (const auto& a : j.at("arrivals")) {
        if (!a.is_object() || !a.at("re").is_number() || !a.at("im").is_number() || !a.at("tau_s").is_number())
          throw ParseError(Kind::kMalformed, number, source + ": arrival needs numeric re, im, tau_s");
        const double re = a.at("re").get<double>(), im = a.at("im").get<double>(), tau = a.at("tau_s").get<double>();
        if (!std::isfinite(re) || !std::isfinite(im) || !std::isfinite(tau))
          throw ParseError(Kind::kNonFinite, number, source + ": non-finite arrival value");
        set.push_back({Complex{re, im}, tau});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(Kind::kMalformed, number, source + ": " + e.what());
    }
    if (t_idx < last_t)
      throw ParseError(Kind::kNonMonotoneTime, number, source + ": t_idx " + std::to_string(t_idx) + " after " + std::to_string(last_t));
    last_t = t_idx;
    if (!map.emplace(std::make_pair(t_idx, rx), std::move(set)).second)
      throw ParseError(Kind::kDuplicateKey, number,
                       source + ": duplicate record for t_idx " + std::to_string(t_idx) + ", rx " + std::to_string(rx));
  }
  return map;
}

inline ArrivalMap parse_arrivals_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_arrivals(in, path);
}

/// Folded SCM tensors of a whole trace as little-endian float64, ordered
/// snapshot, sub-band, row, column. The sidecar records the shape.
inline void write_folded_tensors(const std::vector<ScmTensor>& tensors, const std::string& bin_path, const std::string& json_path) {
  if (tensors.empty()) throw DataError("no tensors to export");
  const Eigen::Index n = tensors.front().receivers();
  const std::size_t k = tensors.front().subbands();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot write " + bin_path);
  for (const ScmTensor& t : tensors) {
    if (t.folded.size() != k || t.receivers() != n) throw DataError("inconsistent tensor shapes in export");
    for (const auto& slice : t.folded) {
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
          const double v = slice(r, c);
          unsigned char bytes[8];
          std::uint64_t bits;
          std::memcpy(&bits, &v, 8);
          for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
          bin.write(reinterpret_cast<const char*>(bytes), 8);
        }
      }
    }
  }
  nlohmann::json side{{"n_rx", n}, {"k", k}, {"snapshots", tensors.size()}, {"layout", "row-major"}, {"dtype", "float64-le"}};
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw DataError("cannot write " + json_path);
  js << side.dump(2) << "\n";
}

}  // namespace uwauth
