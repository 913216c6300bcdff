#pragma once

// Model documents (JSON) and policy files (whitespace-separated text).
//
// Model document:
//   {
//     "kind": "absorbing" | "discounted", "beta": 0.9,
//     "grid": [0, 0.5, 1], "actions": 2,
//     "available": [[0, 1], [0]],
//     "kernel":  [[{"to": [[lo, hi, mass], ...], "absorb": m}, null], ...],
//     "rewards": [[[r1, r2], null], ...],
//     "initial": [[lo, hi, mass], ...],
//     "note": "free text"
//   }
// `null` marks an unavailable action. Intervals not listed in "to"/"initial" carry no mass.
//
// Policy file, one interval per line:
//   # policy deterministic      t_lo t_hi action
//   # policy stationary         t_lo t_hi p_0 ... p_{A-1}

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "detpol/error.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"

namespace detpol {

using Json = nlohmann::json;

// Shortest text with 17 significant digits; round-trips every double.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(path.empty() ? key : path + "." + key, "missing field");
  return j.at(key);
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path, "expected a number");
  return j.get<double>();
}

inline const Json& array(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  return j;
}

inline std::string idx(const std::string& path, std::size_t k) { return path + "[" + std::to_string(k) + "]"; }

// [[lo, hi, mass], ...] -> PieceMeasure; gaps between listed intervals get zero mass.
inline PieceMeasure measure_from_json(const Json& j, const std::string& path) {
  array(j, path);
  std::vector<double> t{0.0};
  std::vector<double> masses;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = idx(path, k);
    const Json& e = array(j[k], p);
    if (e.size() != 3) throw ValidationError(p, "expected [lo, hi, mass]");
    double lo = number(e[0], idx(p, 0)), hi = number(e[1], idx(p, 1)), mass = number(e[2], idx(p, 2));
    if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) throw ValidationError(p, "interval must satisfy 0 <= lo < hi <= 1");
    if (!(mass >= 0.0)) throw ValidationError(idx(p, 2), "negative mass");
    if (lo < t.back()) throw ValidationError(p, "intervals must be sorted and disjoint");
    if (lo > t.back()) {
      t.push_back(lo);
      masses.push_back(0.0);
    }
    t.push_back(hi);
    masses.push_back(mass);
  }
  if (t.back() < 1.0) {
    t.push_back(1.0);
    masses.push_back(0.0);
  }
  if (masses.empty()) masses.push_back(0.0);
  if (t.size() == 1) t.push_back(1.0);
  return PieceMeasure(StatePartition(std::move(t)), std::move(masses));
}

inline Json measure_to_json(const PieceMeasure& m) {
  Json out = Json::array();
  if (m.partition().size() == 1 && m.mass(0) == 0.0) return out;
  for (std::size_t k = 0; k < m.partition().size(); ++k) {
    out.push_back({m.partition().lo(k), m.partition().hi(k), m.mass(k)});
  }
  return out;
}

}  // namespace detail

inline AtomlessMDP model_from_json(const Json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ValidationError("", "model document must be a JSON object");
  AtomlessMDP::Spec s;

  const Json& kind = field(doc, "kind", "");
  if (kind == "absorbing") {
    s.kind = ModelKind::absorbing;
  } else if (kind == "discounted") {
    s.kind = ModelKind::discounted;
    s.beta = number(field(doc, "beta", ""), "beta");
  } else {
    throw ValidationError("kind", "expected \"absorbing\" or \"discounted\"");
  }

  const Json& grid = array(field(doc, "grid", ""), "grid");
  std::vector<double> t;
  for (std::size_t k = 0; k < grid.size(); ++k) t.push_back(number(grid[k], idx("grid", k)));
  try {
    s.grid = StatePartition(std::move(t));
  } catch (const ValidationError& e) {
    throw ValidationError("grid", e.what());
  }
  const std::size_t M = s.grid.size();

  const Json& actions = field(doc, "actions", "");
  if (!actions.is_number_integer()) throw ValidationError("actions", "expected an integer");
  s.actions = actions.get<int>();
  if (s.actions < 1 || s.actions > kMaxActions) throw ValidationError("actions", "action count must be in [1, 64]");
  const std::size_t A = static_cast<std::size_t>(s.actions);

  const Json& avail = array(field(doc, "available", ""), "available");
  if (avail.size() != M) throw ValidationError("available", "expected one action list per grid cell");
  for (std::size_t c = 0; c < M; ++c) {
    const Json& list = array(avail[c], idx("available", c));
    std::vector<int> acts;
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (!list[k].is_number_integer()) throw ValidationError(idx(idx("available", c), k), "expected an action index");
      acts.push_back(list[k].get<int>());
    }
    s.available.push_back(std::move(acts));
  }

  const Json& kernel = array(field(doc, "kernel", ""), "kernel");
  const Json& rewards = array(field(doc, "rewards", ""), "rewards");
  if (kernel.size() != M) throw ValidationError("kernel", "expected one row list per grid cell");
  if (rewards.size() != M) throw ValidationError("rewards", "expected one reward list per grid cell");
  s.kernel.resize(M);
  s.rewards.resize(M);
  for (std::size_t c = 0; c < M; ++c) {
    const std::string kp = idx("kernel", c), rp = idx("rewards", c);
    const Json& krow = array(kernel[c], kp);
    const Json& rrow = array(rewards[c], rp);
    if (krow.size() != A) throw ValidationError(kp, "expected one row per action");
    if (rrow.size() != A) throw ValidationError(rp, "expected one reward vector per action");
    for (std::size_t a = 0; a < A; ++a) {
      const std::string kap = idx(kp, a), rap = idx(rp, a);
      if (krow[a].is_null()) {
        s.kernel[c].push_back(KernelRow{PieceMeasure(), 1.0});
      } else {
        KernelRow row;
        row.dest = measure_from_json(field(krow[a], "to", kap), kap + ".to");
        row.absorb = number(field(krow[a], "absorb", kap), kap + ".absorb");
        if (!(row.absorb >= 0.0)) throw ValidationError(kap + ".absorb", "negative mass");
        s.kernel[c].push_back(std::move(row));
      }
      std::vector<double> r;
      if (!rrow[a].is_null()) {
        const Json& rv = array(rrow[a], rap);
        for (std::size_t n = 0; n < rv.size(); ++n) r.push_back(number(rv[n], idx(rap, n)));
      }
      s.rewards[c].push_back(std::move(r));
    }
  }

  s.initial = measure_from_json(field(doc, "initial", ""), "initial");
  if (doc.contains("note")) {
    if (!doc["note"].is_string()) throw ValidationError("note", "expected a string");
    s.note = doc["note"].get<std::string>();
  }
  return AtomlessMDP(std::move(s));
}

inline Json model_to_json(const AtomlessMDP& m) {
  using namespace detail;
  Json doc;
  if (m.kind() == ModelKind::absorbing) {
    doc["kind"] = "absorbing";
  } else {
    doc["kind"] = "discounted";
    doc["beta"] = m.beta();
  }
  doc["grid"] = m.grid().breakpoints();
  doc["actions"] = m.actions();
  Json avail = Json::array(), kernel = Json::array(), rewards = Json::array();
  for (std::size_t c = 0; c < m.cells(); ++c) {
    avail.push_back(actions_of(m.available(c)));
    Json krow = Json::array(), rrow = Json::array();
    for (int a = 0; a < m.actions(); ++a) {
      if (!m.available(c, a)) {
        krow.push_back(nullptr);
        rrow.push_back(nullptr);
        continue;
      }
      krow.push_back({{"to", measure_to_json(m.kernel(c, a).dest)}, {"absorb", m.kernel(c, a).absorb}});
      rrow.push_back(m.reward(c, a));
    }
    kernel.push_back(std::move(krow));
    rewards.push_back(std::move(rrow));
  }
  doc["available"] = std::move(avail);
  doc["kernel"] = std::move(kernel);
  doc["rewards"] = std::move(rewards);
  doc["initial"] = measure_to_json(m.initial());
  if (!m.note().empty()) doc["note"] = m.note();
  return doc;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

inline AtomlessMDP parse_model(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError("", std::string("malformed JSON: ") + e.what());
  }
  return model_from_json(doc);
}

inline AtomlessMDP load_model(const std::string& path) { return parse_model(read_text(path)); }

inline void save_model(const std::string& path, const AtomlessMDP& m) { write_text(path, model_to_json(m).dump(2) + "\n"); }

// ---------------------------------------------------------------------------------------------
// Policy files

using AnyPolicy = std::variant<DeterministicPolicy, StationaryPolicy>;

inline std::string format_policy(const DeterministicPolicy& p) {
  std::string out = "# policy deterministic\n";
  for (std::size_t k = 0; k < p.actions.size(); ++k) {
    out += format_number(p.partition.lo(k)) + " " + format_number(p.partition.hi(k)) + " " + std::to_string(p.actions[k]) + "\n";
  }
  return out;
}

inline std::string format_policy(const StationaryPolicy& p) {
  std::string out = "# policy stationary\n";
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    out += format_number(p.partition.lo(k)) + " " + format_number(p.partition.hi(k));
    for (double x : p.probs[k]) out += " " + format_number(x);
    out += "\n";
  }
  return out;
}

// Without a header line, three columns mean a deterministic policy.
inline AnyPolicy parse_policy(const std::string& text) {
  enum class Kind { unknown, deterministic, stationary } kind = Kind::unknown;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "policy line " + std::to_string(lineno);
    auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::istringstream h(line.substr(hash + 1));
      std::string w1, w2;
      h >> w1 >> w2;
      if (w1 == "policy") {
        if (w2 == "deterministic") kind = Kind::deterministic;
        else if (w2 == "stationary") kind = Kind::stationary;
        else throw ValidationError(where, "unknown policy kind '" + w2 + "'");
      }
      line = line.substr(0, hash);
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ValidationError(where, "not a number: '" + tok + "'");
      }
    }
    if (row.empty()) continue;
    if (row.size() < 3) throw ValidationError(where, "expected t_lo t_hi and at least one more column");
    if (!rows.empty() && row.size() != rows.front().size()) throw ValidationError(where, "inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("policy", "no intervals");
  if (kind == Kind::unknown) kind = rows.front().size() == 3 ? Kind::deterministic : Kind::stationary;
  if (kind == Kind::deterministic && rows.front().size() != 3) {
    throw ValidationError("policy", "deterministic rows need exactly three columns");
  }

  std::vector<double> t{0.0};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::string where = "policy interval " + std::to_string(k);
    if (std::abs(rows[k][0] - t.back()) > StatePartition::kMergeTolerance) {
      throw ValidationError(where, "intervals must tile [0,1] without gaps");
    }
    t.push_back(rows[k][1]);
  }
  if (std::abs(t.back() - 1.0) > StatePartition::kMergeTolerance) throw ValidationError("policy", "intervals must end at 1");
  t.back() = 1.0;
  StatePartition part(std::move(t));

  if (kind == Kind::deterministic) {
    DeterministicPolicy p{part, {}};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      double a = rows[k][2];
      if (a != std::floor(a) || a < 0.0) throw ValidationError("policy interval " + std::to_string(k), "action must be a nonnegative integer");
      p.actions.push_back(static_cast<int>(a));
    }
    return p;
  }
  StationaryPolicy p{part, {}};
  for (auto& row : rows) p.probs.emplace_back(row.begin() + 2, row.end());
  return p;
}

inline AnyPolicy load_policy(const std::string& path) { return parse_policy(read_text(path)); }

// Stationary view of either policy kind.
inline StationaryPolicy as_stationary(const AnyPolicy& p, int actions) {
  if (auto* d = std::get_if<DeterministicPolicy>(&p)) return to_stationary(*d, actions);
  return std::get<StationaryPolicy>(p);
}

}  // namespace detpol
